#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "cids/align.hpp"
#include "cids/cidsnet.hpp"
#include "cids/errors.hpp"
#include "cids/trainer.hpp"

namespace cids {

inline constexpr std::string_view kVersion = "0.1.0";

struct EmbedConfig {
    size_t max_tokens = 100;
    size_t dim = 32;
    size_t vocab_buckets = 4096;
    uint64_t seed = 1234;
};

// One config file drives every pipeline stage; CLI flags override file
// values. All keys optional, unknown keys rejected.
struct PipelineConfig {
    AlignConfig align;
    EmbedConfig embed;
    CidsNetConfig model;
    TrainConfig train;

    static PipelineConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
        return from_json(j);
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig cfg;
        const std::set<std::string> sections = {"align", "embed", "model", "train"};
        for (const auto& [key, value] : j.items())
            if (!sections.count(key)) throw ConfigError("unknown config section: '" + key + "'");

        if (j.contains("align")) parse_align(j.at("align"), cfg.align);
        if (j.contains("embed")) parse_embed(j.at("embed"), cfg.embed);
        if (j.contains("model")) parse_model(j.at("model"), cfg.model);
        if (j.contains("train")) parse_train(j.at("train"), cfg.train);

        cfg.model.event_rows = cfg.align.n_max;
        cfg.model.event_features = cfg.align.m;
        cfg.model.msg_tokens = cfg.embed.max_tokens;
        cfg.model.msg_embed_dim = cfg.embed.dim;
        return cfg;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["align"] = {{"ip_match_mode", ip_match_mode_name(align.ip_match_mode)},
                      {"n_max", align.n_max},
                      {"truncation", truncation_name(align.truncation)},
                      {"missing_host_policy", missing_host_policy_name(align.missing_host_policy)},
                      {"separator", align.message_separator}};
        j["embed"] = {{"max_tokens", embed.max_tokens},
                      {"dim", embed.dim},
                      {"vocab_buckets", embed.vocab_buckets},
                      {"seed", embed.seed}};
        j["model"] = {{"net_encoder", std::string(net_encoder_name(model.net_encoder))},
                      {"net_hidden", model.net_hidden},
                      {"net_output", model.net_output},
                      {"event_d_model", model.event_d_model},
                      {"event_layers", model.event_layers},
                      {"event_heads", model.event_heads},
                      {"msg_d_model", model.msg_d_model},
                      {"msg_layers", model.msg_layers},
                      {"msg_heads", model.msg_heads},
                      {"agg_hidden", model.agg_hidden},
                      {"alpha", model.alpha},
                      {"lambda", model.lambda},
                      {"use_c_loss", model.use_c_loss},
                      {"seed", model.seed}};
        j["train"] = {{"epochs", train.epochs},
                      {"batch_size", train.batch_size},
                      {"learning_rate", train.learning_rate},
                      {"seed", train.seed},
                      {"split_ratio", train.split_ratio},
                      {"undersample_benign_fraction", train.undersample_benign_fraction},
                      {"rare_class_min", train.rare_class_min}};
        return j;
    }

    static std::string ip_match_mode_name(IpMatchMode m) {
        switch (m) {
        case IpMatchMode::EITHER_ENDPOINT: return "either_endpoint";
        case IpMatchMode::DST_ONLY: return "dst_only";
        case IpMatchMode::SRC_ONLY: return "src_only";
        }
        return "either_endpoint";
    }

    static std::string truncation_name(Truncation t) {
        return t == Truncation::KEEP_LATEST ? "keep_latest" : "keep_earliest";
    }

    static std::string missing_host_policy_name(MissingHostPolicy p) {
        return p == MissingHostPolicy::EXCLUDE ? "exclude" : "zero_pad";
    }

private:
    template <typename T>
    static void read_key(const nlohmann::json& j, const char* key, T& out) {
        if (!j.contains(key)) return;
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("config key '") + key + "' has the wrong type");
        }
    }

    static void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                           const char* section) {
        for (const auto& [key, value] : j.items())
            if (!known.count(key))
                throw ConfigError("unknown config key '" + key + "' in section '" + section + "'");
    }

    static void parse_align(const nlohmann::json& j, AlignConfig& cfg) {
        check_keys(j, {"ip_match_mode", "n_max", "truncation", "missing_host_policy", "separator"},
                   "align");
        std::string mode;
        read_key(j, "ip_match_mode", mode);
        if (!mode.empty()) {
            if (mode == "either_endpoint") cfg.ip_match_mode = IpMatchMode::EITHER_ENDPOINT;
            else if (mode == "dst_only") cfg.ip_match_mode = IpMatchMode::DST_ONLY;
            else if (mode == "src_only") cfg.ip_match_mode = IpMatchMode::SRC_ONLY;
            else throw ConfigError("unknown align.ip_match_mode: '" + mode + "'");
        }
        read_key(j, "n_max", cfg.n_max);
        if (cfg.n_max < 1) throw ConfigError("align.n_max must be >= 1");
        std::string trunc;
        read_key(j, "truncation", trunc);
        if (!trunc.empty()) {
            if (trunc == "keep_latest") cfg.truncation = Truncation::KEEP_LATEST;
            else if (trunc == "keep_earliest") cfg.truncation = Truncation::KEEP_EARLIEST;
            else throw ConfigError("unknown align.truncation: '" + trunc + "'");
        }
        std::string policy;
        read_key(j, "missing_host_policy", policy);
        if (!policy.empty()) {
            if (policy == "exclude") cfg.missing_host_policy = MissingHostPolicy::EXCLUDE;
            else if (policy == "zero_pad") cfg.missing_host_policy = MissingHostPolicy::ZERO_PAD;
            else throw ConfigError("unknown align.missing_host_policy: '" + policy + "'");
        }
        read_key(j, "separator", cfg.message_separator);
    }

    static void parse_embed(const nlohmann::json& j, EmbedConfig& cfg) {
        check_keys(j, {"max_tokens", "dim", "vocab_buckets", "seed"}, "embed");
        read_key(j, "max_tokens", cfg.max_tokens);
        read_key(j, "dim", cfg.dim);
        read_key(j, "vocab_buckets", cfg.vocab_buckets);
        read_key(j, "seed", cfg.seed);
        if (cfg.max_tokens < 1) throw ConfigError("embed.max_tokens must be >= 1");
        if (cfg.dim < 1) throw ConfigError("embed.dim must be >= 1");
        if (cfg.vocab_buckets < 2) throw ConfigError("embed.vocab_buckets must be >= 2");
    }

    static void parse_model(const nlohmann::json& j, CidsNetConfig& cfg) {
        check_keys(j,
                   {"net_encoder", "net_hidden", "net_output", "event_d_model", "event_layers",
                    "event_heads", "msg_d_model", "msg_layers", "msg_heads", "agg_hidden", "alpha",
                    "lambda", "use_c_loss", "seed"},
                   "model");
        std::string kind;
        read_key(j, "net_encoder", kind);
        if (!kind.empty()) cfg.net_encoder = parse_net_encoder(kind);
        read_key(j, "net_hidden", cfg.net_hidden);
        read_key(j, "net_output", cfg.net_output);
        read_key(j, "event_d_model", cfg.event_d_model);
        read_key(j, "event_layers", cfg.event_layers);
        read_key(j, "event_heads", cfg.event_heads);
        read_key(j, "msg_d_model", cfg.msg_d_model);
        read_key(j, "msg_layers", cfg.msg_layers);
        read_key(j, "msg_heads", cfg.msg_heads);
        read_key(j, "agg_hidden", cfg.agg_hidden);
        read_key(j, "alpha", cfg.alpha);
        read_key(j, "lambda", cfg.lambda);
        read_key(j, "use_c_loss", cfg.use_c_loss);
        read_key(j, "seed", cfg.seed);
        if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("model.alpha must lie in [0, 1]");
        if (cfg.lambda < 0.0) throw ConfigError("model.lambda must be >= 0");
    }

    static void parse_train(const nlohmann::json& j, TrainConfig& cfg) {
        check_keys(j,
                   {"epochs", "batch_size", "learning_rate", "seed", "split_ratio",
                    "undersample_benign_fraction", "rare_class_min"},
                   "train");
        read_key(j, "epochs", cfg.epochs);
        read_key(j, "batch_size", cfg.batch_size);
        read_key(j, "learning_rate", cfg.learning_rate);
        read_key(j, "seed", cfg.seed);
        read_key(j, "split_ratio", cfg.split_ratio);
        read_key(j, "undersample_benign_fraction", cfg.undersample_benign_fraction);
        read_key(j, "rare_class_min", cfg.rare_class_min);
        cfg.validate();
    }
};

} // namespace cids
