#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cids/config.hpp"
#include "cids/embed.hpp"
#include "cids/errors.hpp"
#include "cids/manifest.hpp"
#include "cids/trainer.hpp"

namespace cids {

inline nlohmann::json model_config_to_json(const CidsNetConfig& cfg) {
    return nlohmann::json{{"net_encoder", std::string(net_encoder_name(cfg.net_encoder))},
                          {"net_hidden", cfg.net_hidden},
                          {"net_output", cfg.net_output},
                          {"event_d_model", cfg.event_d_model},
                          {"event_layers", cfg.event_layers},
                          {"event_heads", cfg.event_heads},
                          {"msg_d_model", cfg.msg_d_model},
                          {"msg_layers", cfg.msg_layers},
                          {"msg_heads", cfg.msg_heads},
                          {"agg_hidden", cfg.agg_hidden},
                          {"class_count", cfg.class_count},
                          {"alpha", cfg.alpha},
                          {"lambda", cfg.lambda},
                          {"use_c_loss", cfg.use_c_loss},
                          {"event_rows", cfg.event_rows},
                          {"event_features", cfg.event_features},
                          {"msg_tokens", cfg.msg_tokens},
                          {"msg_embed_dim", cfg.msg_embed_dim},
                          {"seed", cfg.seed}};
}

inline CidsNetConfig model_config_from_json(const nlohmann::json& j) {
    CidsNetConfig cfg;
    cfg.net_encoder = parse_net_encoder(j.at("net_encoder").get<std::string>());
    cfg.net_hidden = j.at("net_hidden").get<std::vector<size_t>>();
    cfg.net_output = j.at("net_output").get<size_t>();
    cfg.event_d_model = j.at("event_d_model").get<size_t>();
    cfg.event_layers = j.at("event_layers").get<size_t>();
    cfg.event_heads = j.at("event_heads").get<size_t>();
    cfg.msg_d_model = j.at("msg_d_model").get<size_t>();
    cfg.msg_layers = j.at("msg_layers").get<size_t>();
    cfg.msg_heads = j.at("msg_heads").get<size_t>();
    cfg.agg_hidden = j.at("agg_hidden").get<std::vector<size_t>>();
    cfg.class_count = j.at("class_count").get<size_t>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.use_c_loss = j.at("use_c_loss").get<bool>();
    cfg.event_rows = j.at("event_rows").get<size_t>();
    cfg.event_features = j.at("event_features").get<size_t>();
    cfg.msg_tokens = j.at("msg_tokens").get<size_t>();
    cfg.msg_embed_dim = j.at("msg_embed_dim").get<size_t>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
}

// The model manifest (model.json) plus checkpoint and embedding table are
// enough to reproduce predictions bit-exactly.
inline void save_trained_model(const TrainedModel& model, const EmbeddingTable& table,
                               const TrainConfig& train_cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto checkpoint = (fs::path(dir) / "checkpoint.bin").string();
    const auto embedding = (fs::path(dir) / "embedding.bin").string();
    model.params.save(checkpoint);
    table.save(embedding);

    nlohmann::json j;
    j["version"] = std::string(kVersion);
    j["threads"] = 1;
    j["model"] = model_config_to_json(model.model_config);
    j["train"] = {{"epochs", train_cfg.epochs},
                  {"batch_size", train_cfg.batch_size},
                  {"learning_rate", train_cfg.learning_rate},
                  {"seed", train_cfg.seed},
                  {"split_ratio", train_cfg.split_ratio},
                  {"undersample_benign_fraction", train_cfg.undersample_benign_fraction},
                  {"rare_class_min", train_cfg.rare_class_min}};
    j["labels"] = model.taxonomy.names();
    j["scaler"] = {{"net_mean", model.scaler.net_mean},
                   {"net_scale", model.scaler.net_scale},
                   {"event_mean", model.scaler.event_mean},
                   {"event_scale", model.scaler.event_scale}};
    j["network_width"] = model.scaler.net_mean.size();
    j["checkpoint"] = "checkpoint.bin";
    j["embedding"] = "embedding.bin";
    j["embedding_checksum"] = hex64(table.checksum());
    j["seed"] = model.model_config.seed;

    std::ofstream out(fs::path(dir) / "model.json");
    if (!out) throw InputError("cannot write model manifest in " + dir);
    out << j.dump(2) << '\n';
}

struct LoadedModel {
    TrainedModel model;
    EmbeddingTable table;
    TrainConfig train_cfg;
};

inline LoadedModel load_trained_model(const std::string& model_json_path) {
    namespace fs = std::filesystem;
    std::ifstream in(model_json_path);
    if (!in) throw InputError("cannot open model manifest: " + model_json_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InputError("model manifest is not valid JSON: " + model_json_path);

    const auto dir = fs::path(model_json_path).parent_path();
    LoadedModel out{TrainedModel{model_config_from_json(j.at("model")), nn::ParamSet(0),
                                 FeatureScaler{}, LabelTaxonomy{}, {}},
                    EmbeddingTable::load((dir / j.at("embedding").get<std::string>()).string()),
                    TrainConfig{}};
    out.model.params = nn::ParamSet::load((dir / j.at("checkpoint").get<std::string>()).string());

    auto names = j.at("labels").get<std::vector<std::string>>();
    out.model.taxonomy = LabelTaxonomy::from_names(names);
    if (out.model.taxonomy.names() != names)
        throw InputError("model manifest labels are not in canonical taxonomy order");

    const auto& s = j.at("scaler");
    out.model.scaler.net_mean = s.at("net_mean").get<std::vector<double>>();
    out.model.scaler.net_scale = s.at("net_scale").get<std::vector<double>>();
    out.model.scaler.event_mean = s.at("event_mean").get<std::vector<double>>();
    out.model.scaler.event_scale = s.at("event_scale").get<std::vector<double>>();

    const auto& t = j.at("train");
    out.train_cfg.epochs = t.at("epochs").get<size_t>();
    out.train_cfg.batch_size = t.at("batch_size").get<size_t>();
    out.train_cfg.learning_rate = t.at("learning_rate").get<double>();
    out.train_cfg.seed = t.at("seed").get<uint64_t>();
    out.train_cfg.split_ratio = t.at("split_ratio").get<double>();
    out.train_cfg.undersample_benign_fraction = t.at("undersample_benign_fraction").get<double>();
    out.train_cfg.rare_class_min = t.at("rare_class_min").get<size_t>();

    const auto expect = j.at("embedding_checksum").get<std::string>();
    if (hex64(out.table.checksum()) != expect)
        throw InputError("embedding table checksum mismatch: table was modified after training");
    return out;
}

} // namespace cids
