#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cids/autodiff.hpp"
#include "cids/core.hpp"
#include "cids/embed.hpp"
#include "cids/errors.hpp"

namespace cids {

// ---------------------------------------------------------------------------
// Model configuration

enum class NetEncoderKind { IDENTITY, FCN };

inline std::string_view net_encoder_name(NetEncoderKind k) {
    return k == NetEncoderKind::IDENTITY ? "identity" : "fcn";
}

inline NetEncoderKind parse_net_encoder(std::string_view s) {
    if (s == "identity") return NetEncoderKind::IDENTITY;
    if (s == "fcn") return NetEncoderKind::FCN;
    throw ConfigError("unknown net encoder kind: '" + std::string(s) + "'");
}

struct CidsNetConfig {
    NetEncoderKind net_encoder = NetEncoderKind::FCN;
    std::vector<size_t> net_hidden = {64}; // FCN hidden widths
    size_t net_output = 0;                 // 0 = class count
    size_t event_d_model = 32;
    size_t event_layers = 1;
    size_t event_heads = 4;
    size_t msg_d_model = 32;
    size_t msg_layers = 1;
    size_t msg_heads = 4;
    std::vector<size_t> agg_hidden = {64};
    size_t class_count = 0; // K, filled from the taxonomy
    double alpha = 0.5;
    double lambda = 0.0;
    bool use_c_loss = true;
    size_t event_rows = 28;     // n_max
    size_t event_features = 8;  // m
    size_t msg_tokens = 100;    // i
    size_t msg_embed_dim = 32;  // j
    uint64_t seed = 7;

    size_t net_encoder_width(size_t network_width) const {
        if (net_encoder == NetEncoderKind::IDENTITY) return network_width;
        return net_output == 0 ? class_count : net_output;
    }

    void validate(size_t network_width) const {
        if (class_count < 2) throw ConfigError("model.class_count must be >= 2");
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("model.alpha must lie in [0, 1]");
        if (lambda < 0.0) throw ConfigError("model.lambda must be >= 0");
        if (event_heads == 0 || event_d_model % event_heads != 0)
            throw ConfigError("model.event_d_model must be divisible by model.event_heads");
        if (msg_heads == 0 || msg_d_model % msg_heads != 0)
            throw ConfigError("model.msg_d_model must be divisible by model.msg_heads");
        if (use_c_loss && net_encoder_width(network_width) != class_count)
            throw ConfigError(
                "the combined loss requires the network feature encoder output width to equal the "
                "number of classes (encoder width " +
                std::to_string(net_encoder_width(network_width)) + ", classes " +
                std::to_string(class_count) + ")");
    }
};

// ---------------------------------------------------------------------------
// Per-feature standardization fitted on the training split. Masked event rows
// are untouched (they stay exactly zero).

struct FeatureScaler {
    std::vector<double> net_mean, net_scale;
    std::vector<double> event_mean, event_scale;

    static FeatureScaler identity(size_t network_width, size_t m) {
        FeatureScaler s;
        s.net_mean.assign(network_width, 0.0);
        s.net_scale.assign(network_width, 1.0);
        s.event_mean.assign(m, 0.0);
        s.event_scale.assign(m, 1.0);
        return s;
    }

    static FeatureScaler fit(const std::vector<CidsSample>& samples, size_t network_width, size_t m) {
        FeatureScaler s = identity(network_width, m);
        if (samples.empty()) return s;
        std::vector<double> net_sq(network_width, 0.0);
        std::vector<double> ev_sq(m, 0.0);
        std::fill(s.net_mean.begin(), s.net_mean.end(), 0.0);
        std::fill(s.event_mean.begin(), s.event_mean.end(), 0.0);
        size_t event_rows = 0;
        for (const auto& sample : samples) {
            for (size_t i = 0; i < network_width && i < sample.network_features.size(); ++i) {
                s.net_mean[i] += sample.network_features[i];
                net_sq[i] += sample.network_features[i] * sample.network_features[i];
            }
            for (size_t r = 0; r < sample.event_row_mask.size(); ++r) {
                if (!sample.event_row_mask[r]) continue;
                ++event_rows;
                for (size_t j = 0; j < m && j < sample.event_matrix[r].size(); ++j) {
                    s.event_mean[j] += sample.event_matrix[r][j];
                    ev_sq[j] += sample.event_matrix[r][j] * sample.event_matrix[r][j];
                }
            }
        }
        const double n = static_cast<double>(samples.size());
        for (size_t i = 0; i < network_width; ++i) {
            s.net_mean[i] /= n;
            const double var = net_sq[i] / n - s.net_mean[i] * s.net_mean[i];
            s.net_scale[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
        if (event_rows > 0) {
            const double en = static_cast<double>(event_rows);
            for (size_t j = 0; j < m; ++j) {
                s.event_mean[j] /= en;
                const double var = ev_sq[j] / en - s.event_mean[j] * s.event_mean[j];
                s.event_scale[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
            }
        }
        return s;
    }
};

// ---------------------------------------------------------------------------
// Featurized batch: constant input tensors ready for the forward pass. The
// embedding lookup happens here, outside the autodiff graph, so no gradient
// can reach the frozen table.

struct ModelBatch {
    size_t size = 0;
    nn::Tensor net;    // [B, F]
    nn::Tensor events; // [B, n_max, m]
    std::vector<uint8_t> event_mask;
    nn::Tensor msg; // [B, i, j]
    std::vector<uint8_t> msg_mask;
    std::vector<size_t> labels; // empty when unlabeled
};

class Featurizer {
public:
    Featurizer(const CidsNetConfig& cfg, Tokenizer tokenizer, const EmbeddingTable* table,
               FeatureScaler scaler, const LabelTaxonomy* taxonomy)
        : cfg_(cfg), tokenizer_(tokenizer), table_(table), scaler_(std::move(scaler)),
          taxonomy_(taxonomy) {
        if (table_ == nullptr) throw ConfigError("featurizer requires an embedding table");
        if (table_->dim() != cfg_.msg_embed_dim)
            throw ConfigError("embedding table dim " + std::to_string(table_->dim()) +
                              " does not match model.msg_embed_dim " +
                              std::to_string(cfg_.msg_embed_dim));
        if (tokenizer_.max_tokens != cfg_.msg_tokens)
            throw ConfigError("tokenizer max_tokens does not match model.msg_tokens");
    }

    ModelBatch make_batch(const std::vector<CidsSample>& samples,
                          const std::vector<size_t>& indices, bool with_labels = true) const {
        const size_t B = indices.size();
        const size_t F = scaler_.net_mean.size();
        const size_t n_max = cfg_.event_rows, m = cfg_.event_features;
        const size_t i_tok = cfg_.msg_tokens, j_dim = cfg_.msg_embed_dim;

        ModelBatch batch;
        batch.size = B;
        std::vector<double> net(B * F, 0.0);
        std::vector<double> events(B * n_max * m, 0.0);
        batch.event_mask.assign(B * n_max, 0);
        std::vector<double> msg(B * i_tok * j_dim, 0.0);
        batch.msg_mask.assign(B * i_tok, 0);

        for (size_t b = 0; b < B; ++b) {
            const CidsSample& s = samples[indices[b]];
            if (s.network_features.size() != F)
                throw ShapeError("sample network_features width " +
                                 std::to_string(s.network_features.size()) + ", expected " +
                                 std::to_string(F));
            if (s.event_matrix.size() != n_max)
                throw ShapeError("sample event_matrix rows " + std::to_string(s.event_matrix.size()) +
                                 ", expected " + std::to_string(n_max));
            for (size_t i = 0; i < F; ++i)
                net[b * F + i] = (s.network_features[i] - scaler_.net_mean[i]) / scaler_.net_scale[i];
            for (size_t r = 0; r < n_max; ++r) {
                if (!s.event_row_mask[r]) continue;
                batch.event_mask[b * n_max + r] = 1;
                for (size_t j = 0; j < m; ++j)
                    events[(b * n_max + r) * m + j] =
                        (s.event_matrix[r][j] - scaler_.event_mean[j]) / scaler_.event_scale[j];
            }
            const auto ids = tokenizer_.tokenize(s.message).ids;
            const auto embedded = embed_message(ids, *table_, i_tok);
            std::copy(embedded.matrix.begin(), embedded.matrix.end(), msg.begin() + b * i_tok * j_dim);
            std::copy(embedded.mask.begin(), embedded.mask.end(), batch.msg_mask.begin() + b * i_tok);
            if (with_labels) batch.labels.push_back(taxonomy_->encode(s.label));
        }
        batch.net = nn::Tensor::leaf({B, F}, std::move(net));
        batch.events = nn::Tensor::leaf({B, n_max, m}, std::move(events));
        batch.msg = nn::Tensor::leaf({B, i_tok, j_dim}, std::move(msg));
        return batch;
    }

    const FeatureScaler& scaler() const { return scaler_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

private:
    CidsNetConfig cfg_;
    Tokenizer tokenizer_;
    const EmbeddingTable* table_;
    FeatureScaler scaler_;
    const LabelTaxonomy* taxonomy_;
};

// ---------------------------------------------------------------------------
// Combined loss: alpha * (CE(y, y_n) - lambda * R_enc) + (1 - alpha) * CE(y, y_hat).
// CE takes logits (softmax applied internally) and averages over the batch.
// The regularizer hook is subtracted with weight lambda; both built-in
// encoders supply R_enc = 0.

inline nn::Tensor combined_loss(const std::vector<size_t>& labels, const nn::Tensor& logits,
                                const std::optional<nn::Tensor>& network_logits, double alpha,
                                double lambda, const nn::Tensor& encoder_regularizer) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    const nn::Tensor ce_agg = nn::cross_entropy_logits(logits, labels);
    if (alpha == 0.0) return ce_agg;
    if (!network_logits)
        throw ConfigError("combined loss with alpha > 0 requires network encoder logits");
    nn::Tensor inner = nn::cross_entropy_logits(*network_logits, labels);
    if (lambda != 0.0) inner = nn::add(inner, nn::scale(encoder_regularizer, -lambda));
    if (alpha == 1.0) return inner;
    return nn::add(nn::scale(inner, alpha), nn::scale(ce_agg, 1.0 - alpha));
}

// ---------------------------------------------------------------------------
// The model: network feature encoder (identity or FCN), transformer event
// feature encoder, transformer event message encoder over the frozen
// embeddings, and an FCN aggregator over the concatenated encodings.

struct ForwardOutput {
    nn::Tensor logits;                         // aggregator [B, K]
    std::optional<nn::Tensor> network_logits;  // [B, K] when the C Loss head is on
    nn::Tensor encoder_regularizer;            // scalar hook, 0 for built-in encoders
};

class CidsNet {
public:
    // Fresh, seeded parameters.
    CidsNet(const CidsNetConfig& cfg, size_t network_width)
        : cfg_(cfg), network_width_(network_width), params_(cfg.seed) {
        cfg_.validate(network_width);
        build_params();
        init_positional();
    }

    // Restore from a checkpoint's parameters.
    CidsNet(const CidsNetConfig& cfg, size_t network_width, nn::ParamSet params)
        : cfg_(cfg), network_width_(network_width), params_(std::move(params)) {
        cfg_.validate(network_width);
        init_positional();
        check_params();
    }

    const CidsNetConfig& config() const { return cfg_; }
    size_t network_width() const { return network_width_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    ForwardOutput forward(const ModelBatch& batch) const {
        const size_t B = batch.size;

        // network feature path
        nn::Tensor h_n = batch.net;
        if (cfg_.net_encoder == NetEncoderKind::FCN) {
            for (size_t l = 0; l < cfg_.net_hidden.size(); ++l)
                h_n = nn::relu(nn::dense(h_n, params_.get(layer_name("net", l, "w")),
                                         params_.get(layer_name("net", l, "b"))));
            h_n = nn::dense(h_n, params_.get("net.out.w"), params_.get("net.out.b"));
        }

        // event feature path
        nn::Tensor h_e = encode_sequence("event", batch.events, batch.event_mask, cfg_.event_rows,
                                         cfg_.event_features, cfg_.event_d_model, cfg_.event_layers,
                                         cfg_.event_heads, event_positions_, B);

        // event message path
        nn::Tensor h_m = encode_sequence("msg", batch.msg, batch.msg_mask, cfg_.msg_tokens,
                                         cfg_.msg_embed_dim, cfg_.msg_d_model, cfg_.msg_layers,
                                         cfg_.msg_heads, msg_positions_, B);

        // aggregator
        nn::Tensor h = nn::concat_cols({h_n, h_e, h_m});
        for (size_t l = 0; l < cfg_.agg_hidden.size(); ++l)
            h = nn::relu(nn::dense(h, params_.get(layer_name("agg", l, "w")),
                                   params_.get(layer_name("agg", l, "b"))));
        const nn::Tensor logits = nn::dense(h, params_.get("agg.out.w"), params_.get("agg.out.b"));

        ForwardOutput out{logits, std::nullopt, nn::Tensor::scalar(0.0)};
        if (cfg_.use_c_loss) out.network_logits = h_n;
        return out;
    }

    nn::Tensor loss(const ForwardOutput& out, const std::vector<size_t>& labels) const {
        return combined_loss(labels, out.logits, out.network_logits,
                             cfg_.use_c_loss ? cfg_.alpha : 0.0, cfg_.lambda,
                             out.encoder_regularizer);
    }

private:
    static std::string layer_name(const char* path, size_t layer, const char* kind) {
        return std::string(path) + ".fc" + std::to_string(layer) + "." + kind;
    }

    void build_params() {
        if (cfg_.net_encoder == NetEncoderKind::FCN) {
            size_t width = network_width_;
            for (size_t l = 0; l < cfg_.net_hidden.size(); ++l) {
                params_.add_dense_weight(layer_name("net", l, "w"), width, cfg_.net_hidden[l]);
                params_.add_zeros(layer_name("net", l, "b"), {cfg_.net_hidden[l]});
                width = cfg_.net_hidden[l];
            }
            params_.add_dense_weight("net.out.w", width, cfg_.net_encoder_width(network_width_));
            params_.add_zeros("net.out.b", {cfg_.net_encoder_width(network_width_)});
        }
        build_sequence_params("event", cfg_.event_features, cfg_.event_d_model, cfg_.event_layers);
        build_sequence_params("msg", cfg_.msg_embed_dim, cfg_.msg_d_model, cfg_.msg_layers);

        size_t width = cfg_.net_encoder_width(network_width_) + cfg_.event_d_model + cfg_.msg_d_model;
        for (size_t l = 0; l < cfg_.agg_hidden.size(); ++l) {
            params_.add_dense_weight(layer_name("agg", l, "w"), width, cfg_.agg_hidden[l]);
            params_.add_zeros(layer_name("agg", l, "b"), {cfg_.agg_hidden[l]});
            width = cfg_.agg_hidden[l];
        }
        params_.add_dense_weight("agg.out.w", width, cfg_.class_count);
        params_.add_zeros("agg.out.b", {cfg_.class_count});
    }

    void build_sequence_params(const std::string& path, size_t in_width, size_t d_model,
                               size_t layers) {
        params_.add_dense_weight(path + ".lift.w", in_width, d_model);
        params_.add_zeros(path + ".lift.b", {d_model});
        for (size_t l = 0; l < layers; ++l)
            nn::make_transformer_block_params(params_, path + ".block" + std::to_string(l), d_model);
    }

    void init_positional() {
        event_positions_ = nn::sinusoidal_positions(cfg_.event_rows, cfg_.event_d_model);
        msg_positions_ = nn::sinusoidal_positions(cfg_.msg_tokens, cfg_.msg_d_model);
    }

    void check_params() const {
        if (!params_.contains("agg.out.w"))
            throw InputError("checkpoint does not contain the aggregator output layer");
        if (params_.get("agg.out.w").dim(1) != cfg_.class_count)
            throw ConfigError("checkpoint class count does not match the configuration");
    }

    nn::Tensor encode_sequence(const std::string& path, const nn::Tensor& x,
                               const std::vector<uint8_t>& mask, size_t t_len, size_t in_width,
                               size_t d_model, size_t layers, size_t heads,
                               const std::vector<double>& positions, size_t B) const {
        // lift to d_model, re-mask (the lift bias would otherwise fill padding
        // rows), add positions at real rows, run the stack, pool
        nn::Tensor h = nn::dense(nn::reshape(x, {B * t_len, in_width}), params_.get(path + ".lift.w"),
                                 params_.get(path + ".lift.b"));
        h = nn::mul_row_mask(nn::reshape(h, {B, t_len, d_model}), mask);
        h = nn::add_positional(h, positions, mask);
        for (size_t l = 0; l < layers; ++l) {
            const auto block =
                nn::transformer_block_params_from(params_, path + ".block" + std::to_string(l));
            h = nn::transformer_block(h, mask, block, heads);
        }
        return nn::masked_mean_pool(h, mask);
    }

    CidsNetConfig cfg_;
    size_t network_width_;
    nn::ParamSet params_;
    std::vector<double> event_positions_;
    std::vector<double> msg_positions_;
};

// ---------------------------------------------------------------------------
// Prediction

inline size_t argmax_lowest(const std::vector<double>& v, size_t offset, size_t k) {
    size_t best = 0;
    for (size_t i = 1; i < k; ++i)
        if (v[offset + i] > v[offset + best]) best = i;
    return best;
}

// Batched argmax over the aggregator logits; ties resolve to the lowest index.
inline std::vector<size_t> predict(const CidsNet& net, const ModelBatch& batch) {
    const auto out = net.forward(batch);
    std::vector<size_t> preds(batch.size);
    const size_t K = out.logits.dim(1);
    for (size_t b = 0; b < batch.size; ++b) preds[b] = argmax_lowest(out.logits.values(), b * K, K);
    return preds;
}

// Argmax over the network encoder head alone (the jointly trained NIDS view).
inline std::vector<size_t> predict_network_only(const CidsNet& net, const ModelBatch& batch) {
    if (!net.config().use_c_loss)
        throw ConfigError("network-only prediction requires a model trained with the combined loss");
    const auto out = net.forward(batch);
    std::vector<size_t> preds(batch.size);
    const size_t K = out.network_logits->dim(1);
    for (size_t b = 0; b < batch.size; ++b)
        preds[b] = argmax_lowest(out.network_logits->values(), b * K, K);
    return preds;
}

} // namespace cids
