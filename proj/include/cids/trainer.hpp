#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cids/cidsnet.hpp"
#include "cids/core.hpp"
#include "cids/embed.hpp"
#include "cids/errors.hpp"
#include "cids/metrics.hpp"
#include "cids/rng.hpp"

namespace cids {

struct TrainConfig {
    size_t epochs = 50;
    size_t batch_size = 64;
    double learning_rate = 1e-3;
    uint64_t seed = 7;
    double split_ratio = 2.0 / 3.0;
    double undersample_benign_fraction = 0.5;
    size_t rare_class_min = 20;

    void validate() const {
        if (!(split_ratio > 0.0 && split_ratio < 1.0))
            throw ConfigError("train.split_ratio must lie in (0, 1)");
        if (!(undersample_benign_fraction > 0.0 && undersample_benign_fraction <= 1.0))
            throw ConfigError("train.undersample_benign_fraction must lie in (0, 1]");
        if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    }
};

// ---------------------------------------------------------------------------
// Dataset preparation. Classes are always visited in sorted-name order so
// results depend only on (samples, seed), not on input file ordering quirks.

namespace detail {

inline std::map<std::string, std::vector<size_t>> group_by_label(const std::vector<CidsSample>& samples) {
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < samples.size(); ++i) groups[samples[i].label].push_back(i);
    return groups;
}

} // namespace detail

// Stratified split: each class is shuffled and split independently at the
// ratio (train size rounded down). Deterministic given the seed.
inline std::pair<std::vector<CidsSample>, std::vector<CidsSample>>
split_dataset(const std::vector<CidsSample>& samples, double ratio, uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
    auto groups = detail::group_by_label(samples);
    Rng rng(seed);
    std::vector<CidsSample> train, test;
    for (auto& [label, indices] : groups) {
        if (indices.size() < 2)
            throw InputError("cannot stratify class '" + label + "' with fewer than 2 samples");
        rng.shuffle(indices);
        const size_t n_train = static_cast<size_t>(static_cast<double>(indices.size()) * ratio);
        for (size_t i = 0; i < indices.size(); ++i)
            (i < n_train ? train : test).push_back(samples[indices[i]]);
    }
    return {std::move(train), std::move(test)};
}

struct UndersampleResult {
    std::vector<CidsSample> samples;
    bool class_present = false;
    size_t kept = 0;
    size_t removed = 0;
};

// Keeps floor(fraction * count) samples of the named class, uniformly at
// random without replacement; all other classes pass through untouched.
inline UndersampleResult undersample_class(const std::vector<CidsSample>& samples,
                                           const std::string& class_name, double fraction,
                                           uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("undersample fraction must lie in (0, 1]");
    UndersampleResult result;
    std::vector<size_t> class_indices;
    for (size_t i = 0; i < samples.size(); ++i)
        if (samples[i].label == class_name) class_indices.push_back(i);
    if (class_indices.empty()) {
        result.samples = samples;
        return result;
    }
    result.class_present = true;
    Rng rng(seed);
    rng.shuffle(class_indices);
    const size_t keep = static_cast<size_t>(fraction * static_cast<double>(class_indices.size()));
    std::vector<uint8_t> drop(samples.size(), 0);
    for (size_t i = keep; i < class_indices.size(); ++i) drop[class_indices[i]] = 1;
    for (size_t i = 0; i < samples.size(); ++i)
        if (!drop[i]) result.samples.push_back(samples[i]);
    result.kept = keep;
    result.removed = class_indices.size() - keep;
    return result;
}

struct DropRareResult {
    std::vector<CidsSample> samples;
    std::vector<std::pair<std::string, size_t>> dropped; // name, count
};

// Removes every sample of any class with fewer than min_count members.
inline DropRareResult drop_rare_classes(const std::vector<CidsSample>& samples, size_t min_count) {
    DropRareResult result;
    std::map<std::string, size_t> counts;
    for (const auto& s : samples) ++counts[s.label];
    for (const auto& [name, count] : counts)
        if (count < min_count) result.dropped.emplace_back(name, count);
    for (const auto& s : samples)
        if (counts[s.label] >= min_count) result.samples.push_back(s);
    return result;
}

// Fixed preprocessing order: rare-class elimination on raw counts, then
// benign undersampling, then the stratified split. (Samples lacking host
// data were already dropped at alignment when the EXCLUDE policy is on.)
struct PreparedDataset {
    std::vector<CidsSample> train;
    std::vector<CidsSample> test;
    std::vector<std::pair<std::string, size_t>> dropped_classes;
    LabelTaxonomy taxonomy;
};

inline PreparedDataset prepare_dataset(const std::vector<CidsSample>& samples,
                                       const TrainConfig& cfg) {
    cfg.validate();
    PreparedDataset out;
    auto rare = drop_rare_classes(samples, cfg.rare_class_min);
    out.dropped_classes = std::move(rare.dropped);
    auto under = undersample_class(rare.samples, std::string(kBenignLabel),
                                   cfg.undersample_benign_fraction, cfg.seed);
    auto [train, test] = split_dataset(under.samples, cfg.split_ratio, cfg.seed);
    out.train = std::move(train);
    out.test = std::move(test);
    std::vector<std::string> names;
    for (const auto& s : out.train) names.push_back(s.label);
    out.taxonomy = LabelTaxonomy::from_names(std::move(names));
    return out;
}

// ---------------------------------------------------------------------------
// Training loop: epochs x minibatch Adam on the combined loss, batch order
// reshuffled every epoch from one seeded generator.

struct TrainedModel {
    CidsNetConfig model_config;
    nn::ParamSet params;
    FeatureScaler scaler;
    LabelTaxonomy taxonomy;
    std::vector<double> epoch_losses;
};

inline TrainedModel train(const std::vector<CidsSample>& train_set, CidsNetConfig model_cfg,
                          const TrainConfig& train_cfg, const EmbeddingTable& table,
                          const LabelTaxonomy& taxonomy) {
    train_cfg.validate();
    if (train_set.empty()) throw InputError("training set is empty");
    const size_t network_width = train_set[0].network_features.size();
    model_cfg.class_count = taxonomy.size();
    model_cfg.validate(network_width);

    Tokenizer tokenizer;
    tokenizer.max_tokens = model_cfg.msg_tokens;
    tokenizer.vocab_buckets = table.vocab();
    const auto scaler =
        FeatureScaler::fit(train_set, network_width, model_cfg.event_features);
    Featurizer featurizer(model_cfg, tokenizer, &table, scaler, &taxonomy);

    CidsNet net(model_cfg, network_width);
    nn::AdamState adam;
    Rng order_rng(train_cfg.seed);
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> epoch_losses;
    for (size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            const size_t end = std::min(order.size(), start + train_cfg.batch_size);
            const std::vector<size_t> indices(order.begin() + start, order.begin() + end);
            try {
                const auto batch = featurizer.make_batch(train_set, indices);
                const auto out = net.forward(batch);
                const auto loss = net.loss(out, batch.labels);
                net.params().zero_grad();
                nn::backward(loss);
                adam.step(net.params(), train_cfg.learning_rate);
                loss_sum += loss.item() * static_cast<double>(indices.size());
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(start / train_cfg.batch_size) + ": " + e.what());
            }
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
    }

    return TrainedModel{model_cfg, std::move(net.params()), scaler, taxonomy,
                        std::move(epoch_losses)};
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline MetricsReport evaluate_with(const TrainedModel& model, const std::vector<CidsSample>& test_set,
                                   const EmbeddingTable& table, bool network_only) {
    if (test_set.empty()) throw InputError("evaluation set is empty");
    const size_t K = model.taxonomy.size();
    Tokenizer tokenizer;
    tokenizer.max_tokens = model.model_config.msg_tokens;
    tokenizer.vocab_buckets = table.vocab();
    Featurizer featurizer(model.model_config, tokenizer, &table, model.scaler, &model.taxonomy);
    CidsNet net(model.model_config, model.scaler.net_mean.size(), model.params);

    std::vector<std::vector<size_t>> confusion(K, std::vector<size_t>(K, 0));
    const size_t eval_batch = 256;
    for (size_t start = 0; start < test_set.size(); start += eval_batch) {
        const size_t end = std::min(test_set.size(), start + eval_batch);
        std::vector<size_t> indices(end - start);
        std::iota(indices.begin(), indices.end(), start);
        const auto batch = featurizer.make_batch(test_set, indices);
        const auto preds = network_only ? predict_network_only(net, batch) : predict(net, batch);
        for (size_t b = 0; b < preds.size(); ++b) ++confusion[batch.labels[b]][preds[b]];
    }
    return metrics_from_confusion(confusion, model.taxonomy.names());
}

} // namespace detail

inline MetricsReport evaluate(const TrainedModel& model, const std::vector<CidsSample>& test_set,
                              const EmbeddingTable& table) {
    return detail::evaluate_with(model, test_set, table, false);
}

// Metrics of the network encoder head used standalone as a classifier.
inline MetricsReport evaluate_network_only(const TrainedModel& model,
                                           const std::vector<CidsSample>& test_set,
                                           const EmbeddingTable& table) {
    if (!model.model_config.use_c_loss)
        throw ConfigError("network-only evaluation requires a model trained with the combined loss");
    return detail::evaluate_with(model, test_set, table, true);
}

} // namespace cids
