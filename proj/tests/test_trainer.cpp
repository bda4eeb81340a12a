#include <catch_amalgamated.hpp>

#include <map>
#include <set>

#include "cids/rng.hpp"
#include "cids/trainer.hpp"

using namespace cids;

namespace {

CidsSample tiny_sample(const std::string& label, double net_tag, const std::string& msg,
                       size_t rows = 1, size_t n_max = 4) {
    CidsSample s;
    s.network_features = {net_tag, net_tag * 2.0, -net_tag, 1.0, 0.5};
    s.event_matrix.assign(n_max, std::vector<double>(8, 0.0));
    s.event_row_mask.assign(n_max, 0);
    for (size_t r = 0; r < rows; ++r) {
        s.event_row_mask[r] = 1;
        for (size_t j = 0; j < 8; ++j) s.event_matrix[r][j] = net_tag + double(j);
    }
    s.message = msg;
    s.label = label;
    return s;
}

std::vector<CidsSample> make_class(const std::string& label, size_t count, double tag,
                                   const std::string& msg) {
    std::vector<CidsSample> out;
    for (size_t i = 0; i < count; ++i)
        out.push_back(tiny_sample(label, tag + 0.01 * double(i), msg));
    return out;
}

std::map<std::string, size_t> count_labels(const std::vector<CidsSample>& samples) {
    std::map<std::string, size_t> counts;
    for (const auto& s : samples) ++counts[s.label];
    return counts;
}

CidsNetConfig tiny_model_config() {
    CidsNetConfig cfg;
    cfg.net_hidden = {8};
    cfg.event_d_model = 4;
    cfg.event_layers = 1;
    cfg.event_heads = 1;
    cfg.msg_d_model = 4;
    cfg.msg_layers = 1;
    cfg.msg_heads = 1;
    cfg.agg_hidden = {8};
    cfg.event_rows = 4;
    cfg.event_features = 8;
    cfg.msg_tokens = 8;
    cfg.msg_embed_dim = 4;
    cfg.seed = 5;
    return cfg;
}

} // namespace

TEST_CASE("split_dataset splits each class at the ratio") {
    auto samples = make_class("Benign", 100, 0.0, "ok");
    auto [train, test] = split_dataset(samples, 0.7, 42);
    CHECK(train.size() == 70);
    CHECK(test.size() == 30);

    auto two = make_class("Benign", 100, 0.0, "ok");
    auto attack = make_class("Bot", 10, 1.0, "bad");
    two.insert(two.end(), attack.begin(), attack.end());
    auto [t2, e2] = split_dataset(two, 0.5, 42);
    CHECK(count_labels(t2)["Benign"] == 50);
    CHECK(count_labels(e2)["Benign"] == 50);
    CHECK(count_labels(t2)["Bot"] == 5);
    CHECK(count_labels(e2)["Bot"] == 5);
}

TEST_CASE("split_dataset is deterministic and exhaustive") {
    auto samples = make_class("Benign", 40, 0.0, "ok");
    auto attack = make_class("Bot", 11, 1.0, "bad");
    samples.insert(samples.end(), attack.begin(), attack.end());
    auto [t1, e1] = split_dataset(samples, 2.0 / 3.0, 9);
    auto [t2, e2] = split_dataset(samples, 2.0 / 3.0, 9);
    CHECK(t1.size() == t2.size());
    CHECK(e1.size() == e2.size());
    CHECK(t1.size() + e1.size() == samples.size());
    for (size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);
}

TEST_CASE("split_dataset rejects unsplittable classes") {
    auto samples = make_class("Benign", 10, 0.0, "ok");
    samples.push_back(tiny_sample("Lonely", 5.0, "x"));
    CHECK_THROWS_WITH(split_dataset(samples, 0.5, 1), Catch::Matchers::ContainsSubstring("Lonely"));
}

TEST_CASE("undersample_class halves the named class only") {
    auto samples = make_class("Benign", 1000, 0.0, "ok");
    auto attack = make_class("Bot", 77, 1.0, "bad");
    samples.insert(samples.end(), attack.begin(), attack.end());
    const auto result = undersample_class(samples, "Benign", 0.5, 3);
    CHECK(result.class_present);
    const auto counts = count_labels(result.samples);
    CHECK(counts.at("Benign") == 500);
    CHECK(counts.at("Bot") == 77);
    CHECK(result.kept == 500);
    CHECK(result.removed == 500);
}

TEST_CASE("undersample_class with fraction one is the identity") {
    const auto samples = make_class("Benign", 31, 0.0, "ok");
    const auto result = undersample_class(samples, "Benign", 1.0, 3);
    CHECK(result.samples.size() == 31);
    CHECK(result.removed == 0);
}

TEST_CASE("undersample_class of an absent class is a no-op") {
    const auto samples = make_class("Benign", 10, 0.0, "ok");
    const auto result = undersample_class(samples, "Ghost", 0.5, 3);
    CHECK_FALSE(result.class_present);
    CHECK(result.samples.size() == 10);
}

TEST_CASE("drop_rare_classes removes exactly the classes below the threshold") {
    std::vector<CidsSample> samples;
    for (const auto& [name, count] : std::map<std::string, size_t>{{"web-brute", 15},
                                                                   {"xss-brute", 6},
                                                                   {"infiltration", 8},
                                                                   {"sql-injection", 8},
                                                                   {"Benign", 250},
                                                                   {"Bot", 40}}) {
        auto c = make_class(name, count, 1.0, "m");
        samples.insert(samples.end(), c.begin(), c.end());
    }
    const auto result = drop_rare_classes(samples, 20);
    const auto counts = count_labels(result.samples);
    CHECK(counts.size() == 2);
    CHECK(counts.at("Benign") == 250);
    CHECK(counts.at("Bot") == 40);
    REQUIRE(result.dropped.size() == 4);
    std::set<std::string> dropped_names;
    for (const auto& [name, count] : result.dropped) dropped_names.insert(name);
    CHECK(dropped_names ==
          std::set<std::string>{"web-brute", "xss-brute", "infiltration", "sql-injection"});
}

TEST_CASE("drop_rare_classes with threshold zero is the identity") {
    const auto samples = make_class("Benign", 5, 0.0, "ok");
    const auto result = drop_rare_classes(samples, 0);
    CHECK(result.samples.size() == 5);
    CHECK(result.dropped.empty());
}

TEST_CASE("prepare_dataset applies rare-class elimination before undersampling") {
    // 30 benign raw (>= 20 stays), then halved to 15; wrong order would drop it
    auto samples = make_class("Benign", 30, 0.0, "ok");
    auto bot = make_class("Bot", 25, 1.0, "bad");
    samples.insert(samples.end(), bot.begin(), bot.end());
    TrainConfig cfg;
    cfg.rare_class_min = 20;
    cfg.undersample_benign_fraction = 0.5;
    cfg.split_ratio = 0.6;
    cfg.seed = 4;
    const auto prepared = prepare_dataset(samples, cfg);
    const auto train_counts = count_labels(prepared.train);
    const auto test_counts = count_labels(prepared.test);
    CHECK(train_counts.at("Benign") + test_counts.at("Benign") == 15);
    CHECK(train_counts.at("Bot") + test_counts.at("Bot") == 25);
    CHECK(prepared.dropped_classes.empty());
    CHECK(prepared.taxonomy.encode("Benign") == 0);
}

TEST_CASE("metrics of a perfect prediction") {
    const std::vector<std::vector<size_t>> confusion = {{10, 0}, {0, 20}};
    const auto r = metrics_from_confusion(confusion, {"Benign", "Bot"});
    for (const auto& c : r.per_class) {
        CHECK(c.precision == 1.0);
        CHECK(c.recall == 1.0);
        CHECK(c.f1 == 1.0);
    }
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.weighted_f1 == 1.0);
    CHECK(r.total == 30);
}

TEST_CASE("metrics of a fully misassigned class") {
    const std::vector<std::vector<size_t>> confusion = {{10, 0}, {5, 0}};
    const auto r = metrics_from_confusion(confusion, {"Benign", "Bot"});
    CHECK(r.per_class[1].f1 == 0.0);
    CHECK(r.per_class[1].recall == 0.0);
    CHECK(r.per_class[1].precision == 0.0); // 0/0 rule
}

TEST_CASE("metrics direct substitution") {
    // class 0: TP=8, FN=2 (row sum 10); FP=2 from class 1
    const std::vector<std::vector<size_t>> confusion = {{8, 2}, {2, 38}};
    const auto r = metrics_from_confusion(confusion, {"a", "b"});
    CHECK_THAT(r.per_class[0].precision, Catch::Matchers::WithinAbs(0.8, 1e-12));
    CHECK_THAT(r.per_class[0].recall, Catch::Matchers::WithinAbs(0.8, 1e-12));
    CHECK_THAT(r.per_class[0].f1, Catch::Matchers::WithinAbs(0.8, 1e-12));
}

TEST_CASE("macro and weighted averages recompute from the confusion matrix") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t k = static_cast<size_t>(rng.uniform_int(2, 6));
        std::vector<std::vector<size_t>> confusion(k, std::vector<size_t>(k, 0));
        std::vector<std::string> names;
        for (size_t i = 0; i < k; ++i) {
            names.push_back("c" + std::to_string(i));
            for (size_t j = 0; j < k; ++j)
                confusion[i][j] = static_cast<size_t>(rng.uniform_int(0, 50));
        }
        const auto r = metrics_from_confusion(confusion, names);

        double macro = 0.0, weighted = 0.0;
        size_t total = 0;
        for (const auto& c : r.per_class) total += c.support;
        for (const auto& c : r.per_class) {
            macro += c.f1 / static_cast<double>(k);
            weighted += c.f1 * static_cast<double>(c.support) / static_cast<double>(total);
        }
        CHECK_THAT(r.macro_f1, Catch::Matchers::WithinAbs(macro, 1e-12));
        CHECK_THAT(r.weighted_f1, Catch::Matchers::WithinAbs(weighted, 1e-12));

        // confusion row sums equal supports
        for (size_t i = 0; i < k; ++i) {
            size_t row = 0;
            for (size_t j = 0; j < k; ++j) row += confusion[i][j];
            CHECK(row == r.per_class[i].support);
        }
    }
}

TEST_CASE("metrics text table has per-class rows plus macro and weighted rows") {
    const std::vector<std::vector<size_t>> confusion = {{10, 0}, {1, 19}};
    const auto r = metrics_from_confusion(confusion, {"Benign", "Bot"});
    const auto text = r.to_text();
    CHECK(text.find("Benign") != std::string::npos);
    CHECK(text.find("Bot") != std::string::npos);
    CHECK(text.find("macro avg") != std::string::npos);
    CHECK(text.find("weighted avg") != std::string::npos);
    const auto json_round = MetricsReport::from_json(r.to_json());
    CHECK(json_round.macro_f1 == r.macro_f1);
    CHECK(json_round.confusion == r.confusion);
}

namespace {

std::vector<CidsSample> trainable_corpus(size_t per_class) {
    std::vector<CidsSample> samples;
    auto a = make_class("Benign", per_class, 0.2, "session opened for user");
    auto b = make_class("Bot", per_class, 3.0, "failed password for invalid user");
    auto c = make_class("Flood", per_class, -2.5, "rate limit exceeded for zone");
    for (auto* v : {&a, &b, &c}) samples.insert(samples.end(), v->begin(), v->end());
    return samples;
}

} // namespace

TEST_CASE("zero epochs returns initial params and empty history") {
    const auto samples = trainable_corpus(8);
    const auto taxonomy = LabelTaxonomy::from_names({"Benign", "Bot", "Flood"});
    const auto table = EmbeddingTable::generate(64, 4, 2);
    TrainConfig tcfg;
    tcfg.epochs = 0;
    const auto model = train(samples, tiny_model_config(), tcfg, table, taxonomy);
    CHECK(model.epoch_losses.empty());
    // identical to a freshly initialized net with the same seed
    CidsNet fresh(model.model_config, 5);
    for (const auto& [name, t] : fresh.params().entries())
        CHECK(model.params.get(name).values() == t.values());
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto samples = trainable_corpus(10);
    const auto taxonomy = LabelTaxonomy::from_names({"Benign", "Bot", "Flood"});
    const auto table = EmbeddingTable::generate(64, 4, 2);
    TrainConfig tcfg;
    tcfg.epochs = 8;
    tcfg.batch_size = 10;
    tcfg.learning_rate = 5e-3;
    tcfg.seed = 3;
    const auto m1 = train(samples, tiny_model_config(), tcfg, table, taxonomy);
    const auto m2 = train(samples, tiny_model_config(), tcfg, table, taxonomy);
    REQUIRE(m1.epoch_losses.size() == 8);
    CHECK(m1.epoch_losses == m2.epoch_losses);
    CHECK(m1.epoch_losses.back() < m1.epoch_losses.front());
    for (const auto& [name, t] : m1.params.entries())
        CHECK(m2.params.get(name).values() == t.values());
}

TEST_CASE("evaluate produces a deterministic report and separable data scores high") {
    const auto train_samples = trainable_corpus(16);
    const auto test_samples = trainable_corpus(6);
    const auto taxonomy = LabelTaxonomy::from_names({"Benign", "Bot", "Flood"});
    const auto table = EmbeddingTable::generate(64, 4, 2);
    TrainConfig tcfg;
    tcfg.epochs = 30;
    tcfg.batch_size = 16;
    tcfg.learning_rate = 5e-3;
    const auto model = train(train_samples, tiny_model_config(), tcfg, table, taxonomy);
    const auto r1 = evaluate(model, test_samples, table);
    const auto r2 = evaluate(model, test_samples, table);
    CHECK(r1.to_json() == r2.to_json());
    CHECK(r1.total == test_samples.size());
    CHECK(r1.macro_f1 > 0.95); // three cleanly separable classes

    const auto rn = evaluate_network_only(model, test_samples, table);
    CHECK(rn.total == test_samples.size());
    CHECK(rn.macro_f1 > 0.95); // network features alone separate this corpus
}

TEST_CASE("evaluate_network_only requires a combined-loss model") {
    const auto samples = trainable_corpus(8);
    const auto taxonomy = LabelTaxonomy::from_names({"Benign", "Bot", "Flood"});
    const auto table = EmbeddingTable::generate(64, 4, 2);
    auto mcfg = tiny_model_config();
    mcfg.use_c_loss = false;
    TrainConfig tcfg;
    tcfg.epochs = 1;
    const auto model = train(samples, mcfg, tcfg, table, taxonomy);
    CHECK_THROWS_AS(evaluate_network_only(model, samples, table), ConfigError);
}
