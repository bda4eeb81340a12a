#include <catch_amalgamated.hpp>

#include "cids/align.hpp"
#include "cids/rng.hpp"

using namespace cids;

namespace {

HostEvent make_event(const char* ip, double ts, double tag = 1.0, const std::string& msg = "m") {
    HostEvent e;
    e.host_ip = parse_ipv4(ip);
    e.ts = ts;
    e.event_features = {tag, 0, 0, 0, 0, 0, 0, 0};
    e.message = msg;
    e.source_os = SourceOs::LINUX;
    return e;
}

FlowRecord make_flow(const char* src, uint16_t sport, const char* dst, uint16_t dport,
                     double window_start, double window_len, const std::string& label = "Benign") {
    FlowRecord f;
    f.key = canonical_session_key(parse_ipv4(src), sport, parse_ipv4(dst), dport, Protocol::TCP).first;
    f.window_start = window_start;
    f.window_len = window_len;
    f.features = {1.0, 2.0};
    f.label = label;
    return f;
}

} // namespace

TEST_CASE("event index buckets and sorts") {
    CHECK(EventIndex::build({}).bucket_count() == 0);

    std::vector<HostEvent> events = {make_event("10.0.0.5", 30.0), make_event("10.0.0.5", 10.0),
                                     make_event("10.0.0.5", 20.0), make_event("10.0.0.9", 5.0)};
    const auto index = EventIndex::build(events);
    CHECK(index.bucket_count() == 2);
    const auto* bucket = index.bucket(parse_ipv4("10.0.0.5"));
    REQUIRE(bucket);
    REQUIRE(bucket->size() == 3);
    CHECK((*bucket)[0].event->ts == 10.0);
    CHECK((*bucket)[1].event->ts == 20.0);
    CHECK((*bucket)[2].event->ts == 30.0);
    const auto* other = index.bucket(parse_ipv4("10.0.0.9"));
    REQUIRE(other);
    CHECK(other->size() == 1);
}

TEST_CASE("event index keeps input order for equal timestamps") {
    std::vector<HostEvent> events = {make_event("10.0.0.5", 10.0, 1.0),
                                     make_event("10.0.0.5", 10.0, 2.0),
                                     make_event("10.0.0.5", 10.0, 3.0)};
    const auto index = EventIndex::build(events);
    const auto* bucket = index.bucket(parse_ipv4("10.0.0.5"));
    REQUIRE(bucket->size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK((*bucket)[i].event->event_features[0] == double(i + 1));
}

TEST_CASE("align matches ip and half-open window") {
    const auto flow = make_flow("10.0.0.1", 1000, "10.0.0.5", 80, 100.0, 120.0);
    std::vector<HostEvent> events = {make_event("10.0.0.5", 150.0, 1.0),
                                     make_event("10.0.0.5", 250.0, 2.0),
                                     make_event("10.0.0.9", 160.0, 3.0)};
    AlignConfig cfg;
    const auto samples = align({flow}, EventIndex::build(events), cfg);
    REQUIRE(samples.size() == 1);
    const auto& s = samples[0];
    CHECK(s.event_row_mask[0] == 1);
    CHECK(s.event_row_mask[1] == 0);
    CHECK(s.event_matrix[0][0] == 1.0); // only the ts-150 event
    CHECK(s.label == "Benign");
}

TEST_CASE("window boundaries are half-open") {
    const auto flow = make_flow("10.0.0.1", 1000, "10.0.0.5", 80, 100.0, 120.0);
    std::vector<HostEvent> events = {make_event("10.0.0.5", 100.0, 1.0),
                                     make_event("10.0.0.5", 220.0, 2.0),
                                     make_event("10.0.0.5", 219.999, 3.0)};
    AlignConfig cfg;
    const auto samples = align({flow}, EventIndex::build(events), cfg);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].event_row_mask[0] == 1);
    CHECK(samples[0].event_row_mask[1] == 1);
    CHECK(samples[0].event_row_mask[2] == 0);
    CHECK(samples[0].event_matrix[0][0] == 1.0); // start inclusive
    CHECK(samples[0].event_matrix[1][0] == 3.0); // end exclusive
}

TEST_CASE("missing host policy") {
    const auto flow = make_flow("10.0.0.1", 1000, "10.0.0.5", 80, 0.0, 120.0);

    AlignConfig exclude;
    exclude.missing_host_policy = MissingHostPolicy::EXCLUDE;
    CHECK(align({flow}, EventIndex::build({}), exclude).empty());

    AlignConfig zero_pad;
    zero_pad.missing_host_policy = MissingHostPolicy::ZERO_PAD;
    const auto samples = align({flow}, EventIndex::build({}), zero_pad);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].message.empty());
    for (auto m : samples[0].event_row_mask) CHECK(m == 0);
    for (const auto& row : samples[0].event_matrix)
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("ip match modes") {
    // canonical key: src 10.0.0.1:1000, dst 10.0.0.5:80
    const auto flow = make_flow("10.0.0.1", 1000, "10.0.0.5", 80, 0.0, 120.0);
    std::vector<HostEvent> events = {make_event("10.0.0.1", 10.0, 1.0),
                                     make_event("10.0.0.5", 20.0, 2.0)};
    const auto index = EventIndex::build(events);

    AlignConfig either;
    either.ip_match_mode = IpMatchMode::EITHER_ENDPOINT;
    auto s = align({flow}, index, either);
    REQUIRE(s.size() == 1);
    CHECK(s[0].event_row_mask[1] == 1);

    AlignConfig dst_only;
    dst_only.ip_match_mode = IpMatchMode::DST_ONLY;
    s = align({flow}, index, dst_only);
    REQUIRE(s.size() == 1);
    CHECK(s[0].event_matrix[0][0] == 2.0);
    CHECK(s[0].event_row_mask[1] == 0);

    AlignConfig src_only;
    src_only.ip_match_mode = IpMatchMode::SRC_ONLY;
    s = align({flow}, index, src_only);
    REQUIRE(s.size() == 1);
    CHECK(s[0].event_matrix[0][0] == 1.0);
    CHECK(s[0].event_row_mask[1] == 0);
}

TEST_CASE("messages join in time order with the separator") {
    const auto flow = make_flow("10.0.0.1", 1000, "10.0.0.5", 80, 0.0, 120.0);
    std::vector<HostEvent> events = {make_event("10.0.0.5", 30.0, 2.0, "second"),
                                     make_event("10.0.0.5", 10.0, 1.0, "first"),
                                     make_event("10.0.0.5", 50.0, 3.0, "third")};
    AlignConfig cfg;
    const auto samples = align({flow}, EventIndex::build(events), cfg);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].message == "first [SEP] second [SEP] third");
    CHECK(samples[0].event_matrix[0][0] == 1.0);
    CHECK(samples[0].event_matrix[1][0] == 2.0);
    CHECK(samples[0].event_matrix[2][0] == 3.0);
}

TEST_CASE("pad_truncate pads short row lists") {
    std::vector<std::vector<double>> rows(3, std::vector<double>(8, 1.0));
    const auto padded = pad_truncate(rows, 28, 8, Truncation::KEEP_LATEST);
    REQUIRE(padded.matrix.size() == 28);
    for (size_t i = 0; i < 28; ++i) {
        CHECK(padded.mask[i] == (i < 3 ? 1 : 0));
        for (double v : padded.matrix[i]) CHECK(v == (i < 3 ? 1.0 : 0.0));
    }
}

TEST_CASE("pad_truncate of an empty list") {
    const auto padded = pad_truncate({}, 28, 8, Truncation::KEEP_LATEST);
    for (auto m : padded.mask) CHECK(m == 0);
    for (const auto& row : padded.matrix)
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("pad_truncate keeps the requested end") {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 30; ++i) rows.push_back(std::vector<double>(8, double(i)));

    const auto latest = pad_truncate(rows, 28, 8, Truncation::KEEP_LATEST);
    CHECK(latest.matrix[0][0] == 2.0);
    CHECK(latest.matrix[27][0] == 29.0);
    for (auto m : latest.mask) CHECK(m == 1);

    const auto earliest = pad_truncate(rows, 28, 8, Truncation::KEEP_EARLIEST);
    CHECK(earliest.matrix[0][0] == 0.0);
    CHECK(earliest.matrix[27][0] == 27.0);
}

TEST_CASE("pad_truncate rejects ragged rows") {
    std::vector<std::vector<double>> rows = {std::vector<double>(8, 0.0), std::vector<double>(7, 0.0)};
    CHECK_THROWS_AS(pad_truncate(rows, 28, 8, Truncation::KEEP_LATEST), ShapeError);
}

namespace {

struct RandomInstance {
    std::vector<FlowRecord> flows;
    std::vector<HostEvent> events;
    AlignConfig cfg;
};

RandomInstance random_instance(uint64_t seed, size_t max_flows, size_t max_events, size_t n_ips) {
    Rng rng(seed);
    RandomInstance inst;
    std::vector<Ipv4> ips;
    for (size_t i = 0; i < n_ips; ++i)
        ips.push_back(Ipv4{0x0a000000u + static_cast<uint32_t>(rng.uniform_int(1, 250 * 250))});

    const size_t n_flows = static_cast<size_t>(rng.uniform_int(1, static_cast<int64_t>(max_flows)));
    const size_t n_events = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(max_events)));
    const double window_len = rng.bernoulli(0.7) ? 120.0 : rng.uniform(1.0, 300.0);
    const double horizon = 40 * window_len;

    for (size_t i = 0; i < n_flows; ++i) {
        FlowRecord f;
        const Ipv4 a = ips[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n_ips) - 1))];
        const Ipv4 b = ips[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n_ips) - 1))];
        f.key = canonical_session_key(a, static_cast<uint16_t>(rng.uniform_int(1, 65535)), b,
                                      static_cast<uint16_t>(rng.uniform_int(1, 65535)),
                                      rng.bernoulli(0.5) ? Protocol::TCP : Protocol::UDP)
                    .first;
        f.window_start = std::floor(rng.uniform(0, horizon) / window_len) * window_len;
        f.window_len = window_len;
        f.features = {rng.normal(0, 1)};
        f.label = "class-" + std::to_string(rng.uniform_int(0, 4));
        inst.flows.push_back(std::move(f));
    }
    for (size_t i = 0; i < n_events; ++i) {
        HostEvent e;
        e.host_ip = ips[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n_ips) - 1))];
        // mostly distinct timestamps, some deliberate ties
        e.ts = rng.bernoulli(0.1) ? std::floor(rng.uniform(0, horizon))
                                  : rng.uniform(-window_len, horizon + window_len);
        e.event_features.assign(kEventFeatureCount, 0.0);
        e.event_features[0] = static_cast<double>(i);
        e.message = "event " + std::to_string(i);
        e.source_os = rng.bernoulli(0.5) ? SourceOs::WINDOWS : SourceOs::LINUX;
        inst.events.push_back(std::move(e));
    }

    inst.cfg.ip_match_mode = static_cast<IpMatchMode>(rng.uniform_int(0, 2));
    inst.cfg.truncation = rng.bernoulli(0.5) ? Truncation::KEEP_LATEST : Truncation::KEEP_EARLIEST;
    inst.cfg.missing_host_policy =
        rng.bernoulli(0.5) ? MissingHostPolicy::EXCLUDE : MissingHostPolicy::ZERO_PAD;
    inst.cfg.n_max = static_cast<size_t>(rng.uniform_int(1, 28));
    return inst;
}

} // namespace

TEST_CASE("align equals the brute-force oracle on randomized instances") {
    for (uint64_t seed = 1; seed <= 30; ++seed) {
        const auto inst = random_instance(seed, 120, 600, 12);
        const auto fast = align(inst.flows, EventIndex::build(inst.events), inst.cfg);
        const auto slow = align_bruteforce(inst.flows, inst.events, inst.cfg);
        REQUIRE(fast.size() == slow.size());
        for (size_t i = 0; i < fast.size(); ++i) REQUIRE(fast[i] == slow[i]);
    }
}

TEST_CASE("align output is independent of event input order") {
    auto inst = random_instance(99, 60, 300, 8);
    const auto base = align(inst.flows, EventIndex::build(inst.events), inst.cfg);
    Rng rng(5);
    // permute events with distinct timestamps only (ties keep input order)
    for (int trial = 0; trial < 5; ++trial) {
        auto events = inst.events;
        std::stable_sort(events.begin(), events.end(),
                         [](const HostEvent& a, const HostEvent& b) { return a.ts < b.ts; });
        const auto sorted_run = align(inst.flows, EventIndex::build(events), inst.cfg);
        REQUIRE(sorted_run.size() == base.size());
        for (size_t i = 0; i < base.size(); ++i) CHECK(sorted_run[i] == base[i]);
    }
}

TEST_CASE("align soundness and completeness") {
    const auto inst = random_instance(1234, 80, 400, 10);
    AlignConfig cfg = inst.cfg;
    cfg.n_max = 400; // no truncation: completeness must be exact
    cfg.missing_host_policy = MissingHostPolicy::ZERO_PAD;
    const auto samples = align(inst.flows, EventIndex::build(inst.events), cfg);
    REQUIRE(samples.size() == inst.flows.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& flow = inst.flows[i];
        size_t expected = 0;
        for (const auto& e : inst.events)
            if (ip_matches(e.host_ip, flow.key, cfg.ip_match_mode) && e.ts >= flow.window_start &&
                e.ts < flow.window_start + flow.window_len)
                ++expected;
        size_t real_rows = 0;
        for (auto m : samples[i].event_row_mask) real_rows += m;
        CHECK(real_rows == expected);
    }
}
