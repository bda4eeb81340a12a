#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "cids/align.hpp"
#include "cids/flowmeter.hpp"
#include "cids/logparse.hpp"
#include "cids/synthgen.hpp"

using namespace cids;

namespace {

ScenarioSpec two_class_spec(size_t flows_per_class = 1, int64_t events = 2) {
    auto spec = default_spec();
    spec.classes.resize(2);
    spec.flows_per_class = flows_per_class;
    for (auto& c : spec.classes) {
        c.host.events_min = events;
        c.host.events_max = events;
    }
    return spec;
}

std::vector<HostEvent> parse_scenario_logs(const Scenario& sc, const ScenarioSpec& spec) {
    ParseStats stats;
    std::stringstream csv;
    csv << "EventId,Version,ProviderName,Level,Task,Opcode,Keywords,TimeCreated,MachineName,Message\n";
    for (const auto& row : sc.windows_csv) csv << row << "\n";
    auto events = parse_windows_csv(csv, sc.inventory, stats);
    std::stringstream syslog;
    for (const auto& line : sc.linux_log) syslog << line << "\n";
    const auto linux_events = parse_syslog(syslog, spec.year, sc.inventory, stats);
    events.insert(events.end(), linux_events.begin(), linux_events.end());
    REQUIRE(stats.rejected == 0);
    return events;
}

} // namespace

TEST_CASE("generation is deterministic given the seed") {
    const auto spec = two_class_spec(3);
    const auto a = generate(spec, 7);
    const auto b = generate(spec, 7);
    REQUIRE(a.packets.size() == b.packets.size());
    for (size_t i = 0; i < a.packets.size(); ++i) {
        CHECK(a.packets[i].ts == b.packets[i].ts);
        CHECK(a.packets[i].length == b.packets[i].length);
        CHECK(a.packets[i].tcp_flags == b.packets[i].tcp_flags);
    }
    CHECK(a.windows_csv == b.windows_csv);
    CHECK(a.linux_log == b.linux_log);
    REQUIRE(a.labels.size() == b.labels.size());
    for (size_t i = 0; i < a.labels.size(); ++i) {
        CHECK(a.labels[i].key == b.labels[i].key);
        CHECK(a.labels[i].window_start == b.labels[i].window_start);
        CHECK(a.labels[i].class_name == b.labels[i].class_name);
    }

    const auto c = generate(spec, 8);
    CHECK(a.packets.size() != c.packets.size());
}

TEST_CASE("one flow aligns to exactly its generated events") {
    const auto spec = two_class_spec(1, 2);
    const auto sc = generate(spec, 3);
    REQUIRE(sc.labels.size() == 2); // one labeled flow per class

    const auto flows = aggregate_flows(sc.packets, spec.window_len);
    REQUIRE(flows.size() == 2);

    const auto events = parse_scenario_logs(sc, spec);
    REQUIRE(events.size() == 4); // two per flow

    std::vector<FlowRecord> records;
    for (const auto& f : flows) {
        auto r = make_flow_record(f, spec.window_len);
        for (const auto& l : sc.labels)
            if (l.key == r.key && l.window_start == r.window_start) r.label = l.class_name;
        REQUIRE(r.label.has_value());
        records.push_back(std::move(r));
    }
    AlignConfig cfg;
    const auto samples = align(records, EventIndex::build(events), cfg);
    REQUIRE(samples.size() == 2);
    for (const auto& s : samples) {
        size_t real = 0;
        for (auto m : s.event_row_mask) real += m;
        CHECK(real == 2);
    }
}

TEST_CASE("default spec has the designed ambiguity structure") {
    const auto spec = default_spec();
    REQUIRE(spec.classes.size() == 6);
    CHECK(spec.classes[0].name == "Benign");
    CHECK(spec.classes[4].network == spec.classes[5].network);

    std::set<std::string> t4(spec.classes[4].host.message_templates.begin(),
                             spec.classes[4].host.message_templates.end());
    for (const auto& t : spec.classes[5].host.message_templates)
        CHECK(t4.count(t) == 0);

    // every non-ambiguous pair differs in its network profile
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = i + 1; j < 6; ++j)
            CHECK_FALSE(spec.classes[i].network == spec.classes[j].network);

    // benign volume is not below any attack volume before undersampling
    CHECK(spec.flows_per_class >= 1);

    // both log formats appear
    bool has_windows = false, has_linux = false;
    for (const auto& c : spec.classes) {
        has_windows |= c.host.os == SourceOs::WINDOWS;
        has_linux |= c.host.os == SourceOs::LINUX;
    }
    CHECK(has_windows);
    CHECK(has_linux);
}

TEST_CASE("every generated event lies inside its flow window") {
    auto spec = default_spec();
    spec.flows_per_class = 4;
    const auto sc = generate(spec, 11);
    const auto events = parse_scenario_logs(sc, spec);

    // victim ip -> windows with a labeled flow for that victim
    std::map<uint32_t, std::set<double>> windows_by_victim;
    for (const auto& l : sc.labels)
        windows_by_victim[l.key.src_ip.value].insert(l.window_start),
            windows_by_victim[l.key.dst_ip.value].insert(l.window_start);

    REQUIRE(!events.empty());
    for (const auto& e : events) {
        const double ws = std::floor(e.ts / spec.window_len) * spec.window_len;
        const auto it = windows_by_victim.find(e.host_ip.value);
        REQUIRE(it != windows_by_victim.end());
        CHECK(it->second.count(ws) == 1);
    }
}

TEST_CASE("generated packets round-trip through the flow meter") {
    auto spec = default_spec();
    spec.flows_per_class = 5;
    const auto sc = generate(spec, 13);
    const auto flows = aggregate_flows(sc.packets, spec.window_len);

    std::set<std::pair<double, std::string>> label_set, flow_set;
    auto key_str = [](const SessionKey& k) {
        return format_ipv4(k.src_ip) + ":" + std::to_string(k.src_port) + "-" +
               format_ipv4(k.dst_ip) + ":" + std::to_string(k.dst_port) + "/" +
               std::string(protocol_name(k.protocol));
    };
    for (const auto& l : sc.labels) label_set.insert({l.window_start, key_str(l.key)});
    for (const auto& f : flows) flow_set.insert({f.window_start, key_str(f.key)});
    CHECK(label_set == flow_set);
    CHECK(flows.size() == sc.labels.size());
}

TEST_CASE("ambiguity bound of the bundled scenario sits at the designed ceiling") {
    const auto spec = default_spec();
    for (uint64_t seed : {1ull, 2ull}) {
        const double bound = ambiguity_bound(spec, 4000, seed);
        CHECK(bound > 0.80);
        CHECK(bound < 0.86);
    }
}

TEST_CASE("ambiguity bound of separable profiles approaches one") {
    auto spec = default_spec();
    spec.classes.erase(spec.classes.begin() + 5); // drop the twin of class 4
    const double bound = ambiguity_bound(spec, 2000, 3);
    CHECK(bound > 0.99);
}

TEST_CASE("ambiguity bound of identical profiles collapses to uniform guessing") {
    auto spec = two_class_spec(1);
    spec.classes.push_back(spec.classes[1]);
    spec.classes[2].name = "clone";
    spec.classes[0].network = spec.classes[1].network; // all three identical
    const double bound = ambiguity_bound(spec, 3000, 5);
    CHECK_THAT(bound, Catch::Matchers::WithinAbs(1.0 / 3.0, 0.03));
}

TEST_CASE("windows rows contain csv-safe messages") {
    auto spec = default_spec();
    spec.flows_per_class = 2;
    const auto sc = generate(spec, 17);
    REQUIRE(!sc.windows_csv.empty());
    ParseStats stats;
    std::stringstream csv;
    csv << "EventId,Version,ProviderName,Level,Task,Opcode,Keywords,TimeCreated,MachineName,Message\n";
    for (const auto& row : sc.windows_csv) csv << row << "\n";
    const auto events = parse_windows_csv(csv, sc.inventory, stats);
    CHECK(stats.rejected == 0);
    for (const auto& e : events) CHECK(e.event_features[0] > 0.0); // windows event ids are set
}
