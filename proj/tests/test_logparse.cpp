#include <catch_amalgamated.hpp>

#include <sstream>

#include "cids/logparse.hpp"
#include "cids/rng.hpp"
#include "cids/time_civil.hpp"

using namespace cids;

namespace {

HostInventory make_inventory() {
    HostInventory inv;
    inv.by_name["victim-01"] = parse_ipv4("172.31.0.10");
    inv.by_name["ubuntu"] = parse_ipv4("172.31.0.20");
    return inv;
}

const std::string kWindowsHeader =
    "EventId,Version,ProviderName,Level,Task,Opcode,Keywords,TimeCreated,MachineName,Message";

} // namespace

TEST_CASE("rfc3339 timestamps") {
    CHECK(*parse_rfc3339("2018-02-14T22:11:20Z") == 1518646280.0);
    CHECK(*parse_rfc3339("1970-01-01T00:00:00Z") == 0.0);
    CHECK(*parse_rfc3339("2018-02-14T22:11:20.5Z") == 1518646280.5);
    CHECK(*parse_rfc3339("2018-02-14T23:11:20+01:00") == 1518646280.0);
    CHECK_FALSE(parse_rfc3339("2018-02-14 garbage"));
    CHECK_FALSE(parse_rfc3339("not a time"));
    CHECK_FALSE(parse_rfc3339(""));
    CHECK(format_rfc3339(1518646280) == "2018-02-14T22:11:20Z");
}

TEST_CASE("windows csv row maps to a host event") {
    std::stringstream in(
        kWindowsHeader + "\n" +
        "4625,0,Microsoft-Windows-Security-Auditing,0,12544,0,0x8010000000000000,"
        "2018-02-14T22:11:20Z,victim-01,An account failed to log on.\n");
    ParseStats stats;
    const auto events = parse_windows_csv(in, make_inventory(), stats);
    REQUIRE(events.size() == 1);
    CHECK(stats.accepted == 1);
    CHECK(stats.rejected == 0);
    const auto& e = events[0];
    CHECK(e.ts == 1518646280.0);
    CHECK(e.message == "An account failed to log on.");
    CHECK(e.source_os == SourceOs::WINDOWS);
    CHECK(e.host_ip == parse_ipv4("172.31.0.10"));
    REQUIRE(e.event_features.size() == 8);
    CHECK(e.event_features[0] == 4625.0);
    CHECK(e.event_features[1] == 0.0);
    CHECK(e.event_features[2] == provider_id("Microsoft-Windows-Security-Auditing"));
    CHECK(e.event_features[4] == 12544.0);
    CHECK(e.event_features[6] == 0.0); // low 32 bits of 0x8010000000000000
    CHECK(e.event_features[7] == 0.0);
}

TEST_CASE("windows csv quoted message with commas") {
    std::stringstream in(kWindowsHeader + "\n" +
                         "1,2,svc,3,4,5,6,2018-02-14T22:11:20Z,victim-01,\"hello, \"\"world\"\"\"\n");
    ParseStats stats;
    const auto events = parse_windows_csv(in, make_inventory(), stats);
    REQUIRE(events.size() == 1);
    CHECK(events[0].message == "hello, \"world\"");
}

TEST_CASE("windows csv missing column is rejected with the column name") {
    std::stringstream in(kWindowsHeader + "\n" +
                         "4625,0,prov,0,0,0,0,2018-02-14T22:11:20Z,victim-01\n");
    ParseStats stats;
    const auto events = parse_windows_csv(in, make_inventory(), stats);
    CHECK(events.empty());
    REQUIRE(stats.rejected == 1);
    CHECK(stats.errors[0].find("Message absent") != std::string::npos);
}

TEST_CASE("windows csv unknown machine names the hostname") {
    std::stringstream in(kWindowsHeader + "\n" +
                         "4625,0,prov,0,0,0,0,2018-02-14T22:11:20Z,ghost-99,msg\n");
    ParseStats stats;
    const auto events = parse_windows_csv(in, make_inventory(), stats);
    CHECK(events.empty());
    REQUIRE(stats.rejected == 1);
    CHECK(stats.errors[0].find("ghost-99") != std::string::npos);
}

TEST_CASE("windows csv keeps parsing after bad rows") {
    std::stringstream in(kWindowsHeader + "\n" +
                         "bad,0,p,0,0,0,0,2018-02-14T22:11:20Z,victim-01,m1\n" +
                         "1,0,p,0,0,0,0,2018-02-14T22:11:21Z,victim-01,m2\n" +
                         "1,0,p,0,0,0,0,not-a-time,victim-01,m3\n");
    ParseStats stats;
    const auto events = parse_windows_csv(in, make_inventory(), stats);
    CHECK(events.size() == 1);
    CHECK(stats.accepted == 1);
    CHECK(stats.rejected == 2);
}

TEST_CASE("windows csv header mismatch fails fast") {
    std::stringstream in("EventId,Version\n1,2\n");
    ParseStats stats;
    CHECK_THROWS_AS(parse_windows_csv(in, make_inventory(), stats), InputError);
}

TEST_CASE("syslog line with pid") {
    std::string err;
    const auto e = parse_syslog_line("Feb 14 22:11:20 ubuntu sshd[2541]: Failed password for invalid user admin",
                                     2018, make_inventory(), &err);
    REQUIRE(e);
    CHECK(e->ts == 1518646280.0);
    CHECK(e->message == "Failed password for invalid user admin");
    CHECK(e->host_ip == parse_ipv4("172.31.0.20"));
    CHECK(e->source_os == SourceOs::LINUX);
    REQUIRE(e->event_features.size() == 8);
    CHECK(e->event_features[2] == provider_id("sshd"));
    for (size_t i : {0u, 1u, 3u, 4u, 5u, 6u, 7u}) CHECK(e->event_features[i] == 0.0);
}

TEST_CASE("syslog line without pid") {
    std::string err;
    const auto e = parse_syslog_line("Feb 14 22:11:20 ubuntu CRON: session opened", 2018,
                                     make_inventory(), &err);
    REQUIRE(e);
    CHECK(e->event_features[2] == provider_id("CRON"));
    CHECK(e->message == "session opened");
}

TEST_CASE("syslog grammar mismatches are rejected with a reason") {
    std::string err;
    CHECK_FALSE(parse_syslog_line("garbage without timestamp", 2018, make_inventory(), &err));
    CHECK(err.find("grammar mismatch") != std::string::npos);
    CHECK_FALSE(parse_syslog_line("Feb 14 22:11:20 ubuntu nocolonhere", 2018, make_inventory(), &err));
    CHECK_FALSE(parse_syslog_line("Xyz 14 22:11:20 ubuntu sshd: msg", 2018, make_inventory(), &err));
    CHECK_FALSE(parse_syslog_line("Feb 99 22:11:20 ubuntu sshd: msg", 2018, make_inventory(), &err));
    CHECK_FALSE(parse_syslog_line("Feb 14 25:00:00 ubuntu sshd: msg", 2018, make_inventory(), &err));
}

TEST_CASE("syslog unknown hostname is an inventory error") {
    std::string err;
    CHECK_FALSE(parse_syslog_line("Feb 14 22:11:20 nowhere sshd: msg", 2018, make_inventory(), &err));
    CHECK(err.find("nowhere") != std::string::npos);
}

TEST_CASE("syslog accepts single-digit and padded days") {
    std::string err;
    const auto e1 = parse_syslog_line("Feb  4 01:02:03 ubuntu cron: a", 2018, make_inventory(), &err);
    REQUIRE(e1);
    const auto e2 = parse_syslog_line("Feb 4 01:02:03 ubuntu cron: a", 2018, make_inventory(), &err);
    REQUIRE(e2);
    CHECK(e1->ts == e2->ts);
    const auto e3 = parse_syslog_line("Feb 04 01:02:03 ubuntu cron: a", 2018, make_inventory(), &err);
    REQUIRE(e3);
    CHECK(e1->ts == e3->ts);
}

TEST_CASE("normalize_event is deterministic and pinned") {
    CHECK(provider_id("sshd") == provider_id("sshd"));
    CHECK(provider_id("sshd") < kProviderIdBuckets);
    // pinned hash: fnv1a64 mod 10007
    CHECK(provider_id("sshd") == static_cast<double>(fnv1a64("sshd") % kProviderIdBuckets));
    RawWindowsRecord r;
    r.event_id = 4625;
    r.provider_name = "x";
    r.keywords = 0xffffffff12345678ull;
    const auto f = normalize_event(r);
    REQUIRE(f.size() == kEventFeatureCount);
    CHECK(f[6] == static_cast<double>(0x12345678u));
}

TEST_CASE("parser totality over a fuzz corpus") {
    Rng rng(20240);
    const auto inventory = make_inventory();
    size_t total = 0;
    ParseStats syslog_stats;
    std::stringstream syslog_lines;
    std::stringstream csv_lines;
    csv_lines << kWindowsHeader << "\n";
    const std::string charset =
        "abcdefghijklmnopqrstuvwxyzABCDEF0123456789 :[],\"\t.-%$#@!{}()\xff\xfe\x01";
    for (int i = 0; i < 5000; ++i) {
        std::string line;
        const int len = static_cast<int>(rng.uniform_int(0, 120));
        for (int c = 0; c < len; ++c)
            line += charset[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(charset.size()) - 1))];
        if (rng.bernoulli(0.3)) line = "Feb 14 22:11:20 " + line; // near-miss prefix
        if (!line.empty()) {
            syslog_lines << line << "\n";
            csv_lines << line << "\n";
            ++total;
        }
    }
    const auto events = parse_syslog(syslog_lines, 2018, inventory, syslog_stats);
    CHECK(syslog_stats.accepted + syslog_stats.rejected == total);
    CHECK(events.size() == syslog_stats.accepted);

    ParseStats csv_stats;
    CHECK_NOTHROW(parse_windows_csv(csv_lines, inventory, csv_stats));
    CHECK(csv_stats.accepted + csv_stats.rejected == total);
}
