#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cids/core.hpp"
#include "cids/errors.hpp"
#include "cids/flowmeter.hpp"
#include "cids/logparse.hpp"
#include "cids/metrics.hpp"
#include "cids/rng.hpp"
#include "cids/time_civil.hpp"

namespace cids {

// ---------------------------------------------------------------------------
// Scenario specification. Network profiles are fully parametric (packet
// lengths: rounded normal clipped to >= 1; inter-arrival times: exponential;
// per-packet flag probabilities; uniform packet count) so the Bayes-optimal
// ceiling on network-only classification is computable by Monte Carlo.

struct NetworkProfile {
    Protocol protocol = Protocol::TCP;
    double len_mean = 500.0;
    double len_std = 80.0;
    double iat_rate = 2.0; // exponential rate, mean 1/rate seconds
    int64_t packets_min = 8;
    int64_t packets_max = 16;
    double p_forward = 0.6; // direction of packets after the first
    std::array<double, 6> flag_probs{}; // SYN, ACK, FIN, RST, PSH, URG

    bool operator==(const NetworkProfile&) const = default;
};

struct HostProfile {
    SourceOs os = SourceOs::LINUX;
    std::string provider;
    std::vector<uint64_t> event_ids; // used for Windows rows; syslog has none
    uint64_t keywords = 0;
    uint64_t task = 0;
    std::vector<std::string> message_templates; // slots: {user} {ip} {n}
    int64_t events_min = 1;
    int64_t events_max = 3;
};

struct ClassProfile {
    std::string name;
    NetworkProfile network;
    HostProfile host;
    std::string victim_hostname;
    Ipv4 victim_ip;
    Ipv4 client_ip;
    uint16_t service_port = 80;
};

struct ScenarioSpec {
    std::vector<ClassProfile> classes;
    size_t flows_per_class = 300;
    double window_len = 120.0;
    int64_t base_time = 1517443200; // aligned to the window grid
    int64_t year = 2018;

    void validate() const {
        if (classes.size() < 2) throw ConfigError("scenario needs at least 2 classes");
        for (const auto& c : classes) {
            if (c.host.message_templates.empty())
                throw ConfigError("class '" + c.name + "' has no message templates");
            if (c.host.events_min < 1 || c.host.events_max < c.host.events_min)
                throw ConfigError("class '" + c.name + "' has an invalid events-per-flow range");
            if (c.network.packets_min < 1 || c.network.packets_max < c.network.packets_min)
                throw ConfigError("class '" + c.name + "' has an invalid packet count range");
        }
    }
};

// ---------------------------------------------------------------------------
// Generated scenario (in-memory; the CLI serializes it to files).

struct Scenario {
    std::vector<PacketRecord> packets;
    std::vector<std::string> windows_csv; // data rows, header added on write
    std::vector<std::string> linux_log;
    HostInventory inventory;
    std::vector<FlowLabel> labels;
};

namespace synth_detail {

inline uint64_t sample_length(Rng& rng, const NetworkProfile& p) {
    const double v = rng.normal(p.len_mean, p.len_std);
    const int64_t r = std::llround(v);
    return static_cast<uint64_t>(std::max<int64_t>(1, r));
}

inline std::string fill_template(const std::string& tmpl, Rng& rng) {
    static const std::array<std::string, 6> users = {"admin", "root",   "backup",
                                                     "guest", "deploy", "operator"};
    std::string out;
    for (size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
            const size_t end = tmpl.find('}', i);
            const std::string slot = tmpl.substr(i + 1, end - i - 1);
            if (slot == "user") {
                out += users[static_cast<size_t>(rng.uniform_int(0, users.size() - 1))];
            } else if (slot == "ip") {
                out += format_ipv4(Ipv4{0x0a0a0000u + static_cast<uint32_t>(rng.uniform_int(1, 65000))});
            } else if (slot == "n") {
                out += std::to_string(rng.uniform_int(1, 99));
            } else {
                out += "{" + slot + "}";
            }
            i = end + 1;
        } else {
            out += tmpl[i++];
        }
    }
    return out;
}

inline std::string csv_escape(const std::string& s) {
    bool needs_quotes = false;
    for (char c : s)
        if (c == ',' || c == '"' || c == '\n') needs_quotes = true;
    if (!needs_quotes) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += "\"";
    return out;
}

} // namespace synth_detail

// Deterministic generation: every class emits flows_per_class flows, each in
// its own window on the global grid; host events land on the flow's victim
// host inside the same half-open window (integer-second timestamps so both
// log formats round-trip exactly).
inline Scenario generate(const ScenarioSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Scenario out;
    for (const auto& c : spec.classes) out.inventory.by_name[c.victim_hostname] = c.victim_ip;

    size_t window_index = 0;
    for (const auto& cls : spec.classes) {
        for (size_t k = 0; k < spec.flows_per_class; ++k) {
            const double ws = static_cast<double>(spec.base_time) +
                              static_cast<double>(window_index++) * spec.window_len;
            const uint16_t sport = static_cast<uint16_t>(rng.uniform_int(20000, 60000));

            // packet train; resample if the tail would leave the window, and
            // cap as a last resort so flows never straddle windows
            const int64_t count = rng.uniform_int(cls.network.packets_min, cls.network.packets_max);
            std::vector<double> ts(static_cast<size_t>(count));
            for (int attempt = 0;; ++attempt) {
                const bool last_try = attempt >= 100;
                double t = ws + rng.uniform(0.5, 2.0);
                bool ok = true;
                for (int64_t i = 0; i < count; ++i) {
                    if (i > 0) t += rng.exponential(cls.network.iat_rate);
                    if (t >= ws + spec.window_len - 0.25) {
                        if (!last_try) {
                            ok = false;
                            break;
                        }
                        t = ws + spec.window_len - 0.3;
                    }
                    ts[static_cast<size_t>(i)] = t;
                }
                if (ok || last_try) break;
            }

            for (int64_t i = 0; i < count; ++i) {
                PacketRecord p;
                p.ts = ts[static_cast<size_t>(i)];
                const bool forward = i == 0 ? true : rng.bernoulli(cls.network.p_forward);
                if (forward) {
                    p.src_ip = cls.client_ip;
                    p.src_port = sport;
                    p.dst_ip = cls.victim_ip;
                    p.dst_port = cls.service_port;
                } else {
                    p.src_ip = cls.victim_ip;
                    p.src_port = cls.service_port;
                    p.dst_ip = cls.client_ip;
                    p.dst_port = sport;
                }
                p.protocol = cls.network.protocol;
                p.length = synth_detail::sample_length(rng, cls.network);
                if (p.protocol == Protocol::TCP)
                    for (size_t f = 0; f < 6; ++f)
                        if (rng.bernoulli(cls.network.flag_probs[f]))
                            p.tcp_flags |= tcp_flag_table()[f].second;
                out.packets.push_back(p);
            }

            FlowLabel label;
            label.key = canonical_session_key(cls.client_ip, sport, cls.victim_ip, cls.service_port,
                                              cls.network.protocol)
                            .first;
            label.window_start = ws;
            label.class_name = cls.name;
            out.labels.push_back(std::move(label));

            const int64_t n_events = rng.uniform_int(cls.host.events_min, cls.host.events_max);
            for (int64_t e = 0; e < n_events; ++e) {
                const int64_t ts_event =
                    static_cast<int64_t>(ws) +
                    rng.uniform_int(0, static_cast<int64_t>(spec.window_len) - 1);
                const auto& tmpl = cls.host.message_templates[static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(cls.host.message_templates.size()) - 1))];
                const std::string message = synth_detail::fill_template(tmpl, rng);
                if (cls.host.os == SourceOs::WINDOWS) {
                    const uint64_t event_id =
                        cls.host.event_ids.empty()
                            ? 1000
                            : cls.host.event_ids[static_cast<size_t>(rng.uniform_int(
                                  0, static_cast<int64_t>(cls.host.event_ids.size()) - 1))];
                    char row[512];
                    std::snprintf(row, sizeof(row), "%llu,0,%s,4,%llu,0,%llu,%s,%s,%s",
                                  static_cast<unsigned long long>(event_id),
                                  cls.host.provider.c_str(),
                                  static_cast<unsigned long long>(cls.host.task),
                                  static_cast<unsigned long long>(cls.host.keywords),
                                  format_rfc3339(ts_event).c_str(), cls.victim_hostname.c_str(),
                                  synth_detail::csv_escape(message).c_str());
                    out.windows_csv.push_back(row);
                } else {
                    const int64_t pid = rng.uniform_int(100, 32000);
                    out.linux_log.push_back(format_syslog_time(ts_event) + " " + cls.victim_hostname +
                                            " " + cls.host.provider + "[" + std::to_string(pid) +
                                            "]: " + message);
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// The bundled scenario: six classes; SlowHttpAttack and FtpBruteforce share
// one network profile parameter-for-parameter but trigger disjoint host
// responses, so network features alone cannot separate them.

inline ScenarioSpec default_spec() {
    ScenarioSpec spec;
    spec.flows_per_class = 300;

    NetworkProfile ambiguous;
    ambiguous.protocol = Protocol::TCP;
    ambiguous.len_mean = 240.0;
    ambiguous.len_std = 45.0;
    ambiguous.iat_rate = 0.25;
    ambiguous.packets_min = 6;
    ambiguous.packets_max = 10;
    ambiguous.p_forward = 0.6;
    ambiguous.flag_probs = {0.15, 0.8, 0.05, 0.02, 0.25, 0.0};

    ClassProfile benign;
    benign.name = std::string(kBenignLabel);
    benign.network = {Protocol::TCP, 520.0, 90.0, 2.0, 8, 16, 0.55, {0.12, 0.85, 0.1, 0.01, 0.3, 0.0}};
    benign.host = {SourceOs::LINUX,
                   "nginx",
                   {},
                   0,
                   0,
                   {"GET /index.html 200 from {ip}", "session opened for user {user}",
                    "GET /assets/app.js 200 from {ip}", "health check ok after {n} ms"},
                   1,
                   3};
    benign.victim_hostname = "files-01";
    benign.victim_ip = parse_ipv4("10.20.0.10");
    benign.client_ip = parse_ipv4("10.10.0.1");
    benign.service_port = 443;

    ClassProfile dns_flood;
    dns_flood.name = "DnsFlood";
    dns_flood.network = {Protocol::UDP, 1180.0, 120.0, 25.0, 20, 30, 0.85, {}};
    dns_flood.host = {SourceOs::LINUX,
                      "named",
                      {},
                      0,
                      0,
                      {"query storm from {ip}, dropped {n} packets",
                       "rate limit exceeded for zone lookup from {ip}"},
                      1,
                      3};
    dns_flood.victim_hostname = "dns-01";
    dns_flood.victim_ip = parse_ipv4("10.20.0.11");
    dns_flood.client_ip = parse_ipv4("10.10.0.2");
    dns_flood.service_port = 53;

    ClassProfile ssh_brute;
    ssh_brute.name = "SshBruteforce";
    ssh_brute.network = {Protocol::TCP, 95.0, 14.0, 0.8, 4, 8, 0.5, {0.5, 0.6, 0.1, 0.05, 0.2, 0.0}};
    ssh_brute.host = {SourceOs::LINUX,
                      "sshd",
                      {},
                      0,
                      0,
                      {"Failed password for invalid user {user} from {ip} port {n}",
                       "Disconnected from authenticating user {user} {ip}"},
                      1,
                      3};
    ssh_brute.victim_hostname = "bastion-01";
    ssh_brute.victim_ip = parse_ipv4("10.20.0.12");
    ssh_brute.client_ip = parse_ipv4("10.10.0.3");
    ssh_brute.service_port = 22;

    ClassProfile exfil;
    exfil.name = "DataExfil";
    exfil.network = {Protocol::TCP, 1420.0, 60.0, 1.2, 12, 20, 0.7, {0.1, 0.9, 0.05, 0.01, 0.5, 0.0}};
    exfil.host = {SourceOs::WINDOWS,
                  "Microsoft-Windows-Security-Auditing",
                  {4663, 5145},
                  0x8020000000000000ull,
                  12800,
                  {"An attempt was made to access an object by account {user}.",
                   "A network share object was checked for access from {ip}."},
                  1,
                  3};
    exfil.victim_hostname = "db-01";
    exfil.victim_ip = parse_ipv4("10.20.0.13");
    exfil.client_ip = parse_ipv4("10.10.0.4");
    exfil.service_port = 445;

    ClassProfile slow_http;
    slow_http.name = "SlowHttpAttack";
    slow_http.network = ambiguous;
    slow_http.host = {SourceOs::WINDOWS,
                      "Http-Request-Queue",
                      {6201, 6202},
                      0x10ull,
                      400,
                      {"Connection header timeout from {ip} after {n} incomplete headers.",
                       "Request queue saturated, {n} sockets held open by {ip}."},
                      1,
                      3};
    slow_http.victim_hostname = "web-01";
    slow_http.victim_ip = parse_ipv4("10.20.0.14");
    slow_http.client_ip = parse_ipv4("10.10.0.5");
    slow_http.service_port = 80;

    ClassProfile ftp_brute;
    ftp_brute.name = "FtpBruteforce";
    ftp_brute.network = ambiguous;
    ftp_brute.host = {SourceOs::LINUX,
                      "vsftpd",
                      {},
                      0,
                      0,
                      {"Failed password for ftp user {user} from {ip}",
                       "Maximum login attempts exceeded for {user}"},
                      1,
                      3};
    ftp_brute.victim_hostname = "ftp-01";
    ftp_brute.victim_ip = parse_ipv4("10.20.0.15");
    ftp_brute.client_ip = parse_ipv4("10.10.0.6");
    ftp_brute.service_port = 21;

    spec.classes = {benign, dns_flood, ssh_brute, exfil, slow_http, ftp_brute};
    return spec;
}

// ---------------------------------------------------------------------------
// Monte-Carlo Bayes ceiling for network-only classifiers. Raw per-flow data
// (packet count, lengths, inter-arrival times, flags, direction choices) is
// drawn from each class profile; the Bayes rule scores the exact generative
// log-likelihood under every class and breaks exact ties uniformly. The
// resulting macro F1 bounds what any classifier on derived network features
// can achieve.

namespace synth_detail {

inline double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

// log P(length == k) under the rounded, clipped normal of the profile
inline double length_log_pmf(int64_t k, const NetworkProfile& p) {
    double prob;
    if (k < 1) return -1e18;
    if (k == 1)
        prob = normal_cdf(1.5, p.len_mean, p.len_std);
    else
        prob = normal_cdf(static_cast<double>(k) + 0.5, p.len_mean, p.len_std) -
               normal_cdf(static_cast<double>(k) - 0.5, p.len_mean, p.len_std);
    return prob > 0.0 ? std::log(prob) : -1e18;
}

struct RawFlow {
    int64_t count;
    Protocol protocol;
    std::vector<uint64_t> lengths;
    std::vector<double> iats;
    std::vector<uint8_t> flags;    // per packet bitmask (TCP only)
    std::vector<uint8_t> forward;  // direction draws after the first packet
};

inline RawFlow draw_raw_flow(Rng& rng, const NetworkProfile& p) {
    RawFlow f;
    f.protocol = p.protocol;
    f.count = rng.uniform_int(p.packets_min, p.packets_max);
    for (int64_t i = 0; i < f.count; ++i) {
        f.lengths.push_back(sample_length(rng, p));
        if (i > 0) {
            f.iats.push_back(rng.exponential(p.iat_rate));
            f.forward.push_back(rng.bernoulli(p.p_forward) ? 1 : 0);
        }
        uint8_t bits = 0;
        if (p.protocol == Protocol::TCP)
            for (size_t b = 0; b < 6; ++b)
                if (rng.bernoulli(p.flag_probs[b])) bits |= tcp_flag_table()[b].second;
        f.flags.push_back(bits);
    }
    return f;
}

inline double flow_log_likelihood(const RawFlow& f, const NetworkProfile& p) {
    if (f.protocol != p.protocol) return -1e18;
    if (f.count < p.packets_min || f.count > p.packets_max) return -1e18;
    double ll = -std::log(static_cast<double>(p.packets_max - p.packets_min + 1));
    for (uint64_t len : f.lengths) ll += length_log_pmf(static_cast<int64_t>(len), p);
    for (double iat : f.iats) ll += std::log(p.iat_rate) - p.iat_rate * iat;
    for (uint8_t fwd : f.forward) {
        const double prob = fwd ? p.p_forward : 1.0 - p.p_forward;
        ll += prob > 0.0 ? std::log(prob) : -1e18;
    }
    if (p.protocol == Protocol::TCP) {
        for (uint8_t bits : f.flags)
            for (size_t b = 0; b < 6; ++b) {
                const bool set = bits & tcp_flag_table()[b].second;
                const double prob = set ? p.flag_probs[b] : 1.0 - p.flag_probs[b];
                ll += prob > 0.0 ? std::log(prob) : -1e18;
            }
    }
    return ll;
}

} // namespace synth_detail

// Returns the Monte-Carlo macro F1 of the Bayes-optimal rule on raw network
// data, n_mc draws per class.
inline double ambiguity_bound(const ScenarioSpec& spec, size_t n_mc, uint64_t seed = 1) {
    spec.validate();
    const size_t K = spec.classes.size();
    Rng rng(seed);
    std::vector<std::vector<size_t>> confusion(K, std::vector<size_t>(K, 0));
    std::vector<double> ll(K);
    for (size_t c = 0; c < K; ++c) {
        for (size_t draw = 0; draw < n_mc; ++draw) {
            const auto flow = synth_detail::draw_raw_flow(rng, spec.classes[c].network);
            for (size_t k = 0; k < K; ++k)
                ll[k] = synth_detail::flow_log_likelihood(flow, spec.classes[k].network);
            double best = ll[0];
            for (size_t k = 1; k < K; ++k) best = std::max(best, ll[k]);
            std::vector<size_t> ties;
            for (size_t k = 0; k < K; ++k)
                if (ll[k] == best) ties.push_back(k);
            const size_t pick =
                ties[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(ties.size()) - 1))];
            ++confusion[c][pick];
        }
    }
    std::vector<std::string> names;
    for (const auto& c : spec.classes) names.push_back(c.name);
    return metrics_from_confusion(confusion, names).macro_f1;
}

} // namespace cids
