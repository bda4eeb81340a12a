#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cids/core.hpp"
#include "cids/errors.hpp"

namespace cids {

// ---------------------------------------------------------------------------
// Packet records

enum TcpFlag : uint8_t {
    TCP_SYN = 1 << 0,
    TCP_ACK = 1 << 1,
    TCP_FIN = 1 << 2,
    TCP_RST = 1 << 3,
    TCP_PSH = 1 << 4,
    TCP_URG = 1 << 5,
};

inline const std::array<std::pair<std::string_view, uint8_t>, 6>& tcp_flag_table() {
    static const std::array<std::pair<std::string_view, uint8_t>, 6> table = {{
        {"SYN", TCP_SYN}, {"ACK", TCP_ACK}, {"FIN", TCP_FIN},
        {"RST", TCP_RST}, {"PSH", TCP_PSH}, {"URG", TCP_URG},
    }};
    return table;
}

inline uint8_t parse_tcp_flag(std::string_view name, size_t line_no) {
    for (const auto& [n, bit] : tcp_flag_table())
        if (n == name) return bit;
    throw InputError("line " + std::to_string(line_no) + ": unknown TCP flag '" + std::string(name) + "'");
}

struct PacketRecord {
    double ts = 0.0;
    Ipv4 src_ip;
    uint16_t src_port = 0;
    Ipv4 dst_ip;
    uint16_t dst_port = 0;
    Protocol protocol = Protocol::TCP;
    uint64_t length = 0;
    uint8_t tcp_flags = 0; // empty for non-TCP
};

enum class Direction { FWD, BWD };

// Both directions of a 5-tuple map to the same canonical key; FWD means the
// packet's source matches the key's canonical source endpoint.
inline std::pair<SessionKey, Direction> assign_session(const PacketRecord& p) {
    auto [key, forward] =
        canonical_session_key(p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.protocol);
    return {key, forward ? Direction::FWD : Direction::BWD};
}

// ---------------------------------------------------------------------------
// Windowed flow aggregation

struct WindowedFlow {
    SessionKey key;
    double window_start = 0.0;
    std::vector<PacketRecord> packets; // sorted by ts, stable
};

// Windows are aligned to a global grid: floor(ts / window_len) * window_len,
// half-open [start, start + len). A session spanning two windows yields two
// flows. Output is sorted by (window_start, key).
inline std::vector<WindowedFlow> aggregate_flows(const std::vector<PacketRecord>& packets,
                                                 double window_len) {
    if (!(window_len > 0.0)) throw ConfigError("window_len must be positive");
    std::map<std::pair<double, SessionKey>, std::vector<PacketRecord>> groups;
    for (const auto& p : packets) {
        auto [key, dir] = assign_session(p);
        (void)dir;
        const double window_start = std::floor(p.ts / window_len) * window_len;
        groups[{window_start, key}].push_back(p);
    }
    std::vector<WindowedFlow> out;
    out.reserve(groups.size());
    for (auto& [gk, pkts] : groups) {
        std::stable_sort(pkts.begin(), pkts.end(),
                         [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
        out.push_back(WindowedFlow{gk.second, gk.first, std::move(pkts)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature layout
//
// 42 entries. Per scope (fwd, bwd, total): packet count, then packet-length
// sum/min/max/mean/std, then inter-arrival-time sum/min/max/mean/std. The
// total IAT series is the union of the two per-direction IAT series, so
// counts and sums add across scopes. Then the six TCP flag counts, flow
// duration, packets/s, bytes/s. Std is the sample (n-1) deviation with
// std = 0 for fewer than two elements; empty series report all-zero stats.

inline const std::vector<std::string>& flow_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (std::string_view scope : {"fwd", "bwd", "total"}) {
            n.push_back(std::string(scope) + "_pkt_count");
            for (std::string_view series : {"len", "iat"})
                for (std::string_view stat : {"sum", "min", "max", "mean", "std"})
                    n.push_back(std::string(scope) + "_" + std::string(series) + "_" + std::string(stat));
        }
        for (std::string_view flag : {"syn", "ack", "fin", "rst", "psh", "urg"})
            n.push_back(std::string(flag) + "_count");
        n.push_back("duration");
        n.push_back("pkts_per_sec");
        n.push_back("bytes_per_sec");
        return n;
    }();
    return names;
}

inline constexpr size_t kFlowFeatureCount = 42;

namespace detail {

struct SeriesStats {
    double sum = 0, min = 0, max = 0, mean = 0, stddev = 0;
};

inline SeriesStats series_stats(const std::vector<double>& v) {
    SeriesStats s;
    if (v.empty()) return s;
    s.min = v[0];
    s.max = v[0];
    for (double x : v) {
        s.sum += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.mean = s.sum / static_cast<double>(v.size());
    if (v.size() >= 2) {
        double ss = 0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

inline std::vector<double> iats(const std::vector<double>& ts) {
    std::vector<double> out;
    if (ts.size() < 2) return out;
    out.reserve(ts.size() - 1);
    for (size_t i = 1; i < ts.size(); ++i) out.push_back(ts[i] - ts[i - 1]);
    return out;
}

inline void emit_scope(std::vector<double>& f, const std::vector<double>& lens,
                       const std::vector<double>& iat) {
    f.push_back(static_cast<double>(lens.size()));
    for (const auto& s : {series_stats(lens), series_stats(iat)}) {
        f.push_back(s.sum);
        f.push_back(s.min);
        f.push_back(s.max);
        f.push_back(s.mean);
        f.push_back(s.stddev);
    }
}

} // namespace detail

inline std::vector<double> compute_flow_features(const WindowedFlow& flow) {
    if (flow.packets.empty()) throw InputError("flow has no packets");

    std::vector<double> fwd_len, bwd_len, fwd_ts, bwd_ts, all_len;
    std::array<size_t, 6> flag_counts{};
    uint64_t total_bytes = 0;
    for (const auto& p : flow.packets) {
        auto [key, dir] = assign_session(p);
        (void)key;
        const double len = static_cast<double>(p.length);
        all_len.push_back(len);
        total_bytes += p.length;
        if (dir == Direction::FWD) {
            fwd_len.push_back(len);
            fwd_ts.push_back(p.ts);
        } else {
            bwd_len.push_back(len);
            bwd_ts.push_back(p.ts);
        }
        if (p.protocol == Protocol::TCP) {
            for (size_t i = 0; i < tcp_flag_table().size(); ++i)
                if (p.tcp_flags & tcp_flag_table()[i].second) ++flag_counts[i];
        }
    }

    const auto fwd_iat = detail::iats(fwd_ts);
    const auto bwd_iat = detail::iats(bwd_ts);
    std::vector<double> total_iat = fwd_iat;
    total_iat.insert(total_iat.end(), bwd_iat.begin(), bwd_iat.end());

    std::vector<double> f;
    f.reserve(kFlowFeatureCount);
    detail::emit_scope(f, fwd_len, fwd_iat);
    detail::emit_scope(f, bwd_len, bwd_iat);
    detail::emit_scope(f, all_len, total_iat);
    for (size_t c : flag_counts) f.push_back(static_cast<double>(c));

    const double duration = flow.packets.back().ts - flow.packets.front().ts;
    f.push_back(duration);
    if (duration > 0.0) {
        f.push_back(static_cast<double>(flow.packets.size()) / duration);
        f.push_back(static_cast<double>(total_bytes) / duration);
    } else {
        f.push_back(0.0);
        f.push_back(0.0);
    }
    return f;
}

inline FlowRecord make_flow_record(const WindowedFlow& flow, double window_len) {
    FlowRecord r;
    r.key = flow.key;
    r.window_start = flow.window_start;
    r.window_len = window_len;
    r.features = compute_flow_features(flow);
    return r;
}

} // namespace cids
