#pragma once

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cids/core.hpp"
#include "cids/errors.hpp"
#include "cids/flowmeter.hpp"

namespace cids {

using json = nlohmann::json;

namespace detail {

inline json parse_json_line(const std::string& line, size_t line_no) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw InputError("line " + std::to_string(line_no) + ": malformed JSON");
    return j;
}

template <typename T>
T require(const json& j, const char* key, size_t line_no) {
    auto it = j.find(key);
    if (it == j.end())
        throw InputError("line " + std::to_string(line_no) + ": missing key '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw InputError("line " + std::to_string(line_no) + ": key '" + key + "' has wrong type");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// SessionKey

inline json session_key_to_json(const SessionKey& k) {
    return json{{"src_ip", format_ipv4(k.src_ip)},
                {"src_port", k.src_port},
                {"dst_ip", format_ipv4(k.dst_ip)},
                {"dst_port", k.dst_port},
                {"protocol", std::string(protocol_name(k.protocol))}};
}

inline SessionKey session_key_from_json(const json& j, size_t line_no) {
    SessionKey k;
    k.src_ip = parse_ipv4(detail::require<std::string>(j, "src_ip", line_no));
    k.src_port = static_cast<uint16_t>(detail::require<uint32_t>(j, "src_port", line_no));
    k.dst_ip = parse_ipv4(detail::require<std::string>(j, "dst_ip", line_no));
    k.dst_port = static_cast<uint16_t>(detail::require<uint32_t>(j, "dst_port", line_no));
    k.protocol = parse_protocol(detail::require<std::string>(j, "protocol", line_no));
    return k;
}

// ---------------------------------------------------------------------------
// Packet records (flowmeter input)

inline json packet_to_json(const PacketRecord& p) {
    json j{{"ts", p.ts},
           {"src_ip", format_ipv4(p.src_ip)},
           {"src_port", p.src_port},
           {"dst_ip", format_ipv4(p.dst_ip)},
           {"dst_port", p.dst_port},
           {"protocol", std::string(protocol_name(p.protocol))},
           {"length", p.length}};
    if (p.tcp_flags != 0) {
        json flags = json::array();
        for (const auto& [name, bit] : tcp_flag_table())
            if (p.tcp_flags & bit) flags.push_back(std::string(name));
        j["flags"] = flags;
    }
    return j;
}

inline PacketRecord packet_from_json(const json& j, size_t line_no) {
    PacketRecord p;
    p.ts = detail::require<double>(j, "ts", line_no);
    p.src_ip = parse_ipv4(detail::require<std::string>(j, "src_ip", line_no));
    p.src_port = static_cast<uint16_t>(detail::require<uint32_t>(j, "src_port", line_no));
    p.dst_ip = parse_ipv4(detail::require<std::string>(j, "dst_ip", line_no));
    p.dst_port = static_cast<uint16_t>(detail::require<uint32_t>(j, "dst_port", line_no));
    p.protocol = parse_protocol(detail::require<std::string>(j, "protocol", line_no));
    const auto length = detail::require<int64_t>(j, "length", line_no);
    if (length < 0)
        throw InputError("line " + std::to_string(line_no) + ": negative packet length");
    p.length = static_cast<uint64_t>(length);
    if (auto it = j.find("flags"); it != j.end() && p.protocol == Protocol::TCP) {
        if (!it->is_array())
            throw InputError("line " + std::to_string(line_no) + ": 'flags' must be an array");
        for (const auto& f : *it) p.tcp_flags |= parse_tcp_flag(f.get<std::string>(), line_no);
    }
    if (!std::isfinite(p.ts))
        throw InputError("line " + std::to_string(line_no) + ": non-finite timestamp");
    return p;
}

inline std::vector<PacketRecord> read_packets(std::istream& in) {
    std::vector<PacketRecord> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(packet_from_json(detail::parse_json_line(line, line_no), line_no));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flow records

inline json flow_record_to_json(const FlowRecord& f) {
    json j{{"key", session_key_to_json(f.key)},
           {"window_start", f.window_start},
           {"window_len", f.window_len},
           {"features", f.features}};
    if (f.label) j["label"] = *f.label;
    return j;
}

inline FlowRecord flow_record_from_json(const json& j, size_t line_no) {
    FlowRecord f;
    auto key_it = j.find("key");
    if (key_it == j.end())
        throw InputError("line " + std::to_string(line_no) + ": missing key 'key'");
    f.key = session_key_from_json(*key_it, line_no);
    f.window_start = detail::require<double>(j, "window_start", line_no);
    f.window_len = detail::require<double>(j, "window_len", line_no);
    f.features = detail::require<std::vector<double>>(j, "features", line_no);
    if (auto it = j.find("label"); it != j.end()) f.label = it->get<std::string>();
    return f;
}

// The flow file begins with one header object naming the feature layout.
inline void write_flows(std::ostream& out, const std::vector<FlowRecord>& flows) {
    json header{{"feature_layout", flow_feature_names()}};
    out << header.dump() << '\n';
    for (const auto& f : flows) out << flow_record_to_json(f).dump() << '\n';
}

inline std::vector<FlowRecord> read_flows(std::istream& in) {
    std::vector<FlowRecord> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = detail::parse_json_line(line, line_no);
        if (j.contains("feature_layout")) continue; // layout header
        out.push_back(flow_record_from_json(j, line_no));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Host events

inline json host_event_to_json(const HostEvent& e) {
    return json{{"host_ip", format_ipv4(e.host_ip)},
                {"ts", e.ts},
                {"event_features", e.event_features},
                {"message", e.message},
                {"source_os", std::string(source_os_name(e.source_os))}};
}

inline HostEvent host_event_from_json(const json& j, size_t line_no) {
    HostEvent e;
    e.host_ip = parse_ipv4(detail::require<std::string>(j, "host_ip", line_no));
    e.ts = detail::require<double>(j, "ts", line_no);
    e.event_features = detail::require<std::vector<double>>(j, "event_features", line_no);
    e.message = detail::require<std::string>(j, "message", line_no);
    e.source_os = parse_source_os(detail::require<std::string>(j, "source_os", line_no));
    if (e.event_features.size() != kEventFeatureCount)
        throw InputError("line " + std::to_string(line_no) + ": event_features must have " +
                         std::to_string(kEventFeatureCount) + " entries");
    return e;
}

inline void write_host_events(std::ostream& out, const std::vector<HostEvent>& events) {
    for (const auto& e : events) out << host_event_to_json(e).dump() << '\n';
}

inline std::vector<HostEvent> read_host_events(std::istream& in) {
    std::vector<HostEvent> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(host_event_from_json(detail::parse_json_line(line, line_no), line_no));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CIDS samples

inline json cids_sample_to_json(const CidsSample& s) {
    return json{{"network_features", s.network_features},
                {"event_matrix", s.event_matrix},
                {"event_row_mask", std::vector<bool>(s.event_row_mask.begin(), s.event_row_mask.end())},
                {"message", s.message},
                {"label", s.label}};
}

inline CidsSample cids_sample_from_json(const json& j, size_t line_no) {
    CidsSample s;
    s.network_features = detail::require<std::vector<double>>(j, "network_features", line_no);
    s.event_matrix = detail::require<std::vector<std::vector<double>>>(j, "event_matrix", line_no);
    const auto mask = detail::require<std::vector<bool>>(j, "event_row_mask", line_no);
    s.event_row_mask.assign(mask.begin(), mask.end());
    s.message = detail::require<std::string>(j, "message", line_no);
    s.label = detail::require<std::string>(j, "label", line_no);
    return s;
}

inline void write_cids_samples(std::ostream& out, const std::vector<CidsSample>& samples) {
    for (const auto& s : samples) out << cids_sample_to_json(s).dump() << '\n';
}

inline std::vector<CidsSample> read_cids_samples(std::istream& in) {
    std::vector<CidsSample> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(cids_sample_from_json(detail::parse_json_line(line, line_no), line_no));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flow labels: {"key": {...}, "window_start": w, "class": name}

inline json flow_label_to_json(const FlowLabel& l) {
    return json{{"key", session_key_to_json(l.key)},
                {"window_start", l.window_start},
                {"class", l.class_name}};
}

inline std::vector<FlowLabel> read_flow_labels(std::istream& in) {
    std::vector<FlowLabel> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = detail::parse_json_line(line, line_no);
        FlowLabel l;
        auto key_it = j.find("key");
        if (key_it == j.end())
            throw InputError("line " + std::to_string(line_no) + ": missing key 'key'");
        l.key = session_key_from_json(*key_it, line_no);
        l.window_start = detail::require<double>(j, "window_start", line_no);
        l.class_name = detail::require<std::string>(j, "class", line_no);
        out.push_back(std::move(l));
    }
    return out;
}

// ---------------------------------------------------------------------------
// File helpers

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open output file: " + path);
    return out;
}

} // namespace cids
