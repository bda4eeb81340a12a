#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cids/errors.hpp"

namespace cids {

// ---------------------------------------------------------------------------
// IPv4 address

struct Ipv4 {
    uint32_t value = 0; // host byte order

    friend auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

inline Ipv4 parse_ipv4(std::string_view s) {
    if (s.find(':') != std::string_view::npos)
        throw InputError("IPv6 addresses are not supported: '" + std::string(s) + "'");
    uint32_t value = 0;
    int octets = 0;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t dot = s.find('.', pos);
        std::string_view part = s.substr(pos, (dot == std::string_view::npos ? s.size() : dot) - pos);
        if (part.empty() || part.size() > 3)
            throw InputError("invalid IPv4 address: '" + std::string(s) + "'");
        uint32_t octet = 0;
        for (char c : part) {
            if (c < '0' || c > '9')
                throw InputError("invalid IPv4 address: '" + std::string(s) + "'");
            octet = octet * 10 + static_cast<uint32_t>(c - '0');
        }
        if (octet > 255)
            throw InputError("invalid IPv4 address: '" + std::string(s) + "'");
        value = (value << 8) | octet;
        ++octets;
        if (dot == std::string_view::npos) break;
        pos = dot + 1;
        if (pos == s.size())
            throw InputError("invalid IPv4 address: '" + std::string(s) + "'");
    }
    if (octets != 4)
        throw InputError("invalid IPv4 address: '" + std::string(s) + "'");
    return Ipv4{value};
}

inline std::string format_ipv4(Ipv4 ip) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (ip.value >> 24) & 0xff, (ip.value >> 16) & 0xff,
                  (ip.value >> 8) & 0xff, ip.value & 0xff);
    return buf;
}

// ---------------------------------------------------------------------------
// Session key

enum class Protocol { TCP, UDP, OTHER };

inline std::string_view protocol_name(Protocol p) {
    switch (p) {
    case Protocol::TCP: return "TCP";
    case Protocol::UDP: return "UDP";
    default: return "OTHER";
    }
}

inline Protocol parse_protocol(std::string_view s) {
    if (s == "TCP") return Protocol::TCP;
    if (s == "UDP") return Protocol::UDP;
    if (s == "OTHER") return Protocol::OTHER;
    throw InputError("unknown protocol: '" + std::string(s) + "'");
}

// Canonicalized bidirectional 5-tuple. The lexicographically smaller
// (ip, port) endpoint is stored as the source, so both directions of a
// conversation map to the same key.
struct SessionKey {
    Ipv4 src_ip;
    uint16_t src_port = 0;
    Ipv4 dst_ip;
    uint16_t dst_port = 0;
    Protocol protocol = Protocol::TCP;

    friend auto operator<=>(const SessionKey&, const SessionKey&) = default;
};

// Returns the canonical key plus whether (a_ip, a_port) is its forward side.
inline std::pair<SessionKey, bool> canonical_session_key(Ipv4 a_ip, uint16_t a_port, Ipv4 b_ip,
                                                         uint16_t b_port, Protocol proto) {
    const bool a_first = std::tie(a_ip.value, a_port) <= std::tie(b_ip.value, b_port);
    SessionKey key;
    key.protocol = proto;
    if (a_first) {
        key.src_ip = a_ip;
        key.src_port = a_port;
        key.dst_ip = b_ip;
        key.dst_port = b_port;
    } else {
        key.src_ip = b_ip;
        key.src_port = b_port;
        key.dst_ip = a_ip;
        key.dst_port = a_port;
    }
    return {key, a_first};
}

// ---------------------------------------------------------------------------
// Samples

struct FlowRecord {
    SessionKey key;
    double window_start = 0.0;
    double window_len = 0.0;
    std::vector<double> features;
    std::optional<std::string> label;
};

enum class SourceOs { WINDOWS, LINUX };

inline std::string_view source_os_name(SourceOs os) {
    return os == SourceOs::WINDOWS ? "WINDOWS" : "LINUX";
}

inline SourceOs parse_source_os(std::string_view s) {
    if (s == "WINDOWS") return SourceOs::WINDOWS;
    if (s == "LINUX") return SourceOs::LINUX;
    throw InputError("unknown source_os: '" + std::string(s) + "'");
}

inline constexpr size_t kEventFeatureCount = 8;

struct HostEvent {
    Ipv4 host_ip;
    double ts = 0.0;
    std::vector<double> event_features; // length kEventFeatureCount
    std::string message;
    SourceOs source_os = SourceOs::LINUX;
};

// Aligned sample: one flow joined with the host events inside its window.
struct CidsSample {
    std::vector<double> network_features;
    std::vector<std::vector<double>> event_matrix; // n_max rows of m entries
    std::vector<uint8_t> event_row_mask;           // 1 = real event row
    std::string message;
    std::string label;

    bool operator==(const CidsSample&) const = default;
};

// Ground-truth record joining a flow (by canonical key and window) to its
// class name.
struct FlowLabel {
    SessionKey key;
    double window_start = 0.0;
    std::string class_name;
};

// ---------------------------------------------------------------------------
// Label taxonomy

inline constexpr std::string_view kBenignLabel = "Benign";

// Dense class index assignment. "Benign" is pinned to index 0 when present;
// remaining names are ordered lexicographically.
class LabelTaxonomy {
public:
    LabelTaxonomy() = default;

    static LabelTaxonomy from_names(std::vector<std::string> names) {
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        auto benign = std::find(names.begin(), names.end(), std::string(kBenignLabel));
        if (benign != names.end()) {
            std::rotate(names.begin(), benign, benign + 1);
        }
        LabelTaxonomy t;
        t.names_ = std::move(names);
        for (size_t i = 0; i < t.names_.size(); ++i) t.index_[t.names_[i]] = i;
        return t;
    }

    size_t encode(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end())
            throw InputError("unknown class label: '" + std::string(name) + "'");
        return it->second;
    }

    const std::string& decode(size_t index) const {
        if (index >= names_.size())
            throw InputError("class index out of range: " + std::to_string(index));
        return names_[index];
    }

    bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
    size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Sample validation

struct ExpectedDims {
    size_t n_max = 28;
    size_t m = kEventFeatureCount;
    size_t network_width = 0; // 0 = unchecked
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

// Total over arbitrary input: reports violations, never throws.
inline ValidationReport validate_sample(const CidsSample& s, const ExpectedDims& dims) {
    ValidationReport report;
    auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

    if (s.event_matrix.size() != dims.n_max)
        fail("event_matrix has " + std::to_string(s.event_matrix.size()) + " rows, expected " +
             std::to_string(dims.n_max));
    for (size_t i = 0; i < s.event_matrix.size(); ++i) {
        if (s.event_matrix[i].size() != dims.m) {
            fail("event_matrix row " + std::to_string(i) + " has " +
                 std::to_string(s.event_matrix[i].size()) + " entries, expected " + std::to_string(dims.m));
            break;
        }
    }
    if (s.event_row_mask.size() != s.event_matrix.size())
        fail("event_row_mask length " + std::to_string(s.event_row_mask.size()) +
             " does not match event_matrix rows " + std::to_string(s.event_matrix.size()));

    const size_t rows = std::min(s.event_row_mask.size(), s.event_matrix.size());
    bool seen_false = false;
    for (size_t i = 0; i < rows; ++i) {
        if (!s.event_row_mask[i]) {
            seen_false = true;
            for (double v : s.event_matrix[i]) {
                if (v != 0.0) {
                    fail("masked row " + std::to_string(i) + " not zero");
                    break;
                }
            }
        } else if (seen_false) {
            fail("mask true entries are not a contiguous prefix (row " + std::to_string(i) + ")");
            seen_false = false; // report once per gap
        }
    }

    for (const auto& row : s.event_matrix)
        for (double v : row)
            if (!std::isfinite(v)) {
                fail("event_matrix contains non-finite values");
                goto matrix_done;
            }
matrix_done:
    if (dims.network_width != 0 && s.network_features.size() != dims.network_width)
        fail("network_features length " + std::to_string(s.network_features.size()) + ", expected " +
             std::to_string(dims.network_width));
    for (double v : s.network_features)
        if (!std::isfinite(v)) {
            fail("network_features contain non-finite values");
            break;
        }
    return report;
}

inline size_t encode_label(std::string_view name, const LabelTaxonomy& taxonomy) {
    return taxonomy.encode(name);
}

inline const std::string& decode_label(size_t index, const LabelTaxonomy& taxonomy) {
    return taxonomy.decode(index);
}

} // namespace cids
