#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cids/core.hpp"
#include "cids/errors.hpp"

namespace cids {

enum class IpMatchMode { EITHER_ENDPOINT, DST_ONLY, SRC_ONLY };
enum class Truncation { KEEP_LATEST, KEEP_EARLIEST };
enum class MissingHostPolicy { EXCLUDE, ZERO_PAD };

struct AlignConfig {
    IpMatchMode ip_match_mode = IpMatchMode::EITHER_ENDPOINT;
    size_t n_max = 28;
    size_t m = kEventFeatureCount;
    Truncation truncation = Truncation::KEEP_LATEST;
    MissingHostPolicy missing_host_policy = MissingHostPolicy::EXCLUDE;
    std::string message_separator = " [SEP] ";
};

inline bool ip_matches(Ipv4 host_ip, const SessionKey& key, IpMatchMode mode) {
    switch (mode) {
    case IpMatchMode::EITHER_ENDPOINT: return host_ip == key.src_ip || host_ip == key.dst_ip;
    case IpMatchMode::DST_ONLY: return host_ip == key.dst_ip;
    case IpMatchMode::SRC_ONLY: return host_ip == key.src_ip;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Event index: per-IP buckets sorted by timestamp. Ties keep original input
// order, tracked through a sequence number so index-based and brute-force
// matching order events identically.

class EventIndex {
public:
    struct Entry {
        const HostEvent* event;
        size_t seq; // position in the original input list
    };

    static EventIndex build(const std::vector<HostEvent>& events) {
        EventIndex index;
        for (size_t i = 0; i < events.size(); ++i)
            index.buckets_[events[i].host_ip].push_back(Entry{&events[i], i});
        for (auto& [ip, bucket] : index.buckets_) {
            std::stable_sort(bucket.begin(), bucket.end(),
                             [](const Entry& a, const Entry& b) { return a.event->ts < b.event->ts; });
        }
        return index;
    }

    const std::vector<Entry>* bucket(Ipv4 ip) const {
        auto it = buckets_.find(ip);
        return it == buckets_.end() ? nullptr : &it->second;
    }

    size_t bucket_count() const { return buckets_.size(); }

private:
    std::map<Ipv4, std::vector<Entry>> buckets_;
};

// ---------------------------------------------------------------------------
// Padding / truncation to the fixed n_max x m event matrix

struct PaddedEvents {
    std::vector<std::vector<double>> matrix; // n_max rows of m
    std::vector<uint8_t> mask;               // true-prefix
};

inline PaddedEvents pad_truncate(const std::vector<std::vector<double>>& rows, size_t n_max, size_t m,
                                 Truncation truncation) {
    for (const auto& r : rows)
        if (r.size() != m)
            throw ShapeError("event feature row has " + std::to_string(r.size()) +
                             " entries, expected " + std::to_string(m));
    PaddedEvents out;
    out.matrix.assign(n_max, std::vector<double>(m, 0.0));
    out.mask.assign(n_max, 0);
    size_t first = 0;
    size_t count = rows.size();
    if (count > n_max) {
        if (truncation == Truncation::KEEP_LATEST) first = count - n_max;
        count = n_max;
    }
    for (size_t i = 0; i < count; ++i) {
        out.matrix[i] = rows[first + i];
        out.mask[i] = 1;
    }
    return out;
}

namespace detail {

// Builds the sample for one flow from its time-ordered matches.
// Returns false when the flow is dropped under EXCLUDE.
inline bool assemble_sample(const FlowRecord& flow, const std::vector<const HostEvent*>& matches,
                            const AlignConfig& cfg, CidsSample& out) {
    if (matches.empty() && cfg.missing_host_policy == MissingHostPolicy::EXCLUDE) return false;
    if (!flow.label)
        throw InputError("flow at window_start " + std::to_string(flow.window_start) +
                         " has no label; alignment requires labeled flows");

    std::vector<std::vector<double>> rows;
    rows.reserve(matches.size());
    std::string message;
    for (size_t i = 0; i < matches.size(); ++i) {
        rows.push_back(matches[i]->event_features);
        if (i > 0) message += cfg.message_separator;
        message += matches[i]->message;
    }
    PaddedEvents padded = pad_truncate(rows, cfg.n_max, cfg.m, cfg.truncation);
    out.network_features = flow.features;
    out.event_matrix = std::move(padded.matrix);
    out.event_row_mask = std::move(padded.mask);
    out.message = std::move(message);
    out.label = *flow.label;
    return true;
}

} // namespace detail

// Joins each flow with the host events that match its IP (per ip_match_mode)
// and fall inside its half-open window. Matches are ordered ascending by
// timestamp (input order on ties). Flows without matches are dropped or
// zero-padded per missing_host_policy. Output preserves flow input order.
inline std::vector<CidsSample> align(const std::vector<FlowRecord>& flows, const EventIndex& index,
                                     const AlignConfig& cfg) {
    if (cfg.n_max < 1) throw ConfigError("align.n_max must be >= 1");
    std::vector<CidsSample> out;
    out.reserve(flows.size());
    std::vector<const std::vector<EventIndex::Entry>*> buckets;
    for (const auto& flow : flows) {
        const double lo = flow.window_start;
        const double hi = flow.window_start + flow.window_len;

        buckets.clear();
        switch (cfg.ip_match_mode) {
        case IpMatchMode::EITHER_ENDPOINT:
            if (auto* b = index.bucket(flow.key.src_ip)) buckets.push_back(b);
            if (flow.key.dst_ip != flow.key.src_ip)
                if (auto* b = index.bucket(flow.key.dst_ip)) buckets.push_back(b);
            break;
        case IpMatchMode::DST_ONLY:
            if (auto* b = index.bucket(flow.key.dst_ip)) buckets.push_back(b);
            break;
        case IpMatchMode::SRC_ONLY:
            if (auto* b = index.bucket(flow.key.src_ip)) buckets.push_back(b);
            break;
        }

        std::vector<EventIndex::Entry> merged;
        for (const auto* bucket : buckets) {
            auto first = std::lower_bound(bucket->begin(), bucket->end(), lo,
                                          [](const EventIndex::Entry& e, double t) { return e.event->ts < t; });
            auto last = std::lower_bound(first, bucket->end(), hi,
                                         [](const EventIndex::Entry& e, double t) { return e.event->ts < t; });
            merged.insert(merged.end(), first, last);
        }
        // Two buckets at most; restore global (ts, input order) ordering.
        std::sort(merged.begin(), merged.end(), [](const EventIndex::Entry& a, const EventIndex::Entry& b) {
            return a.event->ts != b.event->ts ? a.event->ts < b.event->ts : a.seq < b.seq;
        });

        std::vector<const HostEvent*> matches;
        matches.reserve(merged.size());
        for (const auto& e : merged) matches.push_back(e.event);

        CidsSample sample;
        if (detail::assemble_sample(flow, matches, cfg, sample)) out.push_back(std::move(sample));
    }
    return out;
}

// Reference semantics: quadratic scan over all (flow, event) pairs, no index.
// Test oracle only.
inline std::vector<CidsSample> align_bruteforce(const std::vector<FlowRecord>& flows,
                                                const std::vector<HostEvent>& events,
                                                const AlignConfig& cfg) {
    if (cfg.n_max < 1) throw ConfigError("align.n_max must be >= 1");
    std::vector<CidsSample> out;
    for (const auto& flow : flows) {
        const double lo = flow.window_start;
        const double hi = flow.window_start + flow.window_len;
        std::vector<std::pair<const HostEvent*, size_t>> matched;
        for (size_t i = 0; i < events.size(); ++i) {
            const HostEvent& e = events[i];
            if (ip_matches(e.host_ip, flow.key, cfg.ip_match_mode) && e.ts >= lo && e.ts < hi)
                matched.emplace_back(&e, i);
        }
        std::stable_sort(matched.begin(), matched.end(),
                         [](const auto& a, const auto& b) { return a.first->ts < b.first->ts; });
        std::vector<const HostEvent*> matches;
        matches.reserve(matched.size());
        for (const auto& [e, seq] : matched) matches.push_back(e);

        CidsSample sample;
        if (detail::assemble_sample(flow, matches, cfg, sample)) out.push_back(std::move(sample));
    }
    return out;
}

} // namespace cids
