#pragma once

#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cids/core.hpp"
#include "cids/errors.hpp"
#include "cids/hash.hpp"
#include "cids/time_civil.hpp"

namespace cids {

// ---------------------------------------------------------------------------
// Host inventory: hostname / machine name -> IPv4

struct HostInventory {
    std::map<std::string, Ipv4> by_name;

    std::optional<Ipv4> lookup(std::string_view name) const {
        auto it = by_name.find(std::string(name));
        if (it == by_name.end()) return std::nullopt;
        return it->second;
    }
};

// ---------------------------------------------------------------------------
// Event feature layout (m = 8):
//   [event_id, version, provider_id, level, task, opcode, keywords_low32, 0]
// provider_id = fnv1a64(provider_name) mod 10007.

inline constexpr uint64_t kProviderIdBuckets = 10007;

inline double provider_id(std::string_view provider_name) {
    return static_cast<double>(fnv1a64(provider_name) % kProviderIdBuckets);
}

struct RawWindowsRecord {
    uint64_t event_id = 0;
    uint64_t version = 0;
    std::string provider_name;
    uint64_t level = 0;
    uint64_t task = 0;
    uint64_t opcode = 0;
    uint64_t keywords = 0;
    std::string time_created;
    std::string machine_name;
    std::string message;
};

inline std::vector<double> normalize_event(const RawWindowsRecord& r) {
    return {static_cast<double>(r.event_id),
            static_cast<double>(r.version),
            provider_id(r.provider_name),
            static_cast<double>(r.level),
            static_cast<double>(r.task),
            static_cast<double>(r.opcode),
            static_cast<double>(r.keywords & 0xffffffffull),
            0.0};
}

inline std::vector<double> normalize_syslog_event(std::string_view provider) {
    return {0.0, 0.0, provider_id(provider), 0.0, 0.0, 0.0, 0.0, 0.0};
}

// ---------------------------------------------------------------------------
// Parse bookkeeping: parsers are total per line/row; bad rows are counted
// and reported, never thrown.

struct ParseStats {
    size_t accepted = 0;
    size_t rejected = 0;
    std::vector<std::string> errors;

    void reject(size_t line_no, const std::string& reason) {
        ++rejected;
        errors.push_back("line " + std::to_string(line_no) + ": " + reason);
    }
};

// ---------------------------------------------------------------------------
// Windows tabular logs (CSV export)

inline const std::vector<std::string>& windows_csv_columns() {
    static const std::vector<std::string> cols = {
        "EventId", "Version", "ProviderName", "Level",       "Task",
        "Opcode",  "Keywords", "TimeCreated", "MachineName", "Message"};
    return cols;
}

namespace detail {

// One CSV record per physical line; quoted fields may contain commas and
// doubled quotes, but not newlines.
inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty()) return std::nullopt; // quote inside unquoted field
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // tolerate CRLF
        } else {
            cur += c;
        }
        ++i;
    }
    if (quoted) return std::nullopt; // unterminated quote
    fields.push_back(std::move(cur));
    return fields;
}

inline std::optional<uint64_t> parse_u64(std::string_view s) {
    if (s.empty()) return std::nullopt;
    uint64_t value = 0;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        for (size_t i = 2; i < s.size(); ++i) {
            const char c = s[i];
            uint64_t d;
            if (c >= '0' && c <= '9') d = static_cast<uint64_t>(c - '0');
            else if (c >= 'a' && c <= 'f') d = static_cast<uint64_t>(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F') d = static_cast<uint64_t>(c - 'A' + 10);
            else return std::nullopt;
            value = (value << 4) | d;
        }
        return value;
    }
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + static_cast<uint64_t>(c - '0');
    }
    return value;
}

} // namespace detail

// Parses one data row (already split against the documented header).
// Returns nullopt and a reason on any per-row failure.
inline std::optional<HostEvent> parse_windows_row(const std::vector<std::string>& fields,
                                                  const HostInventory& inventory,
                                                  std::string* error) {
    auto fail = [&](const std::string& why) -> std::optional<HostEvent> {
        if (error) *error = why;
        return std::nullopt;
    };
    if (fields.size() < windows_csv_columns().size())
        return fail("column " + windows_csv_columns()[fields.size()] + " absent");
    if (fields.size() > windows_csv_columns().size())
        return fail("expected " + std::to_string(windows_csv_columns().size()) + " columns, got " +
                    std::to_string(fields.size()));

    RawWindowsRecord r;
    const auto event_id = detail::parse_u64(fields[0]);
    const auto version = detail::parse_u64(fields[1]);
    const auto level = detail::parse_u64(fields[3]);
    const auto task = detail::parse_u64(fields[4]);
    const auto opcode = detail::parse_u64(fields[5]);
    const auto keywords = detail::parse_u64(fields[6]);
    if (!event_id) return fail("column EventId is not a number: '" + fields[0] + "'");
    if (!version) return fail("column Version is not a number: '" + fields[1] + "'");
    if (!level) return fail("column Level is not a number: '" + fields[3] + "'");
    if (!task) return fail("column Task is not a number: '" + fields[4] + "'");
    if (!opcode) return fail("column Opcode is not a number: '" + fields[5] + "'");
    if (!keywords) return fail("column Keywords is not a number: '" + fields[6] + "'");
    r.event_id = *event_id;
    r.version = *version;
    r.provider_name = fields[2];
    r.level = *level;
    r.task = *task;
    r.opcode = *opcode;
    r.keywords = *keywords;
    r.time_created = fields[7];
    r.machine_name = fields[8];
    r.message = fields[9];

    const auto ts = parse_rfc3339(r.time_created);
    if (!ts) return fail("unparseable TimeCreated '" + r.time_created + "'");
    const auto ip = inventory.lookup(r.machine_name);
    if (!ip) return fail("machine '" + r.machine_name + "' not in inventory");

    HostEvent e;
    e.host_ip = *ip;
    e.ts = *ts;
    e.event_features = normalize_event(r);
    e.message = r.message;
    e.source_os = SourceOs::WINDOWS;
    return e;
}

// Reads a whole Windows CSV export. The header row must match the documented
// column list exactly; per-row failures are counted and parsing continues.
inline std::vector<HostEvent> parse_windows_csv(std::istream& in, const HostInventory& inventory,
                                                ParseStats& stats) {
    std::vector<HostEvent> out;
    std::string line;
    size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            if (!fields || *fields != windows_csv_columns())
                throw InputError("line 1: CSV header does not match the expected columns");
            continue;
        }
        if (!fields) {
            stats.reject(line_no, "malformed CSV quoting");
            continue;
        }
        std::string error;
        auto event = parse_windows_row(*fields, inventory, &error);
        if (event) {
            ++stats.accepted;
            out.push_back(std::move(*event));
        } else {
            stats.reject(line_no, error);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linux syslog lines
//
// Grammar: <Mon> <day> <HH:MM:SS> <hostname> <provider>([pid])?: <message>
// Syslog omits the year, so it is injected by the caller.

inline std::optional<HostEvent> parse_syslog_line(std::string_view line, int64_t year,
                                                  const HostInventory& inventory,
                                                  std::string* error) {
    auto fail = [&](const std::string& why) -> std::optional<HostEvent> {
        if (error) *error = why;
        return std::nullopt;
    };
    auto is_digit = [](char c) { return c >= '0' && c <= '9'; };

    size_t pos = 0;
    auto skip_spaces = [&] {
        while (pos < line.size() && line[pos] == ' ') ++pos;
    };
    auto take_token = [&]() -> std::string_view {
        const size_t start = pos;
        while (pos < line.size() && line[pos] != ' ') ++pos;
        return line.substr(start, pos - start);
    };

    const auto mon_tok = take_token();
    const auto month = month_from_abbrev(mon_tok);
    if (!month) return fail("grammar mismatch: expected month abbreviation");
    skip_spaces();
    const auto day_tok = take_token();
    if (day_tok.empty() || day_tok.size() > 2) return fail("grammar mismatch: expected day of month");
    unsigned day = 0;
    for (char c : day_tok) {
        if (!is_digit(c)) return fail("grammar mismatch: expected day of month");
        day = day * 10 + static_cast<unsigned>(c - '0');
    }
    if (day < 1 || day > 31) return fail("grammar mismatch: day out of range");
    skip_spaces();
    const auto time_tok = take_token();
    if (time_tok.size() != 8 || time_tok[2] != ':' || time_tok[5] != ':')
        return fail("grammar mismatch: expected HH:MM:SS");
    for (size_t i : {0u, 1u, 3u, 4u, 6u, 7u})
        if (!is_digit(time_tok[i])) return fail("grammar mismatch: expected HH:MM:SS");
    const unsigned hour = (time_tok[0] - '0') * 10u + (time_tok[1] - '0');
    const unsigned minute = (time_tok[3] - '0') * 10u + (time_tok[4] - '0');
    const unsigned second = (time_tok[6] - '0') * 10u + (time_tok[7] - '0');
    if (hour > 23 || minute > 59 || second > 60) return fail("grammar mismatch: time out of range");

    skip_spaces();
    const auto hostname = take_token();
    if (hostname.empty()) return fail("grammar mismatch: missing hostname");
    skip_spaces();

    // provider token: "name[pid]:" or "name:"
    size_t prov_end = pos;
    while (prov_end < line.size() && line[prov_end] != ' ') ++prov_end;
    std::string_view prov_tok = line.substr(pos, prov_end - pos);
    if (prov_tok.empty() || prov_tok.back() != ':')
        return fail("grammar mismatch: missing provider token");
    prov_tok.remove_suffix(1);
    if (auto bracket = prov_tok.find('['); bracket != std::string_view::npos) {
        if (prov_tok.back() != ']') return fail("grammar mismatch: malformed pid suffix");
        std::string_view pid = prov_tok.substr(bracket + 1, prov_tok.size() - bracket - 2);
        if (pid.empty()) return fail("grammar mismatch: empty pid");
        for (char c : pid)
            if (!is_digit(c)) return fail("grammar mismatch: non-numeric pid");
        prov_tok = prov_tok.substr(0, bracket);
    }
    if (prov_tok.empty()) return fail("grammar mismatch: empty provider name");
    pos = prov_end;
    if (pos < line.size() && line[pos] == ' ') ++pos;
    const std::string_view message = line.substr(pos);

    const auto ip = inventory.lookup(hostname);
    if (!ip) return fail("hostname '" + std::string(hostname) + "' not in inventory");

    const int64_t days = days_from_civil(year, *month, day);
    HostEvent e;
    e.host_ip = *ip;
    e.ts = static_cast<double>(days * 86400 + hour * 3600 + minute * 60 + second);
    e.event_features = normalize_syslog_event(prov_tok);
    e.message = std::string(message);
    e.source_os = SourceOs::LINUX;
    return e;
}

inline std::vector<HostEvent> parse_syslog(std::istream& in, int64_t year,
                                           const HostInventory& inventory, ParseStats& stats) {
    std::vector<HostEvent> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string error;
        auto event = parse_syslog_line(line, year, inventory, &error);
        if (event) {
            ++stats.accepted;
            out.push_back(std::move(*event));
        } else {
            stats.reject(line_no, error);
        }
    }
    return out;
}

} // namespace cids
