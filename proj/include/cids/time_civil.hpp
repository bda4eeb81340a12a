#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace cids {

// Civil <-> epoch day conversions (proleptic Gregorian, UTC).
inline int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

struct CivilDateTime {
    int64_t year;
    unsigned month, day, hour, minute, second;
};

inline CivilDateTime civil_from_epoch(int64_t epoch_secs) {
    int64_t days = epoch_secs / 86400;
    int64_t rem = epoch_secs % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int64_t z = days + 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    CivilDateTime out;
    out.year = y + (m <= 2);
    out.month = m;
    out.day = d;
    out.hour = static_cast<unsigned>(rem / 3600);
    out.minute = static_cast<unsigned>((rem % 3600) / 60);
    out.second = static_cast<unsigned>(rem % 60);
    return out;
}

inline const std::array<std::string_view, 12>& month_abbrevs() {
    static const std::array<std::string_view, 12> names = {
        "Jan", "Feb", "Mar", "Apr", "May", "Jun",
        "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    return names;
}

inline std::optional<unsigned> month_from_abbrev(std::string_view s) {
    const auto& names = month_abbrevs();
    for (unsigned i = 0; i < names.size(); ++i) {
        if (s == names[i]) return i + 1;
    }
    return std::nullopt;
}

// RFC 3339 timestamp -> epoch seconds (fractional part preserved).
// Accepts "YYYY-MM-DDTHH:MM:SS[.frac](Z|±hh:mm)".
inline std::optional<double> parse_rfc3339(std::string_view s) {
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    auto num = [&](size_t pos, size_t n) -> std::optional<int64_t> {
        if (pos + n > s.size()) return std::nullopt;
        int64_t v = 0;
        for (size_t i = 0; i < n; ++i) {
            if (!digit(s[pos + i])) return std::nullopt;
            v = v * 10 + (s[pos + i] - '0');
        }
        return v;
    };
    auto year = num(0, 4);
    auto month = num(5, 2);
    auto day = num(8, 2);
    auto hour = num(11, 2);
    auto minute = num(14, 2);
    auto second = num(17, 2);
    if (!year || !month || !day || !hour || !minute || !second) return std::nullopt;
    if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
        s[13] != ':' || s[16] != ':')
        return std::nullopt;
    if (*month < 1 || *month > 12 || *day < 1 || *day > 31 || *hour > 23 || *minute > 59 || *second > 60)
        return std::nullopt;

    size_t pos = 19;
    double frac = 0.0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        double scale = 0.1;
        bool any = false;
        while (pos < s.size() && digit(s[pos])) {
            frac += (s[pos] - '0') * scale;
            scale *= 0.1;
            ++pos;
            any = true;
        }
        if (!any) return std::nullopt;
    }
    if (pos >= s.size()) return std::nullopt;
    int64_t offset = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        const int sign = s[pos] == '+' ? 1 : -1;
        auto oh = num(pos + 1, 2);
        auto om = num(pos + 4, 2);
        if (!oh || !om || pos + 6 > s.size() || s[pos + 3] != ':') return std::nullopt;
        offset = sign * (*oh * 3600 + *om * 60);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;

    const int64_t days = days_from_civil(*year, static_cast<unsigned>(*month), static_cast<unsigned>(*day));
    const int64_t secs = days * 86400 + *hour * 3600 + *minute * 60 + *second - offset;
    return static_cast<double>(secs) + frac;
}

inline std::string format_rfc3339(int64_t epoch_secs) {
    const CivilDateTime c = civil_from_epoch(epoch_secs);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02u:%02u:%02uZ",
                  static_cast<long long>(c.year), c.month, c.day, c.hour, c.minute, c.second);
    return buf;
}

// Classic syslog prefix: "Feb  4 09:03:01" (day padded with a space).
inline std::string format_syslog_time(int64_t epoch_secs) {
    const CivilDateTime c = civil_from_epoch(epoch_secs);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s %2u %02u:%02u:%02u",
                  std::string(month_abbrevs()[c.month - 1]).c_str(), c.day, c.hour, c.minute, c.second);
    return buf;
}

} // namespace cids
