#include "insight/date.hpp"

#include <charconv>
#include <cstdio>

#include "insight/error.hpp"

namespace insight {

namespace {

// Howard Hinnant's civil-date algorithms.
std::int32_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<int>(doe) - 719468;
}

struct Civil {
    int y;
    int m;
    int d;
};

Civil civil_from_days(std::int32_t z) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const int m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    return Civil{y + (m <= 2), m, static_cast<int>(d)};
}

bool parse_int(std::string_view s, int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

} // namespace

Date Date::from_ymd(int year, int month, int day) {
    return Date{days_from_civil(year, month, day)};
}

std::optional<Date> Date::try_parse(std::string_view iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!parse_int(iso.substr(0, 4), y) || !parse_int(iso.substr(5, 2), m) ||
        !parse_int(iso.substr(8, 2), d)) {
        return std::nullopt;
    }
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    Date date = from_ymd(y, m, d);
    // Reject non-existent days (e.g. 2023-02-30) by round-tripping.
    Civil c = civil_from_days(date.serial);
    if (c.y != y || c.m != m || c.d != d) return std::nullopt;
    return date;
}

Date Date::parse(std::string_view iso) {
    auto d = try_parse(iso);
    if (!d) fail(ErrorKind::parse, "invalid ISO-8601 date: '" + std::string(iso) + "'");
    return *d;
}

int Date::year() const { return civil_from_days(serial).y; }
int Date::month() const { return civil_from_days(serial).m; }
int Date::day() const { return civil_from_days(serial).d; }

int Date::month_index() const {
    Civil c = civil_from_days(serial);
    return c.y * 12 + (c.m - 1);
}

std::string Date::to_string() const {
    Civil c = civil_from_days(serial);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.y, c.m, c.d);
    return buf;
}

} // namespace insight
