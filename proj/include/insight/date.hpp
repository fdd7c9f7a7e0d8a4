#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace insight {

/// Day-granularity calendar date, stored as days since 1970-01-01.
/// Parses and prints ISO-8601 `YYYY-MM-DD` only.
struct Date {
    std::int32_t serial = 0;

    static Date from_ymd(int year, int month, int day);
    static std::optional<Date> try_parse(std::string_view iso);
    static Date parse(std::string_view iso); // throws Error{parse}

    int year() const;
    int month() const;
    int day() const;

    /// year*12 + (month-1); used for temporal (monthly) chunking.
    int month_index() const;

    Date add_days(int n) const { return Date{serial + n}; }

    std::string to_string() const;

    auto operator<=>(const Date&) const = default;
};

inline int operator-(Date a, Date b) { return a.serial - b.serial; }

} // namespace insight
