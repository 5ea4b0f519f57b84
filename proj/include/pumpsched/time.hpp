#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pumpsched {

// Naive local wall-clock time at minute resolution, counted from 1970-01-01T00:00.
// No timezone or DST handling.
class MinuteStamp {
public:
    constexpr MinuteStamp() = default;
    constexpr explicit MinuteStamp(std::int64_t minutes) : minutes_(minutes) {}

    static MinuteStamp from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0);

    // Accepts "YYYY-MM-DDTHH:MM", optional ":SS" (must be 00) and a space instead of 'T'.
    static std::optional<MinuteStamp> parse(std::string_view text);

    std::string to_string() const;

    constexpr std::int64_t minutes() const noexcept { return minutes_; }
    int minute_of_day() const noexcept;
    unsigned month() const noexcept;
    int year() const noexcept;
    // Days since epoch; used as a calendar-day key.
    std::int64_t day_index() const noexcept;
    // "YYYY-MM"
    std::string month_key() const;
    // "YYYY-MM-DD"
    std::string date_string() const;

    constexpr MinuteStamp operator+(std::int64_t m) const noexcept { return MinuteStamp{minutes_ + m}; }
    constexpr std::int64_t operator-(MinuteStamp o) const noexcept { return minutes_ - o.minutes_; }
    constexpr auto operator<=>(const MinuteStamp&) const = default;

private:
    std::int64_t minutes_ = 0;
};

inline constexpr int kMinutesPerDay = 1440;

} // namespace pumpsched
