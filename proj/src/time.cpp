#include "pumpsched/time.hpp"

#include <charconv>
#include <cstdio>

namespace pumpsched {

namespace {

using namespace std::chrono;

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

year_month_day civil(std::int64_t minutes)
{
    return year_month_day{sys_days{days{floor_div(minutes, kMinutesPerDay)}}};
}

bool read_int(std::string_view s, int& out)
{
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

} // namespace

MinuteStamp MinuteStamp::from_civil(int y, unsigned m, unsigned d, int hour, int minute)
{
    const std::chrono::sys_days date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
    return MinuteStamp{date.time_since_epoch().count() * kMinutesPerDay + hour * 60 + minute};
}

std::optional<MinuteStamp> MinuteStamp::parse(std::string_view text)
{
    // YYYY-MM-DDTHH:MM[:SS]
    if (text.size() != 16 && text.size() != 19) return std::nullopt;
    if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':')
        return std::nullopt;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    if (!read_int(text.substr(0, 4), y) || !read_int(text.substr(5, 2), mo) || !read_int(text.substr(8, 2), d)
        || !read_int(text.substr(11, 2), h) || !read_int(text.substr(14, 2), mi))
        return std::nullopt;
    if (text.size() == 19) {
        int s = 0;
        if (text[16] != ':' || !read_int(text.substr(17, 2), s) || s != 0) return std::nullopt;
    }
    if (h < 0 || h > 23 || mi < 0 || mi > 59) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)}, std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi);
}

std::string MinuteStamp::to_string() const
{
    const auto ymd = civil(minutes_);
    const int mod = minute_of_day();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), mod / 60, mod % 60);
    return buf;
}

int MinuteStamp::minute_of_day() const noexcept
{
    return static_cast<int>(minutes_ - floor_div(minutes_, kMinutesPerDay) * kMinutesPerDay);
}

unsigned MinuteStamp::month() const noexcept { return static_cast<unsigned>(civil(minutes_).month()); }

int MinuteStamp::year() const noexcept { return static_cast<int>(civil(minutes_).year()); }

std::int64_t MinuteStamp::day_index() const noexcept { return floor_div(minutes_, kMinutesPerDay); }

std::string MinuteStamp::month_key() const
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year(), month());
    return buf;
}

std::string MinuteStamp::date_string() const { return to_string().substr(0, 10); }

} // namespace pumpsched
