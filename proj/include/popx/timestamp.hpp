#pragma once

// strftime-style timestamp patterns, restricted to the fields an event log
// needs: %Y %m %d %H %M %S, %f (milliseconds) and %% for a literal percent.
// Timestamps are naive local times stored as milliseconds since 1970-01-01.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "popx/common.hpp"

namespace popx {

using TimestampMs = std::int64_t;

inline constexpr TimestampMs kMsPerDay = 86'400'000;

namespace detail {

inline bool read_digits(std::string_view text, std::size_t& pos, std::size_t min_digits,
                        std::size_t max_digits, long long& value, std::size_t* digits_read = nullptr) {
  std::size_t n = 0;
  value = 0;
  while (n < max_digits && pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
    value = value * 10 + (text[pos] - '0');
    ++pos;
    ++n;
  }
  if (digits_read) *digits_read = n;
  return n >= min_digits;
}

inline void append_padded(std::string& out, long long v, int width) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  if (v < 0) out.push_back('-');
  for (int i = static_cast<int>(digits.size()); i < width; ++i) out.push_back('0');
  out += digits;
}

}  // namespace detail

/// Parses `text` under `pattern`. Returns nullopt on any mismatch or invalid date.
inline std::optional<TimestampMs> parse_timestamp(std::string_view text, std::string_view pattern) {
  long long year = 1970, month = 1, day = 1, hour = 0, minute = 0, second = 0, millis = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const char pc = pattern[i];
    if (pc != '%') {
      if (pos >= text.size() || text[pos] != pc) return std::nullopt;
      ++pos;
      continue;
    }
    if (++i >= pattern.size()) return std::nullopt;
    bool ok = true;
    switch (pattern[i]) {
      case 'Y': ok = detail::read_digits(text, pos, 4, 4, year); break;
      case 'm': ok = detail::read_digits(text, pos, 1, 2, month); break;
      case 'd': ok = detail::read_digits(text, pos, 1, 2, day); break;
      case 'H': ok = detail::read_digits(text, pos, 1, 2, hour); break;
      case 'M': ok = detail::read_digits(text, pos, 1, 2, minute); break;
      case 'S': ok = detail::read_digits(text, pos, 1, 2, second); break;
      case 'f': {
        long long frac = 0;
        std::size_t n = 0;
        ok = detail::read_digits(text, pos, 1, 9, frac, &n);
        while (n > 3) {
          frac /= 10;
          --n;
        }
        while (n < 3) {
          frac *= 10;
          ++n;
        }
        millis = frac;
        break;
      }
      case '%':
        ok = pos < text.size() && text[pos] == '%';
        ++pos;
        break;
      default:
        return std::nullopt;
    }
    if (!ok) return std::nullopt;
  }
  if (pos != text.size()) return std::nullopt;
  if (hour > 23 || minute > 59 || second > 59) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(year)),
                                        std::chrono::month(static_cast<unsigned>(month)),
                                        std::chrono::day(static_cast<unsigned>(day))};
  if (!ymd.ok()) return std::nullopt;
  const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
  return static_cast<TimestampMs>(days) * kMsPerDay + hour * 3'600'000LL + minute * 60'000LL +
         second * 1000LL + millis;
}

inline TimestampMs floor_div(TimestampMs a, TimestampMs b) {
  TimestampMs q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Milliseconds since midnight of the timestamp's own calendar day.
inline TimestampMs ms_since_midnight(TimestampMs t) { return t - floor_div(t, kMsPerDay) * kMsPerDay; }

inline std::string format_timestamp(TimestampMs t, std::string_view pattern) {
  const TimestampMs days = floor_div(t, kMsPerDay);
  const TimestampMs in_day = t - days * kMsPerDay;
  const std::chrono::year_month_day ymd{std::chrono::sys_days(std::chrono::days(days))};
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '%' || i + 1 >= pattern.size()) {
      out.push_back(pattern[i]);
      continue;
    }
    switch (pattern[++i]) {
      case 'Y': detail::append_padded(out, static_cast<int>(ymd.year()), 4); break;
      case 'm': detail::append_padded(out, static_cast<unsigned>(ymd.month()), 2); break;
      case 'd': detail::append_padded(out, static_cast<unsigned>(ymd.day()), 2); break;
      case 'H': detail::append_padded(out, in_day / 3'600'000, 2); break;
      case 'M': detail::append_padded(out, (in_day / 60'000) % 60, 2); break;
      case 'S': detail::append_padded(out, (in_day / 1000) % 60, 2); break;
      case 'f': detail::append_padded(out, in_day % 1000, 3); break;
      case '%': out.push_back('%'); break;
      default:
        out.push_back('%');
        out.push_back(pattern[i]);
    }
  }
  return out;
}

}  // namespace popx
