#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace stflow {

/// Seconds since 1970-01-01 00:00:00 on a zone-less clock. Trip files carry
/// no zone suffix, so values are never shifted.
using Timestamp = std::int64_t;

inline constexpr Timestamp kBinSeconds = 1800;
inline constexpr Timestamp kDaySeconds = 86400;

/// Parses `YYYY-MM-DD HH:MM:SS` (optionally followed by fractional seconds,
/// which are truncated) or a bare `YYYY-MM-DD`. Returns nullopt on any
/// malformed or out-of-range field.
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// Formats as `YYYY-MM-DD HH:MM:SS`.
std::string format_timestamp(Timestamp ts);

/// Largest multiple of `step` not greater than `ts` (floor, also for negatives).
constexpr Timestamp floor_to(Timestamp ts, Timestamp step) {
  Timestamp q = ts / step;
  if (ts % step != 0 && ts < 0) --q;
  return q * step;
}

constexpr bool is_bin_aligned(Timestamp ts) { return floor_to(ts, kBinSeconds) == ts; }

}  // namespace stflow
