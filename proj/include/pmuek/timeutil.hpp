#pragma once

#include <cstdint>
#include <string>

namespace pmuek {

// UTC millisecond timestamps <-> ISO-8601 ("2016-03-01T07:45:12.250Z").
// Conversions are pure integer arithmetic (days-from-civil), independent of
// the process time zone.
std::string ms_to_iso8601(std::int64_t ms);
std::int64_t iso8601_to_ms(const std::string& iso);

// Sample-grid clock: the sample index is authoritative and the millisecond
// timestamp is derived by rounding, so 30 fps (33.33 ms spacing) stays exact.
inline std::int64_t index_to_ms(std::int64_t t0_ms, std::int64_t index, int fps) {
  return t0_ms + (index * 1000 + fps / 2) / fps;
}

inline std::int64_t ms_to_index(std::int64_t t0_ms, std::int64_t ms, int fps) {
  // Round to the nearest grid index.
  std::int64_t delta = ms - t0_ms;
  std::int64_t num = delta * fps;
  return (num >= 0 ? num + 500 : num - 500) / 1000;
}

}  // namespace pmuek
