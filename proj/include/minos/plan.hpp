#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace minos {

enum class CoreRole : uint8_t { kSmall, kLarge, kStandbyLarge };

const char* to_string(CoreRole role);

/// Item sizes in (lo, hi].
struct SizeRange {
  uint64_t lo = 0;
  uint64_t hi = 0;

  bool contains(uint64_t size) const { return size > lo && size <= hi; }
  friend bool operator==(const SizeRange&, const SizeRange&) = default;
};

/// Output of the sharding control loop. Cores [0, n_s) are small cores and
/// cores [n_s, n) are large cores; large_ranges[i] belongs to core n_s + i.
/// With no dedicated large core the last core is the standby large core.
/// Immutable once published.
struct ShardPlan {
  uint64_t version = 0;
  uint64_t threshold = 0;
  uint32_t n = 0;
  uint32_t n_s = 0;
  uint32_t n_l = 0;
  bool standby = false;
  std::vector<SizeRange> large_ranges;

  CoreRole role_of(uint32_t core) const {
    if (core >= n_s) return CoreRole::kLarge;
    if (standby && core == standby_core()) return CoreRole::kStandbyLarge;
    return CoreRole::kSmall;
  }

  /// True for cores that accept CREW writes without the partition guard.
  bool is_small_core(uint32_t core) const { return core < n_s; }

  bool is_large(uint64_t size) const { return size > threshold; }

  uint32_t standby_core() const { return n - 1; }

  /// Core that serves a request for an item of `size` (> threshold). Sizes
  /// beyond the last range go to the last large core.
  uint32_t large_core_for(uint64_t size) const {
    if (n_l == 0) return standby_core();
    auto it = std::lower_bound(large_ranges.begin(), large_ranges.end(), size,
                               [](const SizeRange& r, uint64_t s) { return r.hi < s; });
    if (it == large_ranges.end()) return n - 1;
    return n_s + static_cast<uint32_t>(it - large_ranges.begin());
  }

  /// Plan with every core small. `threshold` applies only when `with_standby`.
  static ShardPlan all_small(uint32_t cores, uint64_t threshold, bool with_standby) {
    ShardPlan p;
    p.n = cores;
    p.n_s = cores;
    p.n_l = 0;
    p.threshold = with_standby ? threshold : std::numeric_limits<uint64_t>::max();
    p.standby = with_standby;
    return p;
  }

  friend bool operator==(const ShardPlan&, const ShardPlan&) = default;
};

inline const char* to_string(CoreRole role) {
  switch (role) {
    case CoreRole::kSmall: return "small";
    case CoreRole::kLarge: return "large";
    case CoreRole::kStandbyLarge: return "standby";
  }
  return "?";
}

}  // namespace minos
