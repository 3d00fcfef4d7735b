#pragma once

#include <array>
#include <atomic>
#include <cstdint>

namespace minos {

/// Log-scaled item-size classes: floor(log2(size)) clamped to [0, 20], each
/// octave split into 4 equal-width subdivisions.
inline constexpr int kSizeOctaves = 21;
inline constexpr int kOctaveSubdivisions = 4;
inline constexpr int kSizeClasses = kSizeOctaves * kOctaveSubdivisions;

int size_class(uint64_t size);
/// Smallest and largest size mapped to class `c` (sizes >= 2^21 clamp into
/// the last class, whose upper bound is 2^21 - 1). Unreachable classes in the
/// first octaves report lower > upper.
uint64_t class_lower(int c);
uint64_t class_upper(int c);

/// Per-class request counts plus the largest size seen in each class.
/// Counter is uint64_t for raw epoch counts and double for smoothed state.
template <class Counter>
class BasicSizeHistogram {
 public:
  void record(uint64_t size, Counter weight = Counter{1}) {
    int c = size_class(size);
    counts_[c] += weight;
    if (size > max_seen_[c]) max_seen_[c] = size;
  }

  void add(int c, Counter weight, uint64_t max_seen) {
    counts_[c] += weight;
    if (max_seen > max_seen_[c]) max_seen_[c] = max_seen;
  }

  Counter operator[](int c) const { return counts_[c]; }
  Counter& at(int c) { return counts_[c]; }
  uint64_t max_seen(int c) const { return max_seen_[c]; }
  void set_max_seen(int c, uint64_t v) { max_seen_[c] = v; }

  Counter total() const {
    Counter t{};
    for (const auto& v : counts_) t += v;
    return t;
  }

  void merge(const BasicSizeHistogram& other) {
    for (int c = 0; c < kSizeClasses; ++c) add(c, other.counts_[c], other.max_seen_[c]);
  }

  void reset() {
    counts_.fill(Counter{});
    max_seen_.fill(0);
  }

  friend bool operator==(const BasicSizeHistogram&, const BasicSizeHistogram&) = default;

 private:
  std::array<Counter, kSizeClasses> counts_{};
  std::array<uint64_t, kSizeClasses> max_seen_{};
};

using SizeHistogram = BasicSizeHistogram<uint64_t>;
using SmoothedHistogram = BasicSizeHistogram<double>;

/// Histogram written by one core and drained by the coordinator. Increments
/// racing a drain land in the next epoch or are lost; never double counted.
class CoreHistogram {
 public:
  void record(uint64_t size) {
    int c = size_class(size);
    counts_[c].fetch_add(1, std::memory_order_relaxed);
    if (size > max_seen_[c].load(std::memory_order_relaxed)) {
      max_seen_[c].store(size, std::memory_order_relaxed);
    }
  }

  /// Returns the counts accumulated since the last drain and zeroes them.
  SizeHistogram drain() {
    SizeHistogram h;
    for (int c = 0; c < kSizeClasses; ++c) {
      uint64_t n = counts_[c].exchange(0, std::memory_order_relaxed);
      uint64_t m = max_seen_[c].exchange(0, std::memory_order_relaxed);
      if (n != 0) h.add(c, n, m);
    }
    return h;
  }

 private:
  std::array<std::atomic<uint64_t>, kSizeClasses> counts_{};
  std::array<std::atomic<uint64_t>, kSizeClasses> max_seen_{};
};

}  // namespace minos
