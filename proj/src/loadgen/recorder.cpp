#include <algorithm>
#include <bit>
#include <cmath>

#include "minos/loadgen.hpp"

namespace minos {

namespace {
constexpr size_t kBuckets = (64 - 8 + 2) * LatencyRecorder::kSubBuckets;
}

size_t LatencyRecorder::bucket_of(uint64_t v) {
  if (v < 2 * kSubBuckets) return static_cast<size_t>(v);
  const int e = std::bit_width(v) - 8;
  return static_cast<size_t>(e + 1) * kSubBuckets + static_cast<size_t>((v >> e) - kSubBuckets);
}

uint64_t LatencyRecorder::bucket_lower(size_t b) {
  if (b < 2 * kSubBuckets) return b;
  const size_t e = b / kSubBuckets - 1;
  return (static_cast<uint64_t>(b % kSubBuckets) + kSubBuckets) << e;
}

uint64_t LatencyRecorder::bucket_upper(size_t b) {
  if (b < 2 * kSubBuckets) return b;
  const size_t e = b / kSubBuckets - 1;
  return bucket_lower(b) + ((uint64_t{1} << e) - 1);
}

LatencyRecorder::LatencyRecorder() : counts_(kBuckets, 0) {}

void LatencyRecorder::record(uint64_t v) {
  ++counts_[bucket_of(v)];
  ++count_;
  sum_ += static_cast<double>(v);
  min_ = std::min(min_, v);
  max_ = std::max(max_, v);
}

void LatencyRecorder::merge(const LatencyRecorder& o) {
  for (size_t i = 0; i < kBuckets; ++i) counts_[i] += o.counts_[i];
  count_ += o.count_;
  sum_ += o.sum_;
  min_ = std::min(min_, o.min_);
  max_ = std::max(max_, o.max_);
}

void LatencyRecorder::reset() { *this = LatencyRecorder(); }

uint64_t LatencyRecorder::percentile(double p) const {
  if (count_ == 0) return 0;
  const double want = std::ceil(std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(count_));
  const uint64_t rank = std::max<uint64_t>(1, static_cast<uint64_t>(want));
  uint64_t seen = 0;
  for (size_t b = 0; b < kBuckets; ++b) {
    seen += counts_[b];
    if (seen >= rank) {
      const uint64_t lo = bucket_lower(b);
      const uint64_t mid = lo + (bucket_upper(b) - lo) / 2;
      return std::clamp(mid, min_, max_);
    }
  }
  return max_;
}

}  // namespace minos
