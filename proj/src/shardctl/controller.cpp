#include <algorithm>
#include <cmath>

#include "minos/shardctl.hpp"

namespace minos {

CostFn packet_cost_fn(size_t mtu_payload) {
  return [mtu_payload](uint64_t size) {
    return static_cast<double>(packet_cost(Opcode::kGet, size, mtu_payload));
  };
}

SizeHistogram aggregate(std::span<SizeHistogram> per_core) {
  SizeHistogram total;
  for (auto& h : per_core) {
    total.merge(h);
    h.reset();
  }
  return total;
}

SizeHistogram aggregate(std::span<CoreHistogram> per_core) {
  SizeHistogram total;
  for (auto& h : per_core) total.merge(h.drain());
  return total;
}

void smooth(ThresholdState& state, const SizeHistogram& h) {
  const double a = state.alpha;
  for (int c = 0; c < kSizeClasses; ++c) {
    state.current.at(c) = (1.0 - a) * state.current[c] + a * static_cast<double>(h[c]);
    if (h[c] != 0) state.current.set_max_seen(c, h.max_seen(c));
  }
}

std::optional<uint64_t> threshold_percentile(const SmoothedHistogram& h, double percentile) {
  const double total = h.total();
  if (!(total > 0.0)) return std::nullopt;
  const double target = total * percentile / 100.0 * (1.0 - 1e-12);
  double cum = 0.0;
  for (int c = 0; c < kSizeClasses; ++c) {
    cum += h[c];
    if (h[c] > 0.0 && cum >= target) {
      uint64_t upper = class_upper(c);
      uint64_t seen = h.max_seen(c);
      return seen != 0 ? std::min(upper, seen) : upper;
    }
  }
  return class_upper(kSizeClasses - 1);
}

uint64_t class_representative(const SmoothedHistogram& h, int c) {
  uint64_t lo = class_lower(c);
  uint64_t hi = class_upper(c);
  if (uint64_t seen = h.max_seen(c); seen != 0 && seen >= lo) hi = std::min(hi, seen);
  return lo + (hi - lo) / 2;
}

namespace {

// Index of the last class counted as small for `threshold`.
int last_small_class(uint64_t threshold) {
  if (threshold >= class_upper(kSizeClasses - 1)) return kSizeClasses - 1;
  return size_class(std::max<uint64_t>(threshold, 1));
}

std::vector<double> class_costs(const SmoothedHistogram& h, const CostFn& cost) {
  std::vector<double> w(kSizeClasses, 0.0);
  for (int c = 0; c < kSizeClasses; ++c) {
    if (h[c] > 0.0) w[c] = h[c] * cost(class_representative(h, c));
  }
  return w;
}

}  // namespace

double small_cost_fraction(const SmoothedHistogram& h, uint64_t threshold, const CostFn& cost) {
  auto w = class_costs(h, cost);
  const int last_small = last_small_class(threshold);
  double small = 0.0;
  double total = 0.0;
  for (int c = 0; c < kSizeClasses; ++c) {
    total += w[c];
    if (c <= last_small) small += w[c];
  }
  return total > 0.0 ? small / total : 1.0;
}

CoreAllocation allocate_cores(const SmoothedHistogram& h, uint64_t threshold, uint32_t n,
                              const CostFn& cost) {
  return allocation_for_fraction(small_cost_fraction(h, threshold, cost), n);
}

CoreAllocation allocation_for_fraction(double f, uint32_t n) {
  // The epsilon keeps exact products such as 0.625 * 8 from rounding up.
  auto n_s = static_cast<uint32_t>(std::ceil(f * n - 1e-9));
  n_s = std::clamp<uint32_t>(n_s, 1, n);
  CoreAllocation a;
  a.n_s = n_s;
  a.n_l = n - n_s;
  a.standby = a.n_l == 0;
  return a;
}

std::vector<SizeRange> partition_large_ranges(const SmoothedHistogram& h, uint64_t threshold,
                                              uint32_t n_l, const CostFn& cost,
                                              uint64_t max_size) {
  std::vector<SizeRange> ranges;
  if (n_l == 0) return ranges;
  max_size = std::max(max_size, threshold);
  auto w = class_costs(h, cost);

  // Each populated class spreads its cost over (lo, hi] assuming sizes are
  // uniform inside the class, so cost density grows linearly with size.
  struct Span {
    double lo, hi, w;
  };
  std::vector<Span> spans;
  double total = 0.0;
  for (int c = last_small_class(threshold) + 1; c < kSizeClasses; ++c) {
    if (w[c] <= 0.0 || class_lower(c) > max_size) continue;
    uint64_t hi = std::min(class_upper(c), max_size);
    if (uint64_t seen = h.max_seen(c); seen >= class_lower(c) && seen < hi) hi = seen;
    const uint64_t lo = std::max(class_lower(c) - 1, threshold);
    spans.push_back({static_cast<double>(lo), static_cast<double>(std::max(hi, lo)), w[c]});
    total += w[c];
  }

  uint64_t lo = threshold;
  size_t s = 0;
  double cum = 0.0;
  for (uint32_t k = 1; k < n_l; ++k) {
    const double target = total * k / n_l;
    while (s < spans.size() && cum + spans[s].w < target * (1.0 - 1e-12)) cum += spans[s++].w;
    uint64_t cut = lo;
    if (s < spans.size()) {
      const Span& sp = spans[s];
      const double f = std::clamp((target - cum) / sp.w, 0.0, 1.0);
      const double x = f >= 1.0 - 1e-9
                           ? sp.hi
                           : std::sqrt(sp.lo * sp.lo + f * (sp.hi * sp.hi - sp.lo * sp.lo));
      cut = static_cast<uint64_t>(std::llround(x));
    }
    cut = std::clamp(cut, lo, max_size);
    // Keep some cost in this range and a whole populated class for each
    // later one whenever the histogram allows it.
    const size_t later = n_l - k;
    if (spans.size() >= n_l) {
      auto first = std::find_if(spans.begin(), spans.end(),
                                [&](const Span& x) { return x.hi > static_cast<double>(lo); });
      const uint64_t min_cut = first == spans.end()
                                   ? lo
                                   : std::max(lo, static_cast<uint64_t>(first->lo)) + 1;
      const uint64_t max_cut = static_cast<uint64_t>(spans[spans.size() - later].lo);
      if (min_cut <= max_cut) cut = std::clamp(cut, min_cut, max_cut);
    }
    ranges.push_back({lo, cut});
    lo = cut;
  }
  ranges.push_back({lo, max_size});
  return ranges;
}

ShardPlan initial_plan(const ControllerConfig& config) {
  uint64_t threshold = config.static_threshold.value_or(config.initial_threshold);
  return ShardPlan::all_small(config.cores, threshold, true);
}

Controller::Controller(const ControllerConfig& config)
    : config_(config), cost_(packet_cost_fn(config.mtu_payload)), board_(initial_plan(config)) {
  state_.alpha = config.alpha;
  state_.percentile = config.percentile;
}

ShardPlan Controller::compute(const SmoothedHistogram& h, double* small_fraction) const {
  ShardPlan plan;
  plan.n = config_.cores;
  uint64_t threshold = 0;
  if (config_.static_threshold) {
    threshold = *config_.static_threshold;
  } else if (auto pct = threshold_percentile(h, config_.percentile)) {
    threshold = *pct;
  } else {
    return board_.current();
  }
  plan.threshold = threshold;
  if (small_fraction) *small_fraction = small_cost_fraction(h, threshold, cost_);
  CoreAllocation a = allocate_cores(h, threshold, config_.cores, cost_);
  plan.n_s = a.n_s;
  plan.n_l = a.n_l;
  plan.standby = a.standby;
  plan.large_ranges =
      partition_large_ranges(h, threshold, a.n_l, cost_, std::max(config_.max_item_size, threshold));
  return plan;
}

const ShardPlan& Controller::control_epoch(std::span<CoreHistogram> per_core, int64_t now_ns) {
  return control_epoch(aggregate(per_core), now_ns);
}

const ShardPlan& Controller::control_epoch(const SizeHistogram& aggregated, int64_t now_ns) {
  smooth(state_, aggregated);
  EpochRecord rec;
  rec.epoch = records_.size() + 1;
  rec.time_ns = now_ns;
  rec.observed = aggregated;
  ShardPlan next;
  if (state_.current.total() > 0.0) {
    next = compute(state_.current, &rec.small_cost_fraction);
  } else {
    next = board_.current();
    rec.empty = true;
  }
  const ShardPlan& published = board_.publish(std::move(next));
  rec.plan = published;
  records_.push_back(std::move(rec));
  return published;
}

}  // namespace minos
