#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "minos/histogram.hpp"
#include "minos/plan.hpp"
#include "minos/protocol.hpp"

namespace minos {

/// Processing cost of a request for an item of the given size.
using CostFn = std::function<double(uint64_t size)>;

/// Packets needed to carry a value of the given size.
CostFn packet_cost_fn(size_t mtu_payload = kDefaultMtuPayload);

/// Smoothed histogram and the constants of the threshold controller.
struct ThresholdState {
  SmoothedHistogram current;
  double alpha = 0.9;
  double percentile = 99.0;
};

/// Element-wise sum of the inputs; each input is reset to zero.
SizeHistogram aggregate(std::span<SizeHistogram> per_core);
SizeHistogram aggregate(std::span<CoreHistogram> per_core);

/// current[i] = (1 - alpha) * current[i] + alpha * h[i]. The per-class
/// largest size follows the newest epoch that saw the class.
void smooth(ThresholdState& state, const SizeHistogram& h);

/// Size at the given percentile of the request mass: the upper bound of the
/// first class whose cumulative mass reaches it, tightened to the largest size
/// actually seen in that class. nullopt for an empty histogram.
std::optional<uint64_t> threshold_percentile(const SmoothedHistogram& h, double percentile);

inline std::optional<uint64_t> threshold_99p(const SmoothedHistogram& h) {
  return threshold_percentile(h, 99.0);
}

struct CoreAllocation {
  uint32_t n_s = 0;
  uint32_t n_l = 0;
  bool standby = false;

  friend bool operator==(const CoreAllocation&, const CoreAllocation&) = default;
};

/// Representative size of a class for costing: midpoint of its populated span.
uint64_t class_representative(const SmoothedHistogram& h, int c);

/// Fraction of the total cost incurred by classes at or below the threshold.
double small_cost_fraction(const SmoothedHistogram& h, uint64_t threshold, const CostFn& cost);

/// n_s = ceil(f * n) clamped to [1, n]; one standby large core when n_l == 0.
CoreAllocation allocate_cores(const SmoothedHistogram& h, uint64_t threshold, uint32_t n,
                              const CostFn& cost);

CoreAllocation allocation_for_fraction(double small_fraction, uint32_t n);

/// Splits (threshold, max_size] into n_l contiguous ranges of near-equal cost.
/// Cuts may fall inside a class; sizes are assumed uniform within a class.
std::vector<SizeRange> partition_large_ranges(const SmoothedHistogram& h, uint64_t threshold,
                                              uint32_t n_l, const CostFn& cost,
                                              uint64_t max_size);

/// Single-writer, many-reader plan publication. Every published plan stays
/// alive for the board's lifetime, so a reader holding a reference never sees
/// it change or disappear.
class PlanBoard {
 public:
  explicit PlanBoard(ShardPlan initial);

  const ShardPlan& current() const { return *current_.load(std::memory_order_acquire); }
  uint64_t version() const { return current().version; }

  /// Stamps version = previous + 1 and swaps the current reference.
  const ShardPlan& publish(ShardPlan plan);

  std::vector<ShardPlan> history() const;

 private:
  mutable std::mutex mu_;
  std::deque<std::unique_ptr<const ShardPlan>> plans_;
  std::atomic<const ShardPlan*> current_;
};

struct ControllerConfig {
  uint32_t cores = 8;
  double alpha = 0.9;
  double percentile = 99.0;
  /// Fixed threshold; the allocation is still recomputed each epoch.
  std::optional<uint64_t> static_threshold;
  uint64_t max_item_size = 1 << 20;
  size_t mtu_payload = kDefaultMtuPayload;
  /// Threshold of the plan in force before the first epoch (one frame).
  uint64_t initial_threshold = kDefaultMtuPayload;
};

/// One record per control epoch, for the adaptation report.
struct EpochRecord {
  uint64_t epoch = 0;
  int64_t time_ns = 0;
  ShardPlan plan;
  double small_cost_fraction = 1.0;
  SizeHistogram observed;
  bool empty = false;
};

/// Runs the control loop: aggregate -> smooth -> threshold -> allocate ->
/// partition -> publish.
class Controller {
 public:
  explicit Controller(const ControllerConfig& config);

  const ControllerConfig& config() const { return config_; }
  PlanBoard& board() { return board_; }
  const ShardPlan& plan() const { return board_.current(); }
  const ThresholdState& state() const { return state_; }

  /// Computes the plan a histogram would yield without publishing it.
  ShardPlan compute(const SmoothedHistogram& h, double* small_fraction = nullptr) const;

  const ShardPlan& control_epoch(std::span<CoreHistogram> per_core, int64_t now_ns = 0);
  const ShardPlan& control_epoch(const SizeHistogram& aggregated, int64_t now_ns = 0);

  const std::vector<EpochRecord>& records() const { return records_; }

 private:
  ControllerConfig config_;
  ThresholdState state_;
  CostFn cost_;
  PlanBoard board_;
  std::vector<EpochRecord> records_;
};

ShardPlan initial_plan(const ControllerConfig& config);

/// True when two plans assign sizes and roles identically (version ignored).
bool equivalent(const ShardPlan& a, const ShardPlan& b);

void write_plan_csv_header(std::ostream& os);
void write_plan_csv(std::ostream& os, const EpochRecord& r);
void write_histogram_csv_header(std::ostream& os);
void write_histogram_csv(std::ostream& os, const EpochRecord& r);

}  // namespace minos
