#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "minos/runtime.hpp"

namespace minos {

/// Step of a dynamic workload: from `time_s` on, p_large takes `p_large`.
struct ScheduleStep {
  double time_s = 0.0;
  double p_large = 0.0;
};

/// Trimodal-size, zipf-keyed workload. Keys are either large (sizes uniform in
/// [large_min, large_max]) or, for the rest, tiny or small in the given
/// proportions. Read from a flat key=value file whose keys are the field names.
struct WorkloadSpec {
  uint64_t total_keys = 16'000'000;
  uint64_t large_keys = 10'000;
  double tiny_fraction = 0.40;
  double small_fraction = 0.60;
  uint32_t tiny_min = 1;
  uint32_t tiny_max = 13;
  uint32_t small_min = 14;
  uint32_t small_max = 1400;
  uint32_t large_min = 1500;
  uint32_t large_max = 512'000;
  /// Percentage of requests for large keys.
  double p_large = 0.125;
  double get_ratio = 0.95;
  double zipf_s = 0.99;
  /// Offered load, requests per second over all client threads.
  double rate = 1e6;
  double duration_s = 60.0;
  /// Requests sent in the first warmup_s or last cooldown_s seconds are not
  /// measured.
  double warmup_s = 10.0;
  double cooldown_s = 10.0;
  uint32_t threads = 1;
  uint64_t seed = 1;
  std::vector<ScheduleStep> schedule;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  double p_large_at(double t_s) const;
};

/// Thrown for unreadable spec files; line() is 1-based, 0 when not line bound.
class SpecError : public std::runtime_error {
 public:
  SpecError(const std::string& what, size_t line) : std::runtime_error(what), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

WorkloadSpec parse_workload(std::istream& in);
WorkloadSpec load_workload(const std::string& path);
void write_workload(std::ostream& os, const WorkloadSpec& spec);

/// MINOS_SEED when set to an integer, else 1.
uint64_t default_seed();

/// The default workload scaled down to `keys` keys, keeping the large-key
/// share, with trimming suited to short runs.
WorkloadSpec desk_workload(uint64_t keys = 100'000);

/// Zipf(s) over ranks [0, n) by inversion of the precomputed CDF.
class ZipfSampler {
 public:
  ZipfSampler(uint64_t n, double s);
  uint64_t size() const { return cdf_.size(); }
  template <class Rng>
  uint64_t operator()(Rng& rng) const {
    return from_uniform(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  }
  uint64_t from_uniform(double u) const;

 private:
  std::vector<double> cdf_;
};

enum class ItemClass : uint8_t { kTiny, kSmall, kLarge };

/// Key table with fixed sizes. Indices [0, large) are large keys, then the
/// tiny keys, then the small keys. Zipf ranks over the non-large keys are
/// mapped through a seeded permutation.
class Keyspace {
 public:
  explicit Keyspace(const WorkloadSpec& spec);

  uint64_t size() const { return sizes_.size(); }
  uint64_t large_count() const { return large_; }
  uint64_t tiny_count() const { return tiny_; }
  uint64_t ranked_count() const { return rank_to_key_.size(); }

  /// 8-byte key of an index.
  std::string key(uint64_t index) const;
  uint32_t value_size(uint64_t index) const { return sizes_[index]; }
  ItemClass item_class(uint64_t index) const;
  /// Key index of a zero-based popularity rank.
  uint64_t ranked_key(uint64_t rank) const { return rank_to_key_[rank]; }
  const ZipfSampler& zipf() const { return zipf_; }
  /// Order-sensitive hash over keys and sizes.
  uint64_t digest() const;

  /// Deterministic value bytes for a key and write version.
  static void fill_value(uint64_t index, uint64_t version, std::span<uint8_t> out);

 private:
  uint64_t key_mix_;
  uint64_t large_ = 0;
  uint64_t tiny_ = 0;
  std::vector<uint32_t> sizes_;
  std::vector<uint32_t> rank_to_key_;
  ZipfSampler zipf_;
};

struct GeneratedRequest {
  Opcode op = Opcode::kGet;
  uint64_t key_index = 0;
  bool large = false;
  uint32_t size = 0;
};

/// Request mix of one client thread.
class RequestGenerator {
 public:
  RequestGenerator(const WorkloadSpec& spec, const Keyspace& keys, uint64_t seed);

  GeneratedRequest next(double p_large_pct);
  /// Exponential inter-arrival gap in nanoseconds.
  double next_gap_ns(double rate_per_s);
  std::mt19937_64& rng() { return rng_; }

 private:
  const WorkloadSpec& spec_;
  const Keyspace& keys_;
  std::mt19937_64 rng_;
};

/// RX queue a client targets. GETs under the size-aware policy go to a random
/// queue; writes go to the master of the key's partition; the software-handoff
/// baseline spreads everything over its handoff queues.
class QueueChooser {
 public:
  QueueChooser(Policy policy, uint32_t cores, uint32_t handoff, uint32_t partitions = 0);
  uint32_t operator()(Opcode op, KeyHash hash, std::mt19937_64& rng) const;

 private:
  Policy policy_;
  uint32_t cores_;
  uint32_t handoff_;
  uint32_t partitions_;
};

/// Log-linear histogram: 128 linear sub-buckets per power of two, values
/// below 256 exact. Relative error of any percentile is below 1/128.
class LatencyRecorder {
 public:
  static constexpr int kSubBuckets = 128;

  LatencyRecorder();
  void record(uint64_t value);
  void merge(const LatencyRecorder& other);
  void reset();

  uint64_t count() const { return count_; }
  double mean() const { return count_ ? sum_ / static_cast<double>(count_) : 0.0; }
  uint64_t min() const { return count_ ? min_ : 0; }
  uint64_t max() const { return max_; }
  /// Nearest-rank percentile at histogram resolution; 0 when empty.
  uint64_t percentile(double p) const;

  static size_t bucket_of(uint64_t value);
  static uint64_t bucket_lower(size_t bucket);
  static uint64_t bucket_upper(size_t bucket);

 private:
  std::vector<uint64_t> counts_;
  uint64_t count_ = 0;
  double sum_ = 0.0;
  uint64_t min_ = std::numeric_limits<uint64_t>::max();
  uint64_t max_ = 0;
};

enum class Backend { kSim, kInproc, kUdp };

std::string_view to_string(Backend b);
/// sim | inproc | udp
Backend parse_backend(std::string_view s);

struct BenchConfig {
  Backend backend = Backend::kSim;
  ServerConfig server;
  /// UDP endpoint of a running server.
  std::string host = "127.0.0.1";
  uint16_t port_base = 9000;
  /// Outstanding requests allowed per client thread on real backends.
  size_t inflight_cap = 1024;
  /// Seconds to wait for outstanding replies after the last send.
  double drain_s = 1.0;
  /// Called with the server after an in-process run, before it is destroyed.
  std::function<void(Server&)> inspect;
};

struct RunResult {
  LatencyRecorder all;
  LatencyRecorder small;
  LatencyRecorder large;
  uint64_t sent = 0;
  uint64_t completed = 0;
  uint64_t errors = 0;
  uint64_t lost = 0;
  uint64_t throttled = 0;
  uint64_t backpressure = 0;
  double offered_rate = 0.0;
  double achieved_rate = 0.0;
  double elapsed_s = 0.0;
  /// Mean server time per served request (virtual-time runs).
  double mean_service_ns = 0.0;
  std::vector<CoreSnapshot> per_core;
  bool valid() const { return lost == 0; }
};

/// Preloads every key of the keyspace into a server.
void preload(Server& server, const Keyspace& keys);

/// Open-loop run: Poisson arrivals per client thread at rate / threads.
RunResult run_open_loop(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config);

/// Highest offered rate whose achieved throughput stays within 3% of it.
double find_saturation(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config,
                       double start_rate, int iterations = 12);

struct CurvePoint {
  double offered = 0.0;
  double achieved = 0.0;
  double mean_ns = 0.0;
  uint64_t p50_ns = 0;
  uint64_t p99_ns = 0;
  uint64_t p999_ns = 0;
  uint64_t p99_small_ns = 0;
  uint64_t p99_large_ns = 0;
  bool valid = true;
  bool saturated = false;
};

struct SloResult {
  double slo_ns = 0.0;
  /// Highest measured rate meeting the SLO; 0 when none did.
  double max_rate = 0.0;
  uint64_t p99_ns = 0;
};

struct SloSweep {
  double saturation = 0.0;
  std::vector<CurvePoint> curve;  // by offered rate
  std::vector<SloResult> slo;     // in input order
};

/// Searches the rate at which each SLO on the p99 is last met. Every
/// evaluated point is shared across SLOs, so a stricter SLO never yields a
/// higher rate. An infinite SLO returns the saturation rate.
SloSweep sweep_slo(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config,
                   const std::vector<double>& slo_ns, double start_rate, int iterations = 8);

void write_curve_csv_header(std::ostream& os);
void write_curve_csv(std::ostream& os, std::string_view policy, const CurvePoint& p);

}  // namespace minos
