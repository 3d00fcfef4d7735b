#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace minos::qsim {

enum class Discipline { kNxMGD1, kMGN, kNxMGD1WS, kSizeAware };

std::string_view to_string(Discipline d);
/// Accepts the CLI spellings (nxmgd1, mgn, nxmgd1-ws, size-aware) and the
/// upper-case enum names.
Discipline parse_discipline(std::string_view s);

enum class ServiceDist {
  kBimodal,      // 1 unit, or K units with probability frac_large
  kExponential,  // mean 1, for the M/M/1 check
};

struct SimConfig {
  uint32_t n_cores = 8;
  Discipline discipline = Discipline::kNxMGD1;
  double frac_large = 0.00125;
  double k = 100.0;
  /// Offered utilization: lambda * E[S] / n_cores.
  double rho = 0.5;
  uint64_t horizon = 10'000'000;
  uint64_t seed = 1;
  ServiceDist service = ServiceDist::kBimodal;
  /// Leading share of requests excluded from percentiles.
  double warmup = 0.1;
};

class UnstableConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SimResult {
  SimConfig config;
  uint64_t arrivals = 0;
  uint64_t departures = 0;
  uint64_t measured = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
  double mean_small = 0.0;
  double p99_small = 0.0;
  double p99_large = 0.0;
  double end_time = 0.0;
  /// Time average of requests in the system and arrivals per unit time, over
  /// the whole run; with mean_all they check Little's law.
  double mean_in_system = 0.0;
  double arrival_rate = 0.0;
  double mean_all = 0.0;
  std::vector<double> core_utilization;
  uint64_t steals = 0;
  /// Audits: steals by a core whose own queue was not empty, and instants at
  /// which an M/G/n core sat idle with requests waiting.
  uint64_t steals_with_own_work = 0;
  uint64_t idle_with_waiting = 0;
  uint32_t small_cores = 0;
  uint32_t large_cores = 0;
  bool standby = false;
};

/// Throws UnstableConfig when rho is outside (0, 1).
SimResult simulate(const SimConfig& config);

/// Size-aware core split for the bimodal model, by the small-cost fraction.
void size_aware_split(const SimConfig& config, uint32_t& n_small, uint32_t& n_large,
                      bool& standby);

/// Runs every (discipline, K, rho) combination, using worker threads when more
/// than one point is requested. Rows come back in grid order.
std::vector<SimResult> sweep(const SimConfig& base, const std::vector<Discipline>& disciplines,
                             const std::vector<double>& k_list,
                             const std::vector<double>& rho_list, unsigned threads = 0);

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const SimResult& r);

}  // namespace minos::qsim
