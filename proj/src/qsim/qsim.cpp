#include "minos/qsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <thread>

#include "minos/shardctl.hpp"

namespace minos::qsim {

std::string_view to_string(Discipline d) {
  switch (d) {
    case Discipline::kNxMGD1: return "NXMGD1";
    case Discipline::kMGN: return "MGN";
    case Discipline::kNxMGD1WS: return "NXMGD1_WS";
    case Discipline::kSizeAware: return "SIZE_AWARE";
  }
  return "?";
}

Discipline parse_discipline(std::string_view s) {
  std::string t;
  for (char c : s) t += static_cast<char>(c == '-' ? '_' : std::toupper(static_cast<unsigned char>(c)));
  if (t == "NXMGD1") return Discipline::kNxMGD1;
  if (t == "MGN") return Discipline::kMGN;
  if (t == "NXMGD1_WS" || t == "WS") return Discipline::kNxMGD1WS;
  if (t == "SIZE_AWARE") return Discipline::kSizeAware;
  throw std::invalid_argument("unknown discipline '" + std::string(s) +
                              "' (expected nxmgd1, mgn, nxmgd1-ws or size-aware)");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Job {
  double arrival;
  double service;
  uint64_t index;
  bool large;
};

double mean_service(const SimConfig& c) {
  if (c.service == ServiceDist::kExponential) return 1.0;
  return (1.0 - c.frac_large) + c.frac_large * c.k;
}

double nearest_rank(std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  auto rank = static_cast<size_t>(std::ceil(q * static_cast<double>(v.size())));
  rank = std::clamp<size_t>(rank, 1, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank), v.end());
  return v[rank];
}

class Engine {
 public:
  explicit Engine(const SimConfig& cfg)
      : cfg_(cfg),
        n_(cfg.n_cores),
        rng_(cfg.seed),
        busy_until_(n_, kInf),
        current_(n_),
        queues_(n_),
        busy_time_(n_, 0.0) {
    lambda_ = cfg.rho * n_ / mean_service(cfg);
    warm_ = static_cast<uint64_t>(cfg.warmup * static_cast<double>(cfg.horizon));
    if (cfg.discipline == Discipline::kSizeAware) {
      size_aware_split(cfg, n_small_, n_large_, standby_);
    }
  }

  SimResult run() {
    std::exponential_distribution<double> gap(lambda_);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    small_.reserve(cfg_.horizon - warm_);

    double next_arrival = gap(rng_);
    uint64_t arrived = 0;
    while (true) {
      uint32_t c_min = 0;
      double t_dep = kInf;
      for (uint32_t c = 0; c < n_; ++c) {
        if (busy_until_[c] < t_dep) {
          t_dep = busy_until_[c];
          c_min = c;
        }
      }
      const bool more = arrived < cfg_.horizon;
      if (!more && t_dep == kInf) break;
      if (more && next_arrival <= t_dep) {
        advance(next_arrival);
        Job j{next_arrival, 1.0, arrived, false};
        if (cfg_.service == ServiceDist::kExponential) {
          j.service = expo(rng_);
        } else if (u(rng_) < cfg_.frac_large) {
          j.service = cfg_.k;
          j.large = true;
        }
        ++arrived;
        ++in_system_;
        arrive(j);
        next_arrival += gap(rng_);
      } else {
        advance(t_dep);
        depart(c_min);
      }
      if (cfg_.discipline == Discipline::kMGN && !shared_.empty()) {
        for (uint32_t c = 0; c < n_; ++c) idle_with_waiting_ += idle(c);
      }
    }
    return finish(arrived);
  }

 private:
  bool idle(uint32_t c) const { return busy_until_[c] == kInf; }

  void advance(double t) {
    area_ += static_cast<double>(in_system_) * (t - now_);
    now_ = t;
  }

  uint32_t pick(uint32_t lo, uint32_t hi) {
    return lo + static_cast<uint32_t>(rng_() % (hi - lo));
  }

  void start(uint32_t c, const Job& j) {
    current_[c] = j;
    busy_until_[c] = now_ + j.service;
    busy_time_[c] += j.service;
  }

  // Idle core taking the head of a random non-empty queue other than its own.
  bool steal(uint32_t c) {
    uint32_t candidates[256];
    uint32_t m = 0;
    for (uint32_t v = 0; v < n_; ++v) {
      if (v != c && !queues_[v].empty()) candidates[m++] = v;
    }
    if (m == 0) return false;
    uint32_t v = candidates[rng_() % m];
    if (!queues_[c].empty()) ++steals_with_own_work_;
    ++steals_;
    start(c, queues_[v].front());
    queues_[v].pop_front();
    return true;
  }

  void enqueue(uint32_t c, const Job& j) {
    if (idle(c)) {
      start(c, j);
    } else {
      queues_[c].push_back(j);
    }
  }

  void arrive(const Job& j) {
    switch (cfg_.discipline) {
      case Discipline::kNxMGD1:
        enqueue(pick(0, n_), j);
        break;
      case Discipline::kMGN: {
        uint32_t idle_cores[256];
        uint32_t m = 0;
        for (uint32_t c = 0; c < n_; ++c) {
          if (idle(c)) idle_cores[m++] = c;
        }
        if (m > 0) {
          start(idle_cores[rng_() % m], j);
        } else {
          shared_.push_back(j);
        }
        break;
      }
      case Discipline::kNxMGD1WS: {
        uint32_t q = pick(0, n_);
        enqueue(q, j);
        if (!queues_[q].empty()) {
          // Some other core may be idle; it steals immediately.
          for (uint32_t c = 0; c < n_; ++c) {
            if (idle(c) && steal(c)) break;
          }
        }
        break;
      }
      case Discipline::kSizeAware:
        arrive_size_aware(j);
        break;
    }
  }

  void arrive_size_aware(const Job& j) {
    if (!standby_) {
      enqueue(j.large ? pick(n_small_, n_) : pick(0, n_small_), j);
      return;
    }
    const uint32_t s = n_ - 1;
    if (j.large) {
      if (idle(s)) {
        start(s, j);
      } else {
        standby_large_.push_back(j);
      }
      return;
    }
    uint32_t q = pick(0, n_);
    enqueue(q, j);
    if (q == s && !queues_[s].empty()) {
      // Small cores also drain the standby core's queue.
      for (uint32_t c = 0; c < s; ++c) {
        if (idle(c)) {
          ++steals_;
          start(c, queues_[s].front());
          queues_[s].pop_front();
          break;
        }
      }
    }
  }

  void depart(uint32_t c) {
    const Job& j = current_[c];
    const double response = now_ - j.arrival;
    sum_all_ += response;
    --in_system_;
    ++departures_;
    if (j.index >= warm_) {
      (j.large ? large_ : small_).push_back(response);
    }
    busy_until_[c] = kInf;
    next_for(c);
  }

  void next_for(uint32_t c) {
    auto take = [&](std::deque<Job>& q) {
      start(c, q.front());
      q.pop_front();
    };
    switch (cfg_.discipline) {
      case Discipline::kNxMGD1:
        if (!queues_[c].empty()) take(queues_[c]);
        break;
      case Discipline::kMGN:
        if (!shared_.empty()) take(shared_);
        break;
      case Discipline::kNxMGD1WS:
        if (!queues_[c].empty()) {
          take(queues_[c]);
        } else {
          steal(c);
        }
        break;
      case Discipline::kSizeAware: {
        if (!standby_) {
          if (!queues_[c].empty()) take(queues_[c]);
          break;
        }
        const uint32_t s = n_ - 1;
        if (c == s) {
          if (!standby_large_.empty()) {
            take(standby_large_);
          } else if (!queues_[s].empty()) {
            take(queues_[s]);
          }
          break;
        }
        // Oldest head among the core's own queue and the standby queue.
        auto& own = queues_[c];
        auto& sb = queues_[s];
        if (!own.empty() && (sb.empty() || own.front().arrival <= sb.front().arrival)) {
          take(own);
        } else if (!sb.empty()) {
          ++steals_;
          take(sb);
        }
        break;
      }
    }
  }

  SimResult finish(uint64_t arrived) {
    SimResult r;
    r.config = cfg_;
    r.arrivals = arrived;
    r.departures = departures_;
    r.end_time = now_;
    r.small_cores = n_small_;
    r.large_cores = n_large_;
    r.standby = standby_;
    r.steals = steals_;
    r.steals_with_own_work = steals_with_own_work_;
    r.idle_with_waiting = idle_with_waiting_;
    r.mean_all = arrived ? sum_all_ / static_cast<double>(arrived) : 0.0;
    r.arrival_rate = now_ > 0.0 ? static_cast<double>(arrived) / now_ : 0.0;
    r.mean_in_system = now_ > 0.0 ? area_ / now_ : 0.0;
    for (double b : busy_time_) r.core_utilization.push_back(now_ > 0.0 ? b / now_ : 0.0);

    r.measured = small_.size() + large_.size();
    double sum_small = 0.0, sum_large = 0.0;
    for (double x : small_) sum_small += x;
    for (double x : large_) sum_large += x;
    if (r.measured) r.mean = (sum_small + sum_large) / static_cast<double>(r.measured);
    if (!small_.empty()) r.mean_small = sum_small / static_cast<double>(small_.size());

    r.p99_large = nearest_rank(large_, 0.99);
    std::vector<double> all;
    all.reserve(r.measured);
    all.insert(all.end(), small_.begin(), small_.end());
    all.insert(all.end(), large_.begin(), large_.end());
    r.p50 = nearest_rank(all, 0.50);
    r.p99 = nearest_rank(all, 0.99);
    all = {};
    r.p99_small = nearest_rank(small_, 0.99);
    return r;
  }

  SimConfig cfg_;
  uint32_t n_;
  std::mt19937_64 rng_;
  double lambda_ = 1.0;
  uint64_t warm_ = 0;
  uint32_t n_small_ = 0;
  uint32_t n_large_ = 0;
  bool standby_ = false;

  std::vector<double> busy_until_;
  std::vector<Job> current_;
  std::vector<std::deque<Job>> queues_;
  std::deque<Job> shared_;
  std::deque<Job> standby_large_;
  std::vector<double> busy_time_;

  double now_ = 0.0;
  double area_ = 0.0;
  uint64_t in_system_ = 0;
  uint64_t departures_ = 0;
  double sum_all_ = 0.0;
  uint64_t steals_ = 0;
  uint64_t steals_with_own_work_ = 0;
  uint64_t idle_with_waiting_ = 0;
  std::vector<double> small_;
  std::vector<double> large_;
};

}  // namespace

void size_aware_split(const SimConfig& config, uint32_t& n_small, uint32_t& n_large,
                      bool& standby) {
  double small = 1.0 - config.frac_large;
  double large = config.service == ServiceDist::kExponential ? 0.0 : config.frac_large * config.k;
  CoreAllocation a = allocation_for_fraction(small / (small + large), config.n_cores);
  n_small = a.n_s;
  n_large = a.n_l;
  standby = a.standby;
}

SimResult simulate(const SimConfig& config) {
  if (!(config.rho > 0.0 && config.rho < 1.0)) {
    throw UnstableConfig("utilization must lie in (0, 1), got " + std::to_string(config.rho));
  }
  if (config.n_cores == 0 || config.n_cores > 256) {
    throw std::invalid_argument("core count must lie in [1, 256]");
  }
  if (config.discipline == Discipline::kSizeAware && config.n_cores < 2) {
    throw std::invalid_argument("size-aware sharding needs at least 2 cores");
  }
  return Engine(config).run();
}

std::vector<SimResult> sweep(const SimConfig& base, const std::vector<Discipline>& disciplines,
                             const std::vector<double>& k_list,
                             const std::vector<double>& rho_list, unsigned threads) {
  std::vector<SimConfig> grid;
  for (Discipline d : disciplines) {
    for (double k : k_list) {
      for (double rho : rho_list) {
        SimConfig c = base;
        c.discipline = d;
        c.k = k;
        c.rho = rho;
        grid.push_back(c);
      }
    }
  }
  std::vector<SimResult> out(grid.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(grid.size()));
  if (threads <= 1) {
    for (size_t i = 0; i < grid.size(); ++i) out[i] = simulate(grid[i]);
    return out;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < grid.size();) {
        try {
          out[i] = simulate(grid[i]);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

void write_csv_header(std::ostream& os) {
  os << "discipline,k,rho,n,frac_large,horizon,seed,p50,p99,mean,p99_small,mean_small,"
        "p99_large,small_cores,large_cores,standby,steals\n";
}

void write_csv_row(std::ostream& os, const SimResult& r) {
  const SimConfig& c = r.config;
  os << to_string(c.discipline) << ',' << c.k << ',' << c.rho << ',' << c.n_cores << ','
     << c.frac_large << ',' << c.horizon << ',' << c.seed << ',' << r.p50 << ',' << r.p99 << ','
     << r.mean << ',' << r.p99_small << ',' << r.mean_small << ',' << r.p99_large << ','
     << r.small_cores << ',' << r.large_cores << ',' << (r.standby ? 1 : 0) << ',' << r.steals
     << '\n';
}

}  // namespace minos::qsim
