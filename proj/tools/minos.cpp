// Command-line entry point: serve, bench, qsim and report.
//
// Exit codes: 0 success, 1 runtime failure (I/O, unreachable endpoint,
// malformed CSV), 2 invalid arguments, 3 run completed but lost requests.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "minos/loadgen.hpp"
#include "minos/qsim.hpp"
#include "minos/report.hpp"
#include "minos/runtime.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInvalidRun = 3;

enum class LogLevel { kQuiet, kInfo, kDebug };
LogLevel g_log = LogLevel::kInfo;

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

struct ServerFlags {
  std::string policy = "size-aware";
  uint32_t cores = 8;
  uint32_t handoff = 1;
  uint64_t static_threshold = 0;
  double epoch_ms = 1000;
  double alpha = 0.9;
  uint32_t batch = 32;
  uint16_t port_base = 9000;
  std::string backend;

  void add(CLI::App* app, const std::string& default_backend, const std::string& backends) {
    backend = default_backend;
    app->add_option("--policy", policy, "size-aware | hkh | sho | hkh-ws")->capture_default_str();
    app->add_option("--cores", cores, "server cores")->capture_default_str();
    app->add_option("--handoff", handoff, "handoff cores (sho)")->capture_default_str();
    app->add_option("--static-threshold", static_threshold,
                    "fixed size threshold in bytes (0 = learned)");
    app->add_option("--epoch-ms", epoch_ms, "control epoch")->capture_default_str();
    app->add_option("--alpha", alpha, "histogram smoothing factor")->capture_default_str();
    app->add_option("--batch", batch, "RX batch size")->capture_default_str();
    app->add_option("--port-base", port_base, "UDP port of RX queue 0")->capture_default_str();
    app->add_option("--backend", backend, backends)->capture_default_str();
  }

  minos::ServerConfig config() const {
    minos::ServerConfig c;
    c.policy = minos::parse_policy(policy);
    c.cores = cores;
    c.handoff = handoff;
    if (static_threshold > 0) c.static_threshold = static_threshold;
    c.epoch_ns = static_cast<int64_t>(epoch_ms * 1e6);
    c.alpha = alpha;
    c.batch = batch;
    c.validate();
    return c;
  }
};

void stamp(std::ostream& os, const std::string& command, const minos::WorkloadSpec& spec,
           const minos::ServerConfig& sc, const std::string& backend) {
  os << "# minos " << command << " policy=" << minos::to_string(sc.policy)
     << " cores=" << sc.cores << " handoff=" << sc.handoff << " batch=" << sc.batch
     << " epoch_ns=" << sc.epoch_ns << " alpha=" << sc.alpha << " backend=" << backend
     << " seed=" << spec.seed << '\n';
  std::ostringstream s;
  minos::write_workload(s, spec);
  std::string line;
  std::istringstream in(s.str());
  while (std::getline(in, line)) os << "# spec " << line << '\n';
}

std::ostream& open_out(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path.empty() || path == "-") return std::cout;
  holder = std::make_unique<std::ofstream>(path);
  if (!*holder) throw std::runtime_error("cannot write " + path);
  return *holder;
}

minos::WorkloadSpec load_spec(const std::string& path) {
  return path.empty() ? minos::desk_workload() : minos::load_workload(path);
}

void print_summary(const minos::RunResult& r, const minos::ServerConfig& sc) {
  if (g_log == LogLevel::kQuiet) return;
  std::cerr << "policy=" << minos::to_string(sc.policy) << " sent=" << r.sent
            << " completed=" << r.completed << " lost=" << r.lost << " errors=" << r.errors
            << " offered=" << r.offered_rate << " achieved=" << r.achieved_rate
            << " p50_ns=" << r.all.percentile(50) << " p99_ns=" << r.all.percentile(99)
            << " p99_small_ns=" << r.small.percentile(99)
            << " p99_large_ns=" << r.large.percentile(99) << '\n';
  if (g_log == LogLevel::kDebug) {
    for (size_t i = 0; i < r.per_core.size(); ++i) {
      std::cerr << "  core " << i << " ops=" << r.per_core[i].ops
                << " packets=" << r.per_core[i].packets << " busy_ns=" << r.per_core[i].busy_ns
                << '\n';
    }
  }
}

int run_serve(const ServerFlags& flags, const std::string& spec_path, double duration_s,
              const std::string& stats_path, uint64_t seed, bool seed_set) {
  minos::ServerConfig sc = flags.config();
  minos::WorkloadSpec spec = load_spec(spec_path);
  if (seed_set) spec.seed = seed;
  const minos::Keyspace keys(spec);
  std::unique_ptr<std::ofstream> holder;

  if (flags.backend == "inproc") {
    // Self-driven: the in-process load generator feeds the server threads.
    minos::BenchConfig bc;
    bc.backend = minos::Backend::kInproc;
    bc.server = sc;
    if (duration_s > 0) spec.duration_s = duration_s;
    spec.validate();
    std::ostream& os = open_out(stats_path, holder);
    bc.inspect = [&](minos::Server& s) {
      stamp(os, "serve", spec, sc, "inproc");
      s.write_epoch_csv(os);
    };
    const minos::RunResult r = minos::run_open_loop(spec, keys, bc);
    print_summary(r, sc);
    return r.valid() ? 0 : kExitInvalidRun;
  }
  if (flags.backend != "udp") throw CLI::ValidationError("--backend", "expected inproc or udp");

  minos::UdpTransport transport("127.0.0.1", flags.port_base, sc.cores);
  minos::Server server(sc, transport);
  minos::preload(server, keys);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  server.start();
  if (g_log != LogLevel::kQuiet) {
    std::cerr << "serving " << keys.size() << " keys on udp ports " << flags.port_base << ".."
              << flags.port_base + sc.cores - 1 << '\n';
  }
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration_s);
  while (!g_stop && (duration_s <= 0 || std::chrono::steady_clock::now() < until)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  server.close_epoch(std::chrono::duration_cast<std::chrono::nanoseconds>(
                         std::chrono::steady_clock::now() - started)
                         .count());
  std::ostream& os = open_out(stats_path, holder);
  stamp(os, "serve", spec, sc, "udp");
  server.write_epoch_csv(os);
  return 0;
}

int run_bench(const ServerFlags& flags, const std::string& spec_path, double rate, double duration,
              uint32_t threads, uint64_t seed, bool seed_set, const std::string& out_path,
              const std::string& host, bool sweep, const std::vector<double>& slo_multiples,
              const std::string& epochs_path, double p_large, bool p_large_set) {
  minos::ServerConfig sc = flags.config();
  minos::WorkloadSpec spec = load_spec(spec_path);
  if (rate > 0) spec.rate = rate;
  if (duration > 0) {
    const double scale = duration / spec.duration_s;
    spec.duration_s = duration;
    spec.warmup_s *= scale;
    spec.cooldown_s *= scale;
  }
  if (threads > 0) spec.threads = threads;
  if (seed_set) spec.seed = seed;
  if (p_large_set) spec.p_large = p_large;
  spec.validate();
  const minos::Keyspace keys(spec);

  minos::BenchConfig bc;
  bc.backend = minos::parse_backend(flags.backend);
  bc.server = sc;
  bc.host = host;
  bc.port_base = flags.port_base;

  std::unique_ptr<std::ofstream> holder;
  std::ostream& os = open_out(out_path, holder);
  stamp(os, "bench", spec, sc, flags.backend);

  if (!sweep) {
    std::unique_ptr<std::ofstream> epochs;
    if (!epochs_path.empty()) {
      epochs = std::make_unique<std::ofstream>(epochs_path);
      if (!*epochs) throw std::runtime_error("cannot write " + epochs_path);
      bc.inspect = [&](minos::Server& s) { s.write_epoch_csv(*epochs); };
    }
    const minos::RunResult r = minos::run_open_loop(spec, keys, bc);
    minos::CurvePoint p;
    p.offered = r.offered_rate;
    p.achieved = r.achieved_rate;
    p.mean_ns = r.all.mean();
    p.p50_ns = r.all.percentile(50);
    p.p99_ns = r.all.percentile(99);
    p.p999_ns = r.all.percentile(99.9);
    p.p99_small_ns = r.small.percentile(99);
    p.p99_large_ns = r.large.percentile(99);
    p.valid = r.valid();
    p.saturated = r.achieved_rate < 0.97 * r.offered_rate;
    minos::write_curve_csv_header(os);
    minos::write_curve_csv(os, minos::to_string(sc.policy), p);
    print_summary(r, sc);
    if (!r.valid()) {
      std::cerr << "run invalid: " << r.lost << " requests lost\n";
      return kExitInvalidRun;
    }
    return 0;
  }

  // The SLO is a multiple of the mean service time, measured at low load.
  minos::WorkloadSpec probe = spec;
  probe.rate = spec.rate / 20;
  const double service_ns = minos::run_open_loop(probe, keys, bc).mean_service_ns;
  std::vector<double> slos;
  for (double m : slo_multiples) slos.push_back(m * service_ns);
  const minos::SloSweep result = minos::sweep_slo(spec, keys, bc, slos, spec.rate);
  minos::write_curve_csv_header(os);
  for (const auto& p : result.curve) minos::write_curve_csv(os, minos::to_string(sc.policy), p);
  std::cout << "saturation_ops=" << result.saturation << " mean_service_ns=" << service_ns
            << '\n';
  for (size_t i = 0; i < slos.size(); ++i) {
    std::cout << "slo_x" << slo_multiples[i] << "_ns=" << slos[i]
              << " max_rate=" << result.slo[i].max_rate << " p99_ns=" << result.slo[i].p99_ns
              << '\n';
  }
  return 0;
}

std::vector<std::string> split_list(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const auto& s : in) {
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
  }
  return out;
}

std::vector<double> to_doubles(const std::vector<std::string>& in, const std::string& flag) {
  std::vector<double> out;
  for (const auto& s : split_list(in)) {
    try {
      size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "not a number: " + s);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Size-aware sharded key-value store: server, load generator, simulator, reports"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "quiet | info | debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}))
      ->capture_default_str();

  const uint64_t env_seed = minos::default_seed();
  uint64_t seed = env_seed;

  // serve
  auto* serve = app.add_subcommand("serve", "run the server");
  ServerFlags serve_flags;
  serve_flags.add(serve, "udp", "udp | inproc");
  std::string serve_spec;
  double serve_duration = 0;
  std::string serve_stats;
  serve->add_option("--spec", serve_spec, "workload spec file used to preload the keyspace");
  serve->add_option("--duration", serve_duration, "seconds to run (0 = until interrupted)");
  serve->add_option("--stats", serve_stats, "per-epoch CSV output (default stdout)");
  auto* serve_seed = serve->add_option("--seed", seed, "seed (default MINOS_SEED or 1)");

  // bench
  auto* bench = app.add_subcommand("bench", "open-loop load generator");
  ServerFlags bench_flags;
  bench_flags.add(bench, "sim", "sim | inproc | udp");
  std::string bench_spec, bench_out, bench_host = "127.0.0.1", bench_epochs;
  double bench_rate = 0, bench_duration = 0, bench_p_large = 0;
  uint32_t bench_threads = 0;
  bool bench_sweep = false;
  std::vector<std::string> bench_slo{"10,20"};
  bench->add_option("--spec", bench_spec, "workload spec file (default: desk-scale workload)");
  bench->add_option("--rate", bench_rate, "offered load, requests/s")->check(CLI::PositiveNumber);
  bench->add_option("--duration", bench_duration, "run length in seconds")
      ->check(CLI::PositiveNumber);
  bench->add_option("--threads", bench_threads, "client threads")->check(CLI::PositiveNumber);
  auto* bench_seed = bench->add_option("--seed", seed, "seed (default MINOS_SEED or 1)");
  bench->add_option("--out", bench_out, "CSV output (default stdout)");
  bench->add_option("--host", bench_host, "server address for the udp backend")
      ->capture_default_str();
  bench->add_flag("--sweep", bench_sweep, "search the max throughput under each SLO");
  bench->add_option("--slo", bench_slo, "SLOs as multiples of the mean service time")
      ->capture_default_str();
  bench->add_option("--epochs-out", bench_epochs, "per-epoch server CSV (sim, inproc)");
  auto* bench_pl = bench->add_option("--p-large", bench_p_large, "override p_large (percent)");

  // qsim
  auto* qsim = app.add_subcommand("qsim", "queueing simulator");
  std::vector<std::string> q_disc{"nxmgd1"}, q_k{"100"}, q_rho{"0.5"};
  uint32_t q_n = 8;
  double q_frac = 0.00125, q_horizon = 1e7, q_warmup = 0.1;
  std::string q_service = "bimodal", q_out;
  unsigned q_threads = 0;
  qsim->add_option("--discipline", q_disc, "nxmgd1 | mgn | nxmgd1-ws | size-aware | all (lists ok)")
      ->capture_default_str();
  qsim->add_option("--k", q_k, "large/small service ratio (list ok)")->capture_default_str();
  qsim->add_option("--rho", q_rho, "utilization (list ok)")->capture_default_str();
  qsim->add_option("--n", q_n, "cores")->capture_default_str();
  qsim->add_option("--frac-large", q_frac, "fraction of large requests")->capture_default_str();
  qsim->add_option("--horizon", q_horizon, "requests per run")->capture_default_str();
  qsim->add_option("--warmup", q_warmup, "leading share excluded")->capture_default_str();
  qsim->add_option("--service", q_service, "bimodal | exponential")
      ->check(CLI::IsMember({"bimodal", "exponential"}))
      ->capture_default_str();
  qsim->add_option("--threads", q_threads, "worker threads for sweeps (0 = hardware)");
  qsim->add_option("--seed", seed, "seed (default MINOS_SEED or 1)");
  qsim->add_option("--out", q_out, "CSV output (default stdout)");

  // report
  auto* rep = app.add_subcommand("report", "merge, sort and annotate CSV results");
  std::vector<std::string> rep_inputs, rep_sort;
  std::string rep_out;
  bool rep_plain = false;
  rep->add_option("inputs", rep_inputs, "CSV files");
  rep->add_option("--sort", rep_sort, "columns to sort by (list ok)");
  rep->add_option("--out", rep_out, "output (default stdout)");
  rep->add_flag("--no-annotate", rep_plain, "omit the percentile summary lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  g_log = log_level == "quiet" ? LogLevel::kQuiet
          : log_level == "debug" ? LogLevel::kDebug
                                 : LogLevel::kInfo;

  try {
    if (*serve) {
      return run_serve(serve_flags, serve_spec, serve_duration, serve_stats, seed,
                       serve_seed->count() > 0);
    }
    if (*bench) {
      return run_bench(bench_flags, bench_spec, bench_rate, bench_duration, bench_threads, seed,
                       bench_seed->count() > 0, bench_out, bench_host,
                       bench_sweep, to_doubles(bench_slo, "--slo"), bench_epochs, bench_p_large,
                       bench_pl->count() > 0);
    }
    if (*qsim) {
      minos::qsim::SimConfig base;
      base.n_cores = q_n;
      base.frac_large = q_frac;
      base.horizon = static_cast<uint64_t>(q_horizon);
      base.seed = seed;
      base.warmup = q_warmup;
      base.service = q_service == "exponential" ? minos::qsim::ServiceDist::kExponential
                                                : minos::qsim::ServiceDist::kBimodal;
      std::vector<minos::qsim::Discipline> disc;
      for (const auto& d : split_list(q_disc)) {
        if (d == "all") {
          disc = {minos::qsim::Discipline::kNxMGD1, minos::qsim::Discipline::kMGN,
                  minos::qsim::Discipline::kNxMGD1WS, minos::qsim::Discipline::kSizeAware};
        } else {
          disc.push_back(minos::qsim::parse_discipline(d));
        }
      }
      const auto ks = to_doubles(q_k, "--k");
      const auto rhos = to_doubles(q_rho, "--rho");
      // Reject bad points before any worker starts.
      for (double k : ks) {
        if (!(k >= 1.0)) throw CLI::ValidationError("--k", "must be at least 1");
      }
      for (double r : rhos) {
        if (!(r > 0.0 && r < 1.0)) {
          throw minos::qsim::UnstableConfig("--rho must lie in (0, 1), got " + std::to_string(r));
        }
      }
      std::unique_ptr<std::ofstream> holder;
      std::ostream& os = open_out(q_out, holder);
      os << "# minos qsim n=" << q_n << " frac_large=" << q_frac << " horizon=" << base.horizon
         << " service=" << q_service << " seed=" << seed << '\n';
      minos::qsim::write_csv_header(os);
      for (const auto& r : minos::qsim::sweep(base, disc, ks, rhos, q_threads)) {
        minos::qsim::write_csv_row(os, r);
      }
      return 0;
    }
    if (*rep) {
      std::vector<minos::report::Table> tables;
      for (const auto& path : rep_inputs) tables.push_back(minos::report::read_csv_file(path));
      minos::report::Table t = minos::report::merge(tables);
      if (!rep_sort.empty()) minos::report::sort_rows(t, split_list(rep_sort));
      std::unique_ptr<std::ofstream> holder;
      std::ostream& os = open_out(rep_out, holder);
      minos::report::write(os, t, !rep_plain);
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const minos::SpecError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
