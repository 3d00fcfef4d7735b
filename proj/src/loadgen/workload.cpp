#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "minos/loadgen.hpp"

namespace minos {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_integral_v<T>) {
    // Accept integral values written in scientific notation (1e6).
    if (s.find_first_of(".eE") != std::string_view::npos) {
      double d = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
      if (ec != std::errc() || p != s.data() + s.size() || d < 0 || d != std::floor(d)) return false;
      out = static_cast<T>(d);
      return true;
    }
  }
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::vector<ScheduleStep> parse_schedule(std::string_view s) {
  std::vector<ScheduleStep> out;
  s = trim(s);
  while (!s.empty()) {
    size_t comma = s.find(',');
    std::string_view item = trim(s.substr(0, comma));
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    size_t colon = item.find(':');
    ScheduleStep step;
    if (colon == std::string_view::npos || !parse_number(item.substr(0, colon), step.time_s) ||
        !parse_number(item.substr(colon + 1), step.p_large)) {
      throw std::invalid_argument("schedule entries are time_s:p_large, got '" +
                                  std::string(item) + "'");
    }
    out.push_back(step);
  }
  return out;
}

}  // namespace

void WorkloadSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (total_keys == 0) fail("total_keys must be positive");
  if (large_keys >= total_keys) fail("large_keys must be below total_keys");
  if (tiny_fraction < 0 || small_fraction < 0 ||
      std::abs(tiny_fraction + small_fraction - 1.0) > 1e-9) {
    fail("tiny_fraction and small_fraction must be non-negative and sum to 1");
  }
  if (tiny_min == 0 || tiny_min > tiny_max) fail("tiny_min must lie in [1, tiny_max]");
  if (small_min > small_max) fail("small_min must not exceed small_max");
  if (large_min > large_max) fail("large_min must not exceed large_max");
  if (large_max > (1u << 20)) fail("large_max must not exceed 1048576 bytes");
  auto check_p = [&](double p) {
    if (!(p >= 0.0 && p < 1.0)) fail("p_large is a percentage and must lie in [0, 1)");
    if (p > 0.0 && large_keys == 0) fail("p_large > 0 needs large_keys > 0");
  };
  check_p(p_large);
  if (!(get_ratio >= 0.0 && get_ratio <= 1.0)) fail("get_ratio must lie in [0, 1]");
  if (!(zipf_s > 0.0)) fail("zipf_s must be positive");
  if (!(rate > 0.0)) fail("rate must be positive");
  if (!(duration_s > 0.0)) fail("duration_s must be positive");
  if (warmup_s < 0 || cooldown_s < 0 || warmup_s + cooldown_s >= duration_s) {
    fail("warmup_s + cooldown_s must be below duration_s");
  }
  if (threads == 0) fail("threads must be positive");
  for (size_t i = 0; i < schedule.size(); ++i) {
    check_p(schedule[i].p_large);
    if (i > 0 && schedule[i].time_s < schedule[i - 1].time_s) {
      fail("schedule times must be non-decreasing");
    }
  }
}

double WorkloadSpec::p_large_at(double t_s) const {
  double p = p_large;
  for (const ScheduleStep& s : schedule) {
    if (s.time_s > t_s) break;
    p = s.p_large;
  }
  return p;
}

WorkloadSpec parse_workload(std::istream& in) {
  WorkloadSpec spec;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v(line);
    if (size_t hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    size_t eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw SpecError("line " + std::to_string(line_no) + ": expected key = value", line_no);
    }
    const std::string key(trim(v.substr(0, eq)));
    const std::string_view val = trim(v.substr(eq + 1));
    bool ok = true;
    if (key == "total_keys") ok = parse_number(val, spec.total_keys);
    else if (key == "large_keys") ok = parse_number(val, spec.large_keys);
    else if (key == "tiny_fraction") ok = parse_number(val, spec.tiny_fraction);
    else if (key == "small_fraction") ok = parse_number(val, spec.small_fraction);
    else if (key == "tiny_min") ok = parse_number(val, spec.tiny_min);
    else if (key == "tiny_max") ok = parse_number(val, spec.tiny_max);
    else if (key == "small_min") ok = parse_number(val, spec.small_min);
    else if (key == "small_max") ok = parse_number(val, spec.small_max);
    else if (key == "large_min") ok = parse_number(val, spec.large_min);
    else if (key == "large_max") ok = parse_number(val, spec.large_max);
    else if (key == "p_large") ok = parse_number(val, spec.p_large);
    else if (key == "get_ratio") ok = parse_number(val, spec.get_ratio);
    else if (key == "zipf_s") ok = parse_number(val, spec.zipf_s);
    else if (key == "rate") ok = parse_number(val, spec.rate);
    else if (key == "duration_s") ok = parse_number(val, spec.duration_s);
    else if (key == "warmup_s") ok = parse_number(val, spec.warmup_s);
    else if (key == "cooldown_s") ok = parse_number(val, spec.cooldown_s);
    else if (key == "threads") ok = parse_number(val, spec.threads);
    else if (key == "seed") ok = parse_number(val, spec.seed);
    else if (key == "schedule") {
      try {
        spec.schedule = parse_schedule(val);
      } catch (const std::invalid_argument& e) {
        throw SpecError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
      }
    } else {
      throw SpecError("line " + std::to_string(line_no) + ": unknown key '" + key + "'", line_no);
    }
    if (!ok) {
      throw SpecError("line " + std::to_string(line_no) + ": bad value for " + key + ": '" +
                          std::string(val) + "'",
                      line_no);
    }
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw SpecError(e.what(), 0);
  }
  return spec;
}

WorkloadSpec load_workload(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file " + path, 0);
  return parse_workload(in);
}

void write_workload(std::ostream& os, const WorkloadSpec& s) {
  os << "total_keys = " << s.total_keys << "\nlarge_keys = " << s.large_keys
     << "\ntiny_fraction = " << s.tiny_fraction << "\nsmall_fraction = " << s.small_fraction
     << "\ntiny_min = " << s.tiny_min << "\ntiny_max = " << s.tiny_max
     << "\nsmall_min = " << s.small_min << "\nsmall_max = " << s.small_max
     << "\nlarge_min = " << s.large_min << "\nlarge_max = " << s.large_max
     << "\np_large = " << s.p_large << "\nget_ratio = " << s.get_ratio
     << "\nzipf_s = " << s.zipf_s << "\nrate = " << s.rate << "\nduration_s = " << s.duration_s
     << "\nwarmup_s = " << s.warmup_s << "\ncooldown_s = " << s.cooldown_s
     << "\nthreads = " << s.threads << "\nseed = " << s.seed << '\n';
  if (!s.schedule.empty()) {
    os << "schedule = ";
    for (size_t i = 0; i < s.schedule.size(); ++i) {
      os << (i ? "," : "") << s.schedule[i].time_s << ':' << s.schedule[i].p_large;
    }
    os << '\n';
  }
}

uint64_t default_seed() {
  if (const char* env = std::getenv("MINOS_SEED")) {
    uint64_t seed = 0;
    if (parse_number(std::string_view(env), seed)) return seed;
  }
  return 1;
}

WorkloadSpec desk_workload(uint64_t keys) {
  WorkloadSpec spec;
  spec.total_keys = keys;
  spec.large_keys = std::max<uint64_t>(
      1, static_cast<uint64_t>(std::llround(10'000.0 * static_cast<double>(keys) / 16e6)));
  spec.duration_s = 0.06;
  spec.warmup_s = 0.01;
  spec.cooldown_s = 0.005;
  spec.seed = default_seed();
  return spec;
}

ZipfSampler::ZipfSampler(uint64_t n, double s) : cdf_(n) {
  double sum = 0.0;
  for (uint64_t k = 0; k < n; ++k) {
    sum += std::pow(static_cast<double>(k + 1), -s);
    cdf_[k] = sum;
  }
  for (double& c : cdf_) c /= sum;
  if (n > 0) cdf_.back() = 1.0;
}

uint64_t ZipfSampler::from_uniform(double u) const {
  if (cdf_.empty()) return 0;
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<uint64_t>(static_cast<uint64_t>(it - cdf_.begin()), cdf_.size() - 1);
}

Keyspace::Keyspace(const WorkloadSpec& spec)
    : key_mix_((spec.validate(), splitmix64(spec.seed ^ 0x6b657973ULL))),
      zipf_(spec.total_keys - spec.large_keys, spec.zipf_s) {
  std::mt19937_64 rng(splitmix64(spec.seed));
  const uint64_t n = spec.total_keys;
  large_ = spec.large_keys;
  tiny_ = static_cast<uint64_t>(std::llround(spec.tiny_fraction * static_cast<double>(n - large_)));
  sizes_.resize(n);
  std::uniform_int_distribution<uint32_t> large(spec.large_min, spec.large_max);
  std::uniform_int_distribution<uint32_t> tiny(spec.tiny_min, spec.tiny_max);
  std::uniform_int_distribution<uint32_t> small(spec.small_min, spec.small_max);
  for (uint64_t i = 0; i < n; ++i) {
    if (i < large_) sizes_[i] = large(rng);
    else if (i < large_ + tiny_) sizes_[i] = tiny(rng);
    else sizes_[i] = small(rng);
  }
  rank_to_key_.resize(n - large_);
  std::iota(rank_to_key_.begin(), rank_to_key_.end(), static_cast<uint32_t>(large_));
  std::shuffle(rank_to_key_.begin(), rank_to_key_.end(), rng);
}

std::string Keyspace::key(uint64_t index) const {
  const uint64_t v = ((index + 1) * 0x9e3779b97f4a7c15ULL) ^ key_mix_;
  std::string k(8, '\0');
  for (int i = 0; i < 8; ++i) k[i] = static_cast<char>(v >> (8 * i));
  return k;
}

ItemClass Keyspace::item_class(uint64_t index) const {
  if (index < large_) return ItemClass::kLarge;
  return index < large_ + tiny_ ? ItemClass::kTiny : ItemClass::kSmall;
}

uint64_t Keyspace::digest() const {
  uint64_t h = splitmix64(sizes_.size());
  for (uint64_t i = 0; i < sizes_.size(); ++i) {
    const std::string k = key(i);
    uint64_t kv = 0;
    for (int b = 0; b < 8; ++b) kv |= static_cast<uint64_t>(static_cast<uint8_t>(k[b])) << (8 * b);
    h = splitmix64(h ^ kv) ^ sizes_[i];
  }
  for (uint32_t r : rank_to_key_) h = splitmix64(h ^ r);
  return h;
}

void Keyspace::fill_value(uint64_t index, uint64_t version, std::span<uint8_t> out) {
  const uint64_t base = splitmix64(index * 0x100000001b3ULL ^ splitmix64(version));
  for (size_t pos = 0; pos < out.size(); pos += 8) {
    const uint64_t w = splitmix64(base + pos);
    const size_t n = std::min<size_t>(8, out.size() - pos);
    for (size_t b = 0; b < n; ++b) out[pos + b] = static_cast<uint8_t>(w >> (8 * b));
  }
}

RequestGenerator::RequestGenerator(const WorkloadSpec& spec, const Keyspace& keys, uint64_t seed)
    : spec_(spec), keys_(keys), rng_(splitmix64(seed)) {}

GeneratedRequest RequestGenerator::next(double p_large_pct) {
  GeneratedRequest r;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  r.large = keys_.large_count() > 0 && u(rng_) < p_large_pct / 100.0;
  if (r.large || keys_.ranked_count() == 0) {
    r.large = true;
    r.key_index = std::uniform_int_distribution<uint64_t>(0, keys_.large_count() - 1)(rng_);
  } else {
    r.key_index = keys_.ranked_key(keys_.zipf()(rng_));
  }
  r.op = u(rng_) < spec_.get_ratio ? Opcode::kGet : Opcode::kPut;
  r.size = keys_.value_size(r.key_index);
  return r;
}

double RequestGenerator::next_gap_ns(double rate_per_s) {
  return std::exponential_distribution<double>(rate_per_s)(rng_) * 1e9;
}

QueueChooser::QueueChooser(Policy policy, uint32_t cores, uint32_t handoff, uint32_t partitions)
    : policy_(policy),
      cores_(cores),
      handoff_(std::max<uint32_t>(handoff, 1)),
      partitions_(partitions ? partitions : cores) {}

uint32_t QueueChooser::operator()(Opcode op, KeyHash hash, std::mt19937_64& rng) const {
  switch (policy_) {
    case Policy::kSho: return static_cast<uint32_t>(rng() % handoff_);
    case Policy::kSizeAware:
      if (op == Opcode::kGet) return static_cast<uint32_t>(rng() % cores_);
      break;
    default: break;
  }
  return hash.partition(partitions_) % cores_;
}

}  // namespace minos
