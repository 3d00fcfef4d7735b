#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "doctest.h"
#include "minos/shardctl.hpp"

using namespace minos;

namespace {

SmoothedHistogram to_smoothed(const SizeHistogram& h) {
  SmoothedHistogram s;
  for (int c = 0; c < kSizeClasses; ++c) {
    if (h[c] != 0) s.add(c, static_cast<double>(h[c]), h.max_seen(c));
  }
  return s;
}

// Sizes of the default item profile: 40% tiny [1,13], 60% small [14,1400]
// among regular keys, large uniform in [1500, s_large].
SizeHistogram profile(std::mt19937_64& rng, size_t requests, double p_large_pct,
                      uint64_t s_large = 512000) {
  SizeHistogram h;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<uint64_t> tiny(1, 13), small(14, 1400), large(1500, s_large);
  for (size_t i = 0; i < requests; ++i) {
    if (u(rng) < p_large_pct / 100.0) {
      h.record(large(rng));
    } else if (u(rng) < 0.4) {
      h.record(tiny(rng));
    } else {
      h.record(small(rng));
    }
  }
  return h;
}

// Exact min-max contiguous partition of weights into k groups.
double dp_partition(const std::vector<double>& w, size_t k) {
  const size_t m = w.size();
  std::vector<double> prefix(m + 1, 0.0);
  for (size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] + w[i];
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(k + 1, std::vector<double>(m + 1, inf));
  best[0][0] = 0.0;
  for (size_t g = 1; g <= k; ++g) {
    for (size_t j = 0; j <= m; ++j) {
      for (size_t i = 0; i <= j; ++i) {
        best[g][j] = std::min(best[g][j], std::max(best[g - 1][i], prefix[j] - prefix[i]));
      }
    }
  }
  return best[k][m];
}

// Cost per range, splitting each class's cost over its populated span with
// density proportional to size.
std::vector<double> interval_costs(const SmoothedHistogram& h, const std::vector<SizeRange>& r,
                                   const CostFn& cost, uint64_t threshold) {
  std::vector<double> out(r.size(), 0.0);
  for (int c = 0; c < kSizeClasses; ++c) {
    if (h[c] <= 0.0) continue;
    const double w = h[c] * cost(class_representative(h, c));
    const double a = static_cast<double>(std::max(class_lower(c) - 1, threshold));
    const double b = static_cast<double>(std::max<uint64_t>(h.max_seen(c), class_lower(c)));
    for (size_t i = 0; i < r.size(); ++i) {
      const double lo = std::max(a, static_cast<double>(r[i].lo));
      const double hi = std::min(b, static_cast<double>(r[i].hi));
      if (b <= a) {
        if (r[i].contains(static_cast<uint64_t>(b))) out[i] += w;
      } else if (hi > lo) {
        out[i] += w * (hi * hi - lo * lo) / (b * b - a * a);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("size classes") {
  CHECK(size_class(1) == 0);
  CHECK(size_class(0) == 0);
  int prev = 0;
  for (uint64_t s = 1; s < (1u << 22); s += 1 + s / 64) {
    int c = size_class(s);
    CHECK(c >= prev);
    CHECK(c < kSizeClasses);
    if (s < (1u << 21)) {
      CHECK(class_lower(c) <= s);
      CHECK(s <= class_upper(c));
    }
    prev = c;
  }
  CHECK(size_class(1u << 30) == kSizeClasses - 1);
}

TEST_CASE("record and aggregate") {
  SizeHistogram h;
  h.record(1);
  CHECK(h[0] == 1);
  h.record(700);
  h.record(700);
  CHECK(h[size_class(700)] == 2);

  std::mt19937_64 rng(1);
  SizeHistogram big;
  for (int i = 0; i < 100000; ++i) big.record(1 + rng() % (1 << 20));
  CHECK(big.total() == 100000);

  std::vector<SizeHistogram> none;
  CHECK(aggregate(std::span<SizeHistogram>(none)).total() == 0);

  std::vector<SizeHistogram> one{big};
  CHECK(aggregate(std::span<SizeHistogram>(one)) == big);
  CHECK(one[0].total() == 0);

  SizeHistogram a, b;
  for (int i = 0; i < 5000; ++i) a.record(1 + rng() % 5000);
  for (int i = 0; i < 7000; ++i) b.record(1 + rng() % 900000);
  std::vector<SizeHistogram> two{a, b};
  SizeHistogram sum = aggregate(std::span<SizeHistogram>(two));
  for (int c = 0; c < kSizeClasses; ++c) CHECK(sum[c] == a[c] + b[c]);
  SizeHistogram ba = b;
  ba.merge(a);
  CHECK(ba == sum);

  std::vector<CoreHistogram> cores(3);
  for (int i = 0; i < 300; ++i) cores[i % 3].record(1 + i);
  SizeHistogram drained = aggregate(std::span<CoreHistogram>(cores));
  CHECK(drained.total() == 300);
  CHECK(aggregate(std::span<CoreHistogram>(cores)).total() == 0);
}

TEST_CASE("concurrent recording never double counts") {
  CoreHistogram h;
  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (int i = 0; i < 200000; ++i) h.record(1 + i % 4000);
    done = true;
  });
  uint64_t seen = 0;
  while (!done) seen += h.drain().total();
  writer.join();
  seen += h.drain().total();
  CHECK(seen <= 200000);
  CHECK(seen >= 199000);
}

TEST_CASE("smoothing") {
  ThresholdState st;
  SizeHistogram h;
  for (int i = 0; i < 10; ++i) h.record(100);
  smooth(st, h);
  CHECK(st.current[size_class(100)] == doctest::Approx(9.0));

  ThresholdState full;
  full.alpha = 1.0;
  full.current.add(3, 55.0, 8);
  smooth(full, h);
  for (int c = 0; c < kSizeClasses; ++c) CHECK(full.current[c] == doctest::Approx(h[c]));

  ThresholdState conv;
  conv.alpha = 0.3;
  const int c = size_class(100);
  conv.current.at(c) = 500.0;
  const double h0 = 500.0;
  for (int k = 1; k <= 30; ++k) {
    smooth(conv, h);
    double bound = std::pow(1.0 - conv.alpha, k) * std::abs(h0 - 10.0);
    CHECK(std::abs(conv.current[c] - 10.0) <= bound + 1e-9);
  }
}

TEST_CASE("threshold percentile") {
  CHECK_FALSE(threshold_99p(SmoothedHistogram{}).has_value());

  SmoothedHistogram one;
  one.at(size_class(3000)) = 42.0;
  CHECK(threshold_99p(one) == class_upper(size_class(3000)));

  std::mt19937_64 rng(7);
  CHECK(*threshold_99p(to_smoothed(profile(rng, 200000, 0.125))) <= 1400);
}

TEST_CASE("threshold matches sorted oracle within one class") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 20; ++round) {
    std::vector<uint64_t> sizes;
    // Mixtures of log-uniform and uniform components with random weights.
    const int parts = 1 + static_cast<int>(rng() % 4);
    for (int p = 0; p < parts; ++p) {
      uint64_t lo = 1 + rng() % 4096;
      uint64_t hi = lo + rng() % (1 << 20);
      size_t n = 500 + rng() % 5000;
      for (size_t i = 0; i < n; ++i) sizes.push_back(lo + rng() % (hi - lo + 1));
    }
    sizes.resize(std::min<size_t>(sizes.size(), 10000));
    SizeHistogram h;
    for (auto s : sizes) h.record(s);
    std::sort(sizes.begin(), sizes.end());
    size_t rank = static_cast<size_t>(std::ceil(0.99 * sizes.size()));
    uint64_t exact = sizes[rank - 1];
    uint64_t got = *threshold_99p(to_smoothed(h));
    int ce = size_class(exact);
    uint64_t width = class_upper(ce) - class_lower(ce) + 1;
    CHECK(std::abs(size_class(got) - ce) <= 1);
    CHECK((got > exact ? got - exact : exact - got) <= width);
  }
}

TEST_CASE("core allocation") {
  auto cost = packet_cost_fn();

  SUBCASE("small-cost fraction 0.60 gives 5 small and 3 large") {
    SmoothedHistogram g;
    g.add(size_class(100), 60.0, 100);
    g.add(size_class(5000), 10.0, 5000);  // 4 packets each: cost 40
    CHECK(small_cost_fraction(g, 1400, cost) == doctest::Approx(0.60));
    CoreAllocation a = allocate_cores(g, 1400, 8, cost);
    CHECK(a.n_s == 5);
    CHECK(a.n_l == 3);
    CHECK_FALSE(a.standby);
  }
  SUBCASE("no large requests keeps every core small with a standby") {
    SmoothedHistogram h;
    h.add(size_class(100), 100.0, 100);
    CoreAllocation a = allocate_cores(h, 1400, 8, cost);
    CHECK(a.n_s == 8);
    CHECK(a.n_l == 0);
    CHECK(a.standby);
  }
  SUBCASE("default profile gives one large core") {
    std::mt19937_64 rng(5);
    auto h = to_smoothed(profile(rng, 400000, 0.125));
    uint64_t t = *threshold_99p(h);
    CoreAllocation a = allocate_cores(h, t, 8, cost);
    CHECK(a.n_l == 1);
  }
  SUBCASE("more large cost never reduces large cores") {
    uint32_t prev = 0;
    for (double large = 0.0; large < 5000.0; large += 37.0) {
      SmoothedHistogram h;
      h.add(size_class(100), 10000.0, 100);
      h.add(size_class(300000), large, 300000);
      CoreAllocation a = allocate_cores(h, 1400, 8, cost);
      CHECK(a.n_l >= prev);
      CHECK(a.n_s >= 1);
      CHECK(a.n_s + a.n_l == 8);
      prev = a.n_l;
    }
  }
}

TEST_CASE("large range partitioning") {
  auto cost = packet_cost_fn();
  const uint64_t max_size = 1 << 20;

  SUBCASE("one large core covers everything above the threshold") {
    SmoothedHistogram h;
    h.add(size_class(5000), 10.0, 5000);
    auto r = partition_large_ranges(h, 1400, 1, cost, max_size);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == SizeRange{1400, max_size});
  }
  SUBCASE("uniform cost over four classes splits two and two") {
    SmoothedHistogram h;
    const int base = size_class(4096);
    for (int c = base; c < base + 4; ++c) {
      uint64_t rep = class_lower(c) + (class_upper(c) - class_lower(c)) / 2;
      h.add(c, 100.0 / cost(rep), class_upper(c));
    }
    auto r = partition_large_ranges(h, 1400, 2, cost, max_size);
    REQUIRE(r.size() == 2);
    CHECK(r[0].hi == class_upper(base + 1));
    auto costs = interval_costs(h, r, cost, 1400);
    CHECK(costs[0] == doctest::Approx(costs[1]).epsilon(0.01));
  }
  SUBCASE("uniform sizes over one octave balance within a class") {
    // Sizes uniform in (256K, 512K]: class-boundary cuts cannot split four
    // classes of unequal cost evenly across three cores.
    SmoothedHistogram h;
    for (uint64_t s = 262145; s <= 524288; s += 64) h.record(s, 1.0);
    auto r = partition_large_ranges(h, 1400, 3, cost, max_size);
    auto costs = interval_costs(h, r, cost, 1400);
    const double mean = (costs[0] + costs[1] + costs[2]) / 3.0;
    for (double x : costs) CHECK(x == doctest::Approx(mean).epsilon(0.01));
  }
  SUBCASE("random histograms against the exact partition") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    const uint64_t threshold = 1400;
    for (int round = 0; round < 200; ++round) {
      const bool comparable = round % 2 == 0;
      const uint32_t n_l = 1 + static_cast<uint32_t>(rng() % 5);
      SmoothedHistogram h;
      std::vector<double> w;
      for (int c = size_class(threshold) + 1; c < kSizeClasses; ++c) {
        if (rng() % 3 == 0) continue;
        uint64_t hi = std::min<uint64_t>(class_upper(c), max_size);
        if (class_lower(c) > hi) continue;
        uint64_t rep = class_lower(c) + (hi - class_lower(c)) / 2;
        // Comparable rounds keep every class's cost within 3x of the others;
        // the rest draw raw counts, so costs grow with size.
        double count = comparable ? 1000.0 * u(rng) / cost(rep) : 1.0 + rng() % 1000;
        h.add(c, count, hi);
        w.push_back(count * cost(rep));
      }
      if (w.size() < n_l) continue;
      auto r = partition_large_ranges(h, threshold, n_l, cost, max_size);
      REQUIRE(r.size() == n_l);
      CHECK(r.front().lo == threshold);
      CHECK(r.back().hi == max_size);
      for (size_t i = 1; i < r.size(); ++i) CHECK(r[i].lo == r[i - 1].hi);

      auto costs = interval_costs(h, r, cost, threshold);
      double total = 0.0;
      for (double x : costs) total += x;
      double w_total = 0.0;
      for (double x : w) w_total += x;
      CHECK(total == doctest::Approx(w_total));
      double mx = *std::max_element(costs.begin(), costs.end());
      double mn = *std::min_element(costs.begin(), costs.end());
      CHECK(mn > 0.0);
      double opt = dp_partition(w, n_l);
      double biggest = *std::max_element(w.begin(), w.end());
      CHECK(mx <= opt + biggest + 1e-6);
      if (comparable) CHECK(mx <= 2.0 * mn);
    }
  }
  SUBCASE("every size above the threshold has exactly one owner") {
    std::mt19937_64 rng(9);
    auto h = to_smoothed(profile(rng, 200000, 0.75));
    ShardPlan plan;
    plan.n = 8;
    plan.threshold = 1400;
    plan.n_l = 4;
    plan.n_s = 4;
    plan.large_ranges = partition_large_ranges(h, 1400, 4, cost, max_size);
    for (uint64_t s = 1401; s <= max_size; s += 97) {
      int owners = 0;
      for (const auto& r : plan.large_ranges) owners += r.contains(s);
      CHECK(owners == 1);
      uint32_t core = plan.large_core_for(s);
      CHECK(core >= plan.n_s);
      CHECK(plan.large_ranges[core - plan.n_s].contains(s));
    }
  }
}

TEST_CASE("control epochs") {
  ControllerConfig cfg;
  cfg.cores = 8;
  Controller ctl(cfg);
  CHECK(ctl.plan().version == 0);
  CHECK(ctl.plan().n_s == 8);
  CHECK(ctl.plan().standby);

  SUBCASE("empty epoch republishes the previous plan") {
    const ShardPlan& p = ctl.control_epoch(SizeHistogram{});
    CHECK(p.version == 1);
    CHECK(equivalent(p, initial_plan(cfg)));
    CHECK(ctl.records().back().empty);
  }
  SUBCASE("identical epochs converge to an identical plan") {
    std::mt19937_64 rng(2);
    SizeHistogram h = profile(rng, 100000, 0.125);
    std::vector<ShardPlan> plans;
    for (int e = 0; e < 6; ++e) {
      plans.push_back(ctl.control_epoch(h));
      CHECK(plans.back().version == static_cast<uint64_t>(e + 1));
    }
    CHECK(plans.back().n_l == 1);
    CHECK(plans.back().threshold <= 1400);
    CHECK(equivalent(plans[4], plans[5]));
    CHECK(equivalent(ctl.compute(ctl.state().current), plans[5]));
  }
  SUBCASE("raising the large share adds large cores within two epochs") {
    std::mt19937_64 rng(4);
    for (int e = 0; e < 5; ++e) ctl.control_epoch(profile(rng, 100000, 0.125));
    const uint32_t before = ctl.plan().n_l;
    CHECK(before == 1);
    ctl.control_epoch(profile(rng, 100000, 0.75));
    const uint32_t one = ctl.plan().n_l;
    ctl.control_epoch(profile(rng, 100000, 0.75));
    CHECK(std::max(one, ctl.plan().n_l) > before);
  }
  SUBCASE("static threshold is honoured") {
    ControllerConfig s = cfg;
    s.static_threshold = 4000;
    Controller fixed(s);
    std::mt19937_64 rng(4);
    const ShardPlan& p = fixed.control_epoch(profile(rng, 100000, 0.75));
    CHECK(p.threshold == 4000);
  }
  SUBCASE("csv export has one row per epoch") {
    std::mt19937_64 rng(4);
    for (int e = 0; e < 3; ++e) ctl.control_epoch(profile(rng, 10000, 0.5));
    std::ostringstream plans, hists;
    write_plan_csv_header(plans);
    write_histogram_csv_header(hists);
    for (const auto& r : ctl.records()) {
      write_plan_csv(plans, r);
      write_histogram_csv(hists, r);
    }
    std::string text = plans.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(hists.str().size() > 0);
  }
}

TEST_CASE("plan publication is never torn") {
  PlanBoard board(ShardPlan::all_small(8, 1472, true));
  std::atomic<bool> stop{false};
  std::atomic<uint64_t> bad{0};
  std::thread reader([&] {
    while (!stop.load()) {
      const ShardPlan& p = board.current();
      // Every plan published below keeps n_s + n_l == n and one range per large core.
      if (p.n_s + p.n_l != p.n || p.large_ranges.size() != p.n_l) ++bad;
      if (p.n_l > 0 && p.large_ranges.back().hi != p.threshold * 1000) ++bad;
    }
  });
  for (uint32_t i = 1; i <= 20000; ++i) {
    ShardPlan p;
    p.n = 8;
    p.n_l = i % 8;
    p.n_s = 8 - p.n_l;
    p.standby = p.n_l == 0;
    p.threshold = 100 + i;
    uint64_t lo = p.threshold;
    for (uint32_t k = 0; k < p.n_l; ++k) {
      uint64_t hi = k + 1 == p.n_l ? p.threshold * 1000 : lo + 10;
      p.large_ranges.push_back({lo, hi});
      lo = hi;
    }
    CHECK(board.publish(p).version == i);
  }
  stop = true;
  reader.join();
  CHECK(bad == 0);
  CHECK(board.history().size() == 20001);
}
