#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "minos/runtime.hpp"

using namespace minos;

namespace {

std::string key_of(uint64_t i) {
  std::string k(8, '\0');
  for (int b = 0; b < 8; ++b) k[b] = static_cast<char>((i * 0x9e3779b97f4a7c15ULL) >> (8 * b));
  return k;
}

std::vector<uint8_t> value_of(uint64_t i, size_t size) {
  std::vector<uint8_t> v(size);
  for (size_t j = 0; j < size; ++j) v[j] = static_cast<uint8_t>(i * 31 + j * 7);
  return v;
}

std::vector<std::vector<uint8_t>> get_frames(const std::string& key, uint64_t id) {
  MessageHeader h;
  h.opcode = Opcode::kGet;
  h.request_id = id;
  h.keyhash = hash_key(key).value();
  h.key_len = static_cast<uint16_t>(key.size());
  return {encode(h, key, {})};
}

std::vector<std::vector<uint8_t>> put_frames(const std::string& key,
                                             const std::vector<uint8_t>& value, uint64_t id) {
  MessageHeader h;
  h.opcode = Opcode::kPut;
  h.request_id = id;
  h.keyhash = hash_key(key).value();
  return encode_message(h, key, value);
}

class VectorSource : public ArrivalSource {
 public:
  explicit VectorSource(std::vector<SimArrival> a) : a_(std::move(a)) {}
  std::optional<int64_t> peek_time() override {
    if (i_ == a_.size()) return std::nullopt;
    return a_[i_].time;
  }
  SimArrival next() override { return std::move(a_[i_++]); }

 private:
  std::vector<SimArrival> a_;
  size_t i_ = 0;
};

/// Collects reply frames by request id.
struct Replies {
  std::map<uint64_t, std::vector<std::vector<uint8_t>>> frames;
  std::map<uint64_t, int64_t> last_stamp;
  void attach(InprocTransport& t) {
    t.set_sink([this](uint32_t, Frame&& f) {
      DecodedMessage m;
      REQUIRE(decode(f.data, m) == CodecStatus::kOk);
      last_stamp[m.header.request_id] = f.stamp;
      frames[m.header.request_id].push_back(std::move(f.data));
    });
  }
  Opcode opcode(uint64_t id) const {
    DecodedMessage m;
    decode(frames.at(id).front(), m);
    return m.header.opcode;
  }
  bool complete(uint64_t id) const {
    auto it = frames.find(id);
    if (it == frames.end()) return false;
    DecodedMessage m;
    decode(it->second.front(), m);
    return m.header.opcode == Opcode::kError || it->second.size() == m.header.frag_count;
  }
};

struct Fixture {
  ServerConfig config;
  std::unique_ptr<InprocTransport> transport;
  std::unique_ptr<Server> server;
  Replies replies;

  explicit Fixture(ServerConfig c) : config(c) {
    config.trace = true;
    transport = std::make_unique<InprocTransport>(config.cores, config.rx_capacity);
    server = std::make_unique<Server>(config, *transport);
    replies.attach(*transport);
  }
};

/// Preloaded key set: `n` keys, every `large_every`-th one large.
struct Items {
  std::vector<std::string> keys;
  std::vector<size_t> sizes;
};

Items preload(Server& s, size_t n, size_t large_every, std::mt19937_64& rng) {
  Items items;
  for (size_t i = 0; i < n; ++i) {
    size_t size = large_every && i % large_every == 0 ? 2000 + rng() % 60000 : 1 + rng() % 1400;
    items.keys.push_back(key_of(i));
    items.sizes.push_back(size);
    REQUIRE(s.preload(items.keys.back(), value_of(i, size)) == StoreStatus::kOk);
  }
  return items;
}

uint32_t master_queue(const Server& s, const std::string& key) {
  return hash_key(key).partition(s.config().cores) % s.config().cores;
}

ShardPlan plan_with(uint32_t n, uint32_t n_s, uint64_t threshold,
                    std::vector<SizeRange> ranges) {
  ShardPlan p;
  p.n = n;
  p.n_s = n_s;
  p.n_l = n - n_s;
  p.threshold = threshold;
  p.standby = p.n_l == 0;
  p.large_ranges = std::move(ranges);
  return p;
}

}  // namespace

TEST_CASE("configuration is validated") {
  ServerConfig c;
  c.cores = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.cores = 8;
  c.policy = Policy::kSho;
  c.handoff = 8;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.handoff = 2;
  CHECK_NOTHROW(c.validate());
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(parse_policy("hkh-ws") == Policy::kHkhWs);
  CHECK(parse_policy("size-aware") == Policy::kSizeAware);
  CHECK_THROWS_AS(parse_policy("fifo"), std::invalid_argument);
}

TEST_CASE("TX buffer interleaves a long reply with short ones") {
  struct Capture : Transport {
    std::vector<Frame> sent;
    uint32_t queues() const override { return 1; }
    size_t receive(uint32_t, std::vector<Frame>&, size_t) override { return 0; }
    bool rx_maybe_nonempty(uint32_t) const override { return false; }
    void send(uint32_t, std::vector<Frame>& f) override {
      for (auto& x : f) sent.push_back(std::move(x));
      f.clear();
    }
  } cap;
  TxBuffer tx;
  std::vector<Frame> big(348);
  for (auto& f : big) f.client = 1;
  std::vector<Frame> small(1);
  small[0].client = 2;
  tx.add(std::move(big));
  tx.add(std::move(small));
  tx.flush(cap, 0);
  REQUIRE(cap.sent.size() == 349);
  CHECK(cap.sent[1].client == 2);
  CHECK(tx.empty());
}

TEST_CASE("size-aware: small fast path, routing totality and head-of-line freedom") {
  ServerConfig c;
  c.policy = Policy::kSizeAware;
  c.static_threshold = 1400;
  Fixture fx(c);
  std::mt19937_64 rng(1);
  Items items = preload(*fx.server, 2000, 20, rng);
  fx.server->controller().board().publish(plan_with(8, 6, 1400, {{1400, 30000}, {30000, 1 << 20}}));

  std::vector<SimArrival> arrivals;
  uint64_t id = 0;
  int64_t t = 0;
  for (int i = 0; i < 20000; ++i) {
    t += 200 + static_cast<int64_t>(rng() % 400);
    const size_t k = rng() % items.keys.size();
    const bool put = rng() % 10 == 0;
    auto frames = put ? put_frames(items.keys[k], value_of(k + 1, items.sizes[k]), id)
                      : get_frames(items.keys[k], id);
    const uint32_t q = put ? master_queue(*fx.server, items.keys[k])
                           : static_cast<uint32_t>(rng() % 8);
    for (auto& f : frames) arrivals.push_back({t, q, Frame{std::move(f), 0, 0}});
    ++id;
  }
  VectorSource src(std::move(arrivals));
  SimHarness h(*fx.server, *fx.transport);
  h.run(src);

  // Every request answered exactly once, and complete.
  for (uint64_t i = 0; i < id; ++i) REQUIRE(fx.replies.complete(i));
  CHECK(fx.replies.frames.size() == id);

  const auto services = fx.server->service_trace();
  CHECK(services.size() == id);
  size_t large_served = 0;
  for (const auto& s : services) {
    if (s.role == CoreRole::kSmall) CHECK(s.size <= s.threshold);
    if (s.size > 1400) {
      ++large_served;
      CHECK(s.from_software_queue);
      CHECK(s.role == CoreRole::kLarge);
      CHECK(((s.core == 6 && s.size <= 30000) || (s.core == 7 && s.size > 30000)));
    } else {
      CHECK(s.core < 6);
      CHECK_FALSE(s.from_software_queue);
    }
  }
  CHECK(large_served > 500);
  for (const auto& d : fx.server->dispatch_trace()) {
    CHECK(d.size > d.threshold);
    CHECK(d.target_role == CoreRole::kLarge);
  }
  // Large cores never read their own RX queue.
  const auto counters = fx.server->counters();
  CHECK(counters[6].rx_frames == 0);
  CHECK(counters[7].rx_frames == 0);
  CHECK(fx.server->store().stats().unstable_reads == 0);
}

TEST_CASE("size-aware GET replies are bit-exact") {
  ServerConfig c;
  Fixture fx(c);
  std::mt19937_64 rng(2);
  Items items = preload(*fx.server, 200, 4, rng);
  std::vector<SimArrival> arrivals;
  for (uint64_t i = 0; i < items.keys.size(); ++i) {
    arrivals.push_back({static_cast<int64_t>(i * 1000), static_cast<uint32_t>(i % 8),
                        Frame{get_frames(items.keys[i], i)[0], 0, 0}});
  }
  VectorSource src(std::move(arrivals));
  SimHarness(*fx.server, *fx.transport).run(src);
  for (uint64_t i = 0; i < items.keys.size(); ++i) {
    auto r = reassemble(fx.replies.frames.at(i));
    REQUIRE(r.status == ReassemblyStatus::kComplete);
    CHECK(r.value == value_of(i, items.sizes[i]));
  }
}

TEST_CASE("no request loss: every decoded request yields one reply or error") {
  ServerConfig c;
  Fixture fx(c);
  std::mt19937_64 rng(3);
  Items items = preload(*fx.server, 500, 25, rng);
  std::vector<SimArrival> arrivals;
  uint64_t id = 0;
  int64_t t = 0;
  std::set<uint64_t> expect_error;
  for (int i = 0; i < 3000; ++i) {
    t += 300;
    const int kind = static_cast<int>(rng() % 10);
    std::vector<std::vector<uint8_t>> frames;
    uint32_t q = static_cast<uint32_t>(rng() % 8);
    if (kind == 0) {
      frames = get_frames("missing-" + std::to_string(i), id);
      expect_error.insert(id);
    } else if (kind == 1) {
      const size_t size = 1 + rng() % 200000;
      frames = put_frames(key_of(100000 + i), value_of(i, size), id);
      q = master_queue(*fx.server, key_of(100000 + i));
      std::shuffle(frames.begin(), frames.end(), rng);
    } else {
      const size_t k = rng() % items.keys.size();
      frames = get_frames(items.keys[k], id);
    }
    for (auto& f : frames) arrivals.push_back({t, q, Frame{std::move(f), 0, 0}});
    ++id;
  }
  // Garbage datagrams are counted, never answered.
  arrivals.push_back({t + 1, 0, Frame{{1, 2, 3}, 0, 0}});
  VectorSource src(std::move(arrivals));
  SimHarness(*fx.server, *fx.transport).run(src);
  CHECK(fx.replies.frames.size() == id);
  for (uint64_t i = 0; i < id; ++i) {
    REQUIRE(fx.replies.complete(i));
    CHECK((fx.replies.opcode(i) == Opcode::kError) == (expect_error.count(i) == 1));
  }
  CHECK(fx.server->malformed() == 1);
  CHECK(fx.server->quiescent());
}

TEST_CASE("hkh: per-core service follows the client's queue choice") {
  ServerConfig c;
  c.policy = Policy::kHkh;
  std::mt19937_64 rng(4);

  SUBCASE("all traffic on one queue is served by one core") {
    Fixture fx(c);
    Items items = preload(*fx.server, 100, 0, rng);
    std::vector<SimArrival> arrivals;
    for (uint64_t i = 0; i < 1000; ++i) {
      arrivals.push_back({static_cast<int64_t>(i * 100), 3,
                          Frame{get_frames(items.keys[i % 100], i)[0], 0, 0}});
    }
    VectorSource src(std::move(arrivals));
    SimHarness(*fx.server, *fx.transport).run(src);
    auto counters = fx.server->counters();
    for (uint32_t core = 0; core < 8; ++core) CHECK(counters[core].ops == (core == 3 ? 1000u : 0u));
  }

  SUBCASE("uniform keyhashes balance and replays are deterministic") {
    std::vector<std::vector<uint32_t>> runs;
    for (int run = 0; run < 2; ++run) {
      Fixture fx(c);
      std::mt19937_64 r(5);
      Items items = preload(*fx.server, 20000, 0, r);
      std::vector<SimArrival> arrivals;
      for (uint64_t i = 0; i < 40000; ++i) {
        const auto& key = items.keys[r() % items.keys.size()];
        arrivals.push_back({static_cast<int64_t>(i * 150), master_queue(*fx.server, key),
                            Frame{get_frames(key, i)[0], 0, 0}});
      }
      VectorSource src(std::move(arrivals));
      SimHarness(*fx.server, *fx.transport).run(src);
      auto counters = fx.server->counters();
      for (const auto& k : counters) {
        CHECK(static_cast<double>(k.ops) == doctest::Approx(5000.0).epsilon(0.10));
      }
      std::vector<uint32_t> assignment(40000);
      for (const auto& s : fx.server->service_trace()) assignment[s.request_id] = s.core;
      runs.push_back(assignment);
    }
    CHECK(runs[0] == runs[1]);
  }
}

TEST_CASE("sho: FIFO with one worker and late binding") {
  ServerConfig c;
  c.policy = Policy::kSho;
  c.cores = 2;
  c.handoff = 1;
  Fixture fx(c);
  std::mt19937_64 rng(6);
  Items items = preload(*fx.server, 50, 5, rng);
  std::vector<SimArrival> arrivals;
  for (uint64_t i = 0; i < 2000; ++i) {
    arrivals.push_back({static_cast<int64_t>(i * 700), 0,
                        Frame{get_frames(items.keys[i % 50], i)[0], 0, 0}});
  }
  VectorSource src(std::move(arrivals));
  SimHarness(*fx.server, *fx.transport).run(src);
  const auto services = fx.server->service_trace();
  REQUIRE(services.size() == 2000);
  for (size_t i = 0; i < services.size(); ++i) {
    CHECK(services[i].core == 1);
    CHECK(services[i].request_id == i);
  }

  SUBCASE("an idle worker implies empty handoff queues") {
    ServerConfig c3;
    c3.policy = Policy::kSho;
    c3.cores = 5;
    c3.handoff = 2;
    Fixture fy(c3);
    Items it = preload(*fy.server, 50, 0, rng);
    int64_t now = 0;
    for (uint64_t i = 0; i < 400; ++i) {
      fy.transport->deliver(static_cast<uint32_t>(i % 2), Frame{get_frames(it.keys[i % 50], i)[0], 0, 0});
    }
    int idle_checks = 0;
    for (int round = 0; round < 2000; ++round) {
      for (uint32_t core = 0; core < 5; ++core) {
        const int64_t e = fy.server->step(core, now);
        if (core >= 2 && e == 0) {
          ++idle_checks;
          // Nothing staged may wait while a worker idles.
          CHECK((fy.server->quiescent() || fy.transport->rx_depth(0) + fy.transport->rx_depth(1) > 0));
        }
      }
      now += 1000;
    }
    CHECK(idle_checks > 0);
    CHECK(fy.replies.frames.size() == 400);
  }
}

TEST_CASE("hkh-ws: stealing audits") {
  ServerConfig c;
  c.policy = Policy::kHkhWs;
  std::mt19937_64 rng(7);

  SUBCASE("one hot queue: other cores steal, software steals are single requests") {
    Fixture fx(c);
    Items items = preload(*fx.server, 100, 10, rng);
    std::vector<SimArrival> arrivals;
    for (uint64_t i = 0; i < 5000; ++i) {
      arrivals.push_back({static_cast<int64_t>(i * 250), 0,
                          Frame{get_frames(items.keys[i % 100], i)[0], 0, 0}});
    }
    VectorSource src(std::move(arrivals));
    SimHarness(*fx.server, *fx.transport).run(src);
    CHECK(fx.replies.frames.size() == 5000);
    const auto steals = fx.server->steal_trace();
    CHECK(!steals.empty());
    std::set<uint32_t> stealers;
    for (const auto& s : steals) {
      CHECK(s.stealer != s.victim);
      CHECK_FALSE(s.stealer_had_work);
      if (!s.from_rx) CHECK(s.count == 1);
      stealers.insert(s.stealer);
    }
    CHECK(stealers.size() > 1);
    std::set<uint32_t> servers;
    for (const auto& s : fx.server->service_trace()) servers.insert(s.core);
    CHECK(servers.size() > 1);
  }

  SUBCASE("saturated cores never steal") {
    Fixture fx(c);
    Items items = preload(*fx.server, 100, 0, rng);
    for (uint64_t i = 0; i < 8 * 200; ++i) {
      fx.transport->deliver(static_cast<uint32_t>(i % 8), Frame{get_frames(items.keys[i % 100], i)[0], 0, 0});
    }
    // Every core has its own backlog for the first 150 rounds.
    for (int round = 0; round < 150; ++round) {
      for (uint32_t core = 0; core < 8; ++core) fx.server->step(core, round * 1000);
    }
    CHECK(fx.server->steal_trace().empty());
  }
}

TEST_CASE("plan changes: versioned routing and draining demoted cores") {
  ServerConfig c;
  c.policy = Policy::kSizeAware;
  c.static_threshold = 1400;
  Fixture fx(c);
  std::mt19937_64 rng(8);
  Items items = preload(*fx.server, 1000, 4, rng);
  auto& board = fx.server->controller().board();
  const uint64_t v1 = board.publish(plan_with(8, 7, 1400, {{1400, 1 << 20}})).version;

  auto feed = [&](uint64_t first, uint64_t count, int64_t t0) {
    std::vector<SimArrival> a;
    for (uint64_t i = first; i < first + count; ++i) {
      a.push_back({t0 + static_cast<int64_t>((i - first) * 150), static_cast<uint32_t>(rng() % 8),
                   Frame{get_frames(items.keys[rng() % items.keys.size()], i)[0], 0, 0}});
    }
    return a;
  };

  // Phase 1 under n_l = 1, then n_l = 2 (core 6 promoted), then n_l = 1 with
  // core 7 demoted while its queue still holds work.
  VectorSource p1(feed(0, 3000, 0));
  SimHarness h(*fx.server, *fx.transport);
  int64_t t = h.run(p1);
  const uint64_t v2 = board.publish(plan_with(8, 6, 1400, {{1400, 30000}, {30000, 1 << 20}})).version;
  VectorSource p2(feed(3000, 3000, t + 1000));
  t = SimHarness(*fx.server, *fx.transport).run(p2);

  // Stage large work on core 7's queue, then demote it.
  for (uint64_t i = 0; i < 200; ++i) {
    fx.transport->deliver(0, Frame{get_frames(items.keys[(i * 4) % items.keys.size()], 6000 + i)[0], 0, 0});
  }
  for (int i = 0; i < 10; ++i) fx.server->step(0, t + i);
  const uint64_t v3 = board.publish(plan_with(8, 8, 1400, {})).version;
  VectorSource p3(feed(6200, 3000, t + 100000));
  SimHarness(*fx.server, *fx.transport).run(p3);

  for (uint64_t i = 0; i < 9200; ++i) REQUIRE(fx.replies.complete(i));
  const auto services = fx.server->service_trace();
  bool core6_large_after = false;
  std::map<uint32_t, bool> served_small_since_demotion;
  size_t transitions = 0;
  for (const auto& s : services) {
    if (s.core == 6 && s.role == CoreRole::kLarge) {
      // The promoted core serves only requests routed under a plan naming it.
      CHECK(s.routed_version >= v2);
      CHECK(s.routed_version < v3);
      core6_large_after = true;
    }
    if (s.plan_version >= v3) {
      if (s.transition) {
        ++transitions;
        CHECK_FALSE(served_small_since_demotion[s.core]);
      } else {
        served_small_since_demotion[s.core] = true;
      }
    }
    CHECK(s.routed_version >= v1);
  }
  CHECK(core6_large_after);
  CHECK(transitions > 0);
}

TEST_CASE("equal plans leave service unchanged") {
  auto run = [](bool republish) {
    ServerConfig c;
    c.static_threshold = 1400;
    Fixture fx(c);
    std::mt19937_64 rng(9);
    Items items = preload(*fx.server, 500, 10, rng);
    const ShardPlan p = plan_with(8, 7, 1400, {{1400, 1 << 20}});
    fx.server->controller().board().publish(p);
    std::vector<SimArrival> a;
    for (uint64_t i = 0; i < 4000; ++i) {
      a.push_back({static_cast<int64_t>(i * 200), static_cast<uint32_t>(rng() % 8),
                   Frame{get_frames(items.keys[rng() % 500], i)[0], 0, 0}});
    }
    VectorSource src(std::move(a));
    SimHarness h(*fx.server, *fx.transport);
    if (republish) fx.server->controller().board().publish(p);
    h.run(src);
    std::vector<std::pair<uint32_t, int64_t>> out;
    for (const auto& s : fx.server->service_trace()) out.emplace_back(s.core, s.time);
    return out;
  };
  CHECK(run(false) == run(true));
}

TEST_CASE("drain fairness with every RX queue backlogged") {
  ServerConfig c;
  c.static_threshold = 1400;
  c.rx_capacity = 1 << 16;
  Fixture fx(c);
  std::mt19937_64 rng(10);
  Items items = preload(*fx.server, 100, 0, rng);
  fx.server->controller().board().publish(plan_with(8, 6, 1400, {{1400, 30000}, {30000, 1 << 20}}));
  const size_t per_queue = 60000;
  for (uint32_t q = 0; q < 8; ++q) {
    for (size_t i = 0; i < per_queue; ++i) {
      fx.transport->deliver(q, Frame{get_frames(items.keys[i % 100], q * per_queue + i)[0], 0, 0});
    }
  }
  // 1000 batches per small core, all queues still backlogged at the end.
  for (int round = 0; round < 1000; ++round) {
    for (uint32_t core = 0; core < 8; ++core) fx.server->step(core, round * 100000);
  }
  std::vector<double> consumed;
  for (uint32_t q = 0; q < 8; ++q) {
    REQUIRE(fx.transport->rx_depth(q) > 0);
    consumed.push_back(static_cast<double>(per_queue - fx.transport->rx_depth(q)));
  }
  const double mx = *std::max_element(consumed.begin(), consumed.end());
  const double mn = *std::min_element(consumed.begin(), consumed.end());
  CHECK(mx <= 1.5 * mn);
}

TEST_CASE("equal-sized items: size-aware and hkh serve the same requests") {
  auto run = [](Policy p) {
    ServerConfig c;
    c.policy = p;
    Fixture fx(c);
    std::mt19937_64 rng(11);
    std::vector<std::string> keys;
    for (uint64_t i = 0; i < 300; ++i) {
      keys.push_back(key_of(i));
      fx.server->preload(keys.back(), value_of(i, 100));
    }
    std::vector<SimArrival> a;
    for (uint64_t i = 0; i < 5000; ++i) {
      const auto& k = keys[rng() % keys.size()];
      a.push_back({static_cast<int64_t>(i * 200), master_queue(*fx.server, k),
                   Frame{get_frames(k, i)[0], 0, 0}});
    }
    VectorSource src(std::move(a));
    SimHarness(*fx.server, *fx.transport).run(src);
    std::map<uint64_t, std::vector<uint8_t>> out;
    for (auto& [id, frames] : fx.replies.frames) out[id] = reassemble(frames).value;
    return out;
  };
  auto a = run(Policy::kSizeAware);
  auto b = run(Policy::kHkh);
  CHECK(a.size() == 5000);
  CHECK(a == b);
}

TEST_CASE("threaded cores answer concurrent clients") {
  ServerConfig c;
  InprocTransport transport(c.cores, c.rx_capacity);
  Server server(c, transport);
  std::mt19937_64 rng(12);
  Items items = preload(server, 200, 10, rng);
  std::mutex mu;
  std::map<uint64_t, std::vector<std::vector<uint8_t>>> frames;
  transport.set_sink([&](uint32_t, Frame&& f) {
    DecodedMessage m;
    decode(f.data, m);
    std::lock_guard lock(mu);
    frames[m.header.request_id].push_back(std::move(f.data));
  });
  server.start();
  for (uint64_t i = 0; i < 2000; ++i) {
    auto fr = get_frames(items.keys[i % 200], i)[0];
    while (!transport.deliver(static_cast<uint32_t>(i % 8), Frame{fr, 0, 0})) std::this_thread::yield();
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  for (;;) {
    size_t done = 0;
    {
      std::lock_guard lock(mu);
      for (auto& [id, f] : frames) {
        DecodedMessage m;
        decode(f.front(), m);
        done += f.size() == m.header.frag_count;
      }
    }
    if (done == 2000 || std::chrono::steady_clock::now() > deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  server.stop();
  REQUIRE(frames.size() == 2000);
  for (uint64_t i = 0; i < 2000; ++i) {
    CHECK(reassemble(frames[i]).value == value_of(i % 200, items.sizes[i % 200]));
  }
}

TEST_CASE("udp transport round trip") {
  ServerConfig c;
  c.cores = 2;
  const uint16_t base = static_cast<uint16_t>(42000 + (std::random_device{}() % 2000) * 2);
  std::unique_ptr<UdpTransport> transport;
  try {
    transport = std::make_unique<UdpTransport>("127.0.0.1", base, 2);
  } catch (const std::exception& e) {
    MESSAGE("udp unavailable: " << e.what());
    return;
  }
  Server server(c, *transport);
  server.preload(key_of(1), value_of(1, 5000));
  server.start();
  UdpClient client("127.0.0.1", base);
  for (auto& f : get_frames(key_of(1), 77)) CHECK(client.send(1, f));
  std::vector<std::vector<uint8_t>> got;
  std::vector<uint8_t> buf;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (got.size() < fragment_count(5000) && std::chrono::steady_clock::now() < deadline) {
    if (client.receive(buf, 10000)) got.push_back(buf);
  }
  server.stop();
  auto r = reassemble(got);
  REQUIRE(r.status == ReassemblyStatus::kComplete);
  CHECK(r.value == value_of(1, 5000));
}
