#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "minos/loadgen.hpp"

namespace minos {

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::kSim: return "sim";
    case Backend::kInproc: return "inproc";
    case Backend::kUdp: return "udp";
  }
  return "?";
}

Backend parse_backend(std::string_view s) {
  if (s == "sim") return Backend::kSim;
  if (s == "inproc") return Backend::kInproc;
  if (s == "udp") return Backend::kUdp;
  throw std::invalid_argument("unknown backend '" + std::string(s) +
                              "' (expected sim, inproc or udp)");
}

void preload(Server& server, const Keyspace& keys) {
  std::vector<uint8_t> value;
  for (uint64_t i = 0; i < keys.size(); ++i) {
    value.resize(keys.value_size(i));
    Keyspace::fill_value(i, 0, value);
    const StoreStatus st = server.preload(keys.key(i), value);
    if (st != StoreStatus::kOk) {
      throw std::runtime_error(std::string("preload failed: ") + to_string(st));
    }
  }
}

namespace {

using Clock = std::chrono::steady_clock;

int64_t since(Clock::time_point origin) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - origin).count();
}

/// Request frames plus what the client needs to match replies.
struct Encoded {
  std::vector<std::vector<uint8_t>> frames;
  uint32_t queue = 0;
};

/// Builds the frames of one request.
class Encoder {
 public:
  Encoder(const Keyspace& keys, const QueueChooser& chooser, size_t mtu)
      : keys_(keys), chooser_(chooser), mtu_(mtu) {}

  Encoded encode(const GeneratedRequest& g, uint64_t id, uint64_t ts, std::mt19937_64& rng) {
    Encoded e;
    const std::string key = keys_.key(g.key_index);
    const KeyHash hash = hash_key(key);
    MessageHeader h;
    h.opcode = g.op;
    h.request_id = id;
    h.client_timestamp = ts;
    h.keyhash = hash.value();
    h.key_len = static_cast<uint16_t>(key.size());
    if (g.op == Opcode::kGet) {
      e.frames.push_back(minos::encode(h, key, {}, mtu_));
    } else {
      value_.resize(g.size);
      Keyspace::fill_value(g.key_index, id + 1, value_);
      e.frames = encode_message(h, key, value_, mtu_);
    }
    e.queue = chooser_(g.op, hash, rng);
    return e;
  }

 private:
  const Keyspace& keys_;
  const QueueChooser& chooser_;
  size_t mtu_;
  std::vector<uint8_t> value_;
};

struct Window {
  double lo_ns;
  double hi_ns;
  bool contains(double t) const { return t >= lo_ns && t < hi_ns; }
};

Window window_of(const WorkloadSpec& spec) {
  return {spec.warmup_s * 1e9, (spec.duration_s - spec.cooldown_s) * 1e9};
}

void record(RunResult& r, bool large, uint64_t latency) {
  r.all.record(latency);
  (large ? r.large : r.small).record(latency);
}

double mean_service(const std::vector<CoreSnapshot>& cores) {
  uint64_t busy = 0;
  uint64_t ops = 0;
  for (const CoreSnapshot& c : cores) {
    busy += c.busy_ns;
    ops += c.ops;
  }
  return ops ? static_cast<double>(busy) / static_cast<double>(ops) : 0.0;
}

// Virtual-time backend ------------------------------------------------------

struct SimPending {
  int64_t sent = 0;
  uint16_t got = 0;
  bool large = false;
  bool done = false;
};

class ClientSource : public ArrivalSource {
 public:
  ClientSource(const WorkloadSpec& spec, const Keyspace& keys, const QueueChooser& chooser,
               size_t mtu, std::vector<SimPending>& pending)
      : spec_(spec), encoder_(keys, chooser, mtu), pending_(pending) {
    end_ns_ = spec.duration_s * 1e9;
    for (uint32_t t = 0; t < spec.threads; ++t) {
      streams_.push_back({RequestGenerator(spec, keys, spec.seed * 1000003 + t), 0.0});
      streams_.back().next_ns = streams_.back().gen.next_gap_ns(spec.rate / spec.threads);
    }
  }

  std::optional<int64_t> peek_time() override {
    if (!buffered_.empty()) return buffered_.front().time;
    const Stream* s = earliest();
    if (!s || s->next_ns >= end_ns_) return std::nullopt;
    return static_cast<int64_t>(s->next_ns);
  }

  SimArrival next() override {
    if (buffered_.empty()) generate();
    SimArrival a = std::move(buffered_.front());
    buffered_.pop_front();
    return a;
  }

  uint64_t sent() const { return pending_.size(); }

 private:
  struct Stream {
    RequestGenerator gen;
    double next_ns;
  };

  Stream* earliest() {
    Stream* best = nullptr;
    for (Stream& s : streams_) {
      if (!best || s.next_ns < best->next_ns) best = &s;
    }
    return best;
  }

  void generate() {
    Stream& s = *earliest();
    const int64_t t = static_cast<int64_t>(s.next_ns);
    const GeneratedRequest g = s.gen.next(spec_.p_large_at(s.next_ns / 1e9));
    const uint64_t id = pending_.size();
    Encoded e = encoder_.encode(g, id, static_cast<uint64_t>(t), s.gen.rng());
    pending_.push_back({t, 0, g.large, false});
    for (auto& f : e.frames) {
      SimArrival a;
      a.time = t;
      a.queue = e.queue;
      a.frame.data = std::move(f);
      a.frame.client = 0;
      buffered_.push_back(std::move(a));
    }
    s.next_ns += s.gen.next_gap_ns(spec_.rate / spec_.threads);
  }

  const WorkloadSpec& spec_;
  Encoder encoder_;
  std::vector<SimPending>& pending_;
  std::vector<Stream> streams_;
  std::deque<SimArrival> buffered_;
  double end_ns_;
};

/// Seeds the controller with the request mix of the first second so a
/// virtual-time run starts from a plan fitted to its workload.
void prime_controller(Server& server, const WorkloadSpec& spec, const Keyspace& keys) {
  if (server.config().policy != Policy::kSizeAware || server.config().static_threshold) return;
  RequestGenerator gen(spec, keys, spec.seed ^ 0x7072696d65ULL);
  SizeHistogram h;
  const double p = spec.p_large_at(0.0);
  for (int i = 0; i < 200'000; ++i) h.record(gen.next(p).size);
  server.controller().control_epoch(h, 0);
}

RunResult run_sim(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config) {
  RunResult r;
  ServerConfig sc = config.server;
  InprocTransport transport(sc.cores, sc.rx_capacity);
  Server server(sc, transport);
  preload(server, keys);
  prime_controller(server, spec, keys);

  std::vector<SimPending> pending;
  pending.reserve(static_cast<size_t>(spec.rate * spec.duration_s * 1.1) + 1024);
  const Window win = window_of(spec);
  int64_t last_completion = 0;
  transport.set_sink([&](uint32_t, Frame&& f) {
    DecodedMessage m;
    if (decode(f.data, m) != CodecStatus::kOk || m.header.request_id >= pending.size()) return;
    SimPending& p = pending[m.header.request_id];
    if (p.done) return;
    const bool error = m.header.opcode == Opcode::kError;
    if (!error && ++p.got < m.header.frag_count) return;
    p.done = true;
    ++r.completed;
    if (error) ++r.errors;
    last_completion = std::max(last_completion, f.stamp);
    if (win.contains(static_cast<double>(p.sent))) {
      record(r, p.large, static_cast<uint64_t>(f.stamp - p.sent));
    }
  });

  QueueChooser chooser(sc.policy, sc.cores, sc.handoff, sc.store.partitions);
  ClientSource source(spec, keys, chooser, sc.mtu_payload, pending);
  SimOptions opt;
  opt.drain_limit_ns = static_cast<int64_t>(std::max(config.drain_s, spec.duration_s * 20) * 1e9);
  SimHarness harness(server, transport, opt);
  const int64_t end = harness.run(source);
  server.close_epoch(end);

  r.sent = source.sent();
  r.lost = r.sent - r.completed;
  r.backpressure = harness.backpressure_events();
  r.offered_rate = spec.rate;
  r.elapsed_s = static_cast<double>(std::max(end, last_completion)) / 1e9;
  r.achieved_rate = static_cast<double>(r.completed) /
                    std::max(spec.duration_s, static_cast<double>(last_completion) / 1e9);
  r.per_core = server.counters();
  r.mean_service_ns = mean_service(r.per_core);
  if (config.inspect) config.inspect(server);
  return r;
}

// Threaded in-process backend ----------------------------------------------

struct LivePending {
  std::atomic<int64_t> sent{0};
  std::atomic<uint32_t> got{0};
  uint32_t thread = 0;
  bool large = false;
};

RunResult run_inproc(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config) {
  RunResult r;
  ServerConfig sc = config.server;
  InprocTransport transport(sc.cores, sc.rx_capacity);
  Server server(sc, transport);
  preload(server, keys);

  const size_t cap = static_cast<size_t>(spec.rate * spec.duration_s * 1.5) + 4096;
  std::vector<LivePending> pending(cap);
  std::atomic<uint64_t> next_id{0};
  std::vector<std::atomic<int64_t>> outstanding(spec.threads);
  const Window win = window_of(spec);
  const auto origin = Clock::now();

  struct Shard {
    RunResult part;
  };
  std::vector<Shard> shards(sc.cores);
  transport.set_sink([&](uint32_t core, Frame&& f) {
    DecodedMessage m;
    if (decode(f.data, m) != CodecStatus::kOk || m.header.request_id >= cap) return;
    LivePending& p = pending[m.header.request_id];
    const bool error = m.header.opcode == Opcode::kError;
    const uint32_t got = p.got.fetch_add(1, std::memory_order_acq_rel) + 1;
    if (!error && got != m.header.frag_count) return;
    RunResult& part = shards[core].part;
    ++part.completed;
    if (error) ++part.errors;
    outstanding[p.thread].fetch_sub(1, std::memory_order_relaxed);
    const int64_t sent = p.sent.load(std::memory_order_relaxed);
    const int64_t now = since(origin);
    part.elapsed_s = std::max(part.elapsed_s, static_cast<double>(now) / 1e9);
    if (win.contains(static_cast<double>(sent))) record(part, p.large, static_cast<uint64_t>(now - sent));
  });
  server.start();

  QueueChooser chooser(sc.policy, sc.cores, sc.handoff, sc.store.partitions);
  std::vector<RunResult> client_parts(spec.threads);
  std::vector<std::thread> clients;
  for (uint32_t t = 0; t < spec.threads; ++t) {
    clients.emplace_back([&, t] {
      RunResult& part = client_parts[t];
      RequestGenerator gen(spec, keys, spec.seed * 1000003 + t);
      Encoder encoder(keys, chooser, sc.mtu_payload);
      const double end_ns = spec.duration_s * 1e9;
      double next = gen.next_gap_ns(spec.rate / spec.threads);
      while (next < end_ns) {
        while (static_cast<double>(since(origin)) < next) std::this_thread::yield();
        if (outstanding[t].load(std::memory_order_relaxed) >=
            static_cast<int64_t>(config.inflight_cap)) {
          ++part.throttled;
          next += gen.next_gap_ns(spec.rate / spec.threads);
          continue;
        }
        const uint64_t id = next_id.fetch_add(1);
        if (id >= cap) break;
        const GeneratedRequest g = gen.next(spec.p_large_at(next / 1e9));
        const int64_t now = since(origin);
        LivePending& p = pending[id];
        p.thread = t;
        p.large = g.large;
        p.sent.store(now, std::memory_order_relaxed);
        Encoded e = encoder.encode(g, id, static_cast<uint64_t>(now), gen.rng());
        outstanding[t].fetch_add(1, std::memory_order_relaxed);
        ++part.sent;
        for (auto& bytes : e.frames) {
          Frame f;
          f.data = std::move(bytes);
          while (!transport.deliver(e.queue, std::move(f))) {
            ++part.backpressure;
            std::this_thread::yield();
          }
        }
        next += gen.next_gap_ns(spec.rate / spec.threads);
      }
    });
  }
  for (auto& c : clients) c.join();

  auto total_completed = [&] {
    uint64_t done = 0;
    for (uint32_t t = 0; t < spec.threads; ++t) {
      done += client_parts[t].sent - static_cast<uint64_t>(std::max<int64_t>(outstanding[t].load(), 0));
    }
    return done;
  };
  uint64_t sent = 0;
  for (const auto& p : client_parts) sent += p.sent;
  const auto drain_until = Clock::now() + std::chrono::duration<double>(config.drain_s);
  while (total_completed() < sent && Clock::now() < drain_until) std::this_thread::yield();
  server.stop();
  server.close_epoch(since(origin));

  for (const auto& p : client_parts) {
    r.sent += p.sent;
    r.throttled += p.throttled;
    r.backpressure += p.backpressure;
  }
  for (const auto& s : shards) {
    r.completed += s.part.completed;
    r.errors += s.part.errors;
    r.all.merge(s.part.all);
    r.small.merge(s.part.small);
    r.large.merge(s.part.large);
    r.elapsed_s = std::max(r.elapsed_s, s.part.elapsed_s);
  }
  r.lost = r.sent - std::min(r.sent, r.completed);
  r.offered_rate = spec.rate;
  r.achieved_rate = static_cast<double>(r.completed) / std::max(spec.duration_s, r.elapsed_s);
  r.per_core = server.counters();
  r.mean_service_ns = mean_service(r.per_core);
  if (config.inspect) config.inspect(server);
  return r;
}

// UDP backend ---------------------------------------------------------------

RunResult run_udp(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config) {
  const ServerConfig& sc = config.server;
  QueueChooser chooser(sc.policy, sc.cores, sc.handoff, sc.store.partitions);
  const Window win = window_of(spec);
  const auto origin = Clock::now();
  std::vector<RunResult> parts(spec.threads);
  std::vector<std::string> failures(spec.threads);

  std::vector<std::thread> clients;
  for (uint32_t t = 0; t < spec.threads; ++t) {
    clients.emplace_back([&, t] {
      RunResult& part = parts[t];
      try {
        UdpClient sock(config.host, config.port_base);
        RequestGenerator gen(spec, keys, spec.seed * 1000003 + t);
        Encoder encoder(keys, chooser, sc.mtu_payload);
        struct Pending {
          int64_t sent;
          uint32_t got;
          bool large;
        };
        std::unordered_map<uint64_t, Pending> pending;
        std::vector<uint8_t> buf;
        auto poll_replies = [&](int timeout_us) {
          while (sock.receive(buf, timeout_us)) {
            timeout_us = 0;
            DecodedMessage m;
            if (decode(buf, m) != CodecStatus::kOk) continue;
            auto it = pending.find(m.header.request_id);
            if (it == pending.end()) continue;
            const bool error = m.header.opcode == Opcode::kError;
            if (!error && ++it->second.got < m.header.frag_count) continue;
            const int64_t now = since(origin);
            ++part.completed;
            if (error) ++part.errors;
            part.elapsed_s = std::max(part.elapsed_s, static_cast<double>(now) / 1e9);
            if (win.contains(static_cast<double>(it->second.sent))) {
              record(part, it->second.large, static_cast<uint64_t>(now - it->second.sent));
            }
            pending.erase(it);
          }
        };
        const double end_ns = spec.duration_s * 1e9;
        double next = gen.next_gap_ns(spec.rate / spec.threads);
        uint64_t seq = 0;
        while (next < end_ns) {
          while (static_cast<double>(since(origin)) < next) poll_replies(0);
          if (pending.size() >= config.inflight_cap) {
            ++part.throttled;
            next += gen.next_gap_ns(spec.rate / spec.threads);
            continue;
          }
          const GeneratedRequest g = gen.next(spec.p_large_at(next / 1e9));
          const uint64_t id = (static_cast<uint64_t>(t) << 40) | seq++;
          const int64_t now = since(origin);
          Encoded e = encoder.encode(g, id, static_cast<uint64_t>(now), gen.rng());
          pending[id] = {now, 0, g.large};
          ++part.sent;
          for (auto& bytes : e.frames) {
            if (!sock.send(e.queue, bytes)) throw std::runtime_error("send failed");
          }
          next += gen.next_gap_ns(spec.rate / spec.threads);
        }
        const auto drain_until = Clock::now() + std::chrono::duration<double>(config.drain_s);
        while (!pending.empty() && Clock::now() < drain_until) poll_replies(1000);
      } catch (const std::exception& e) {
        failures[t] = e.what();
      }
    });
  }
  for (auto& c : clients) c.join();
  for (const auto& f : failures) {
    if (!f.empty()) {
      throw std::runtime_error("endpoint " + config.host + ":" + std::to_string(config.port_base) +
                               " unreachable: " + f);
    }
  }

  RunResult r;
  for (const auto& p : parts) {
    r.sent += p.sent;
    r.completed += p.completed;
    r.errors += p.errors;
    r.throttled += p.throttled;
    r.all.merge(p.all);
    r.small.merge(p.small);
    r.large.merge(p.large);
    r.elapsed_s = std::max(r.elapsed_s, p.elapsed_s);
  }
  if (r.sent > 0 && r.completed == 0) {
    throw std::runtime_error("endpoint " + config.host + ":" + std::to_string(config.port_base) +
                             " unreachable: no replies");
  }
  r.lost = r.sent - r.completed;
  r.offered_rate = spec.rate;
  r.achieved_rate = static_cast<double>(r.completed) / std::max(spec.duration_s, r.elapsed_s);
  return r;
}

}  // namespace

RunResult run_open_loop(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config) {
  spec.validate();
  config.server.validate();
  switch (config.backend) {
    case Backend::kSim: return run_sim(spec, keys, config);
    case Backend::kInproc: return run_inproc(spec, keys, config);
    case Backend::kUdp: return run_udp(spec, keys, config);
  }
  return {};
}

namespace {

CurvePoint to_point(const RunResult& r) {
  CurvePoint p;
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
  return p;
}

class PointCache {
 public:
  PointCache(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config)
      : spec_(spec), keys_(keys), config_(config) {}

  const CurvePoint& at(double rate) {
    auto it = points_.find(rate);
    if (it != points_.end()) return it->second;
    WorkloadSpec s = spec_;
    s.rate = rate;
    return points_.emplace(rate, to_point(run_open_loop(s, keys_, config_))).first->second;
  }
  bool good(double rate) {
    const CurvePoint& p = at(rate);
    return p.valid && !p.saturated;
  }
  const std::map<double, CurvePoint>& points() const { return points_; }

 private:
  const WorkloadSpec& spec_;
  const Keyspace& keys_;
  const BenchConfig& config_;
  std::map<double, CurvePoint> points_;
};

double saturation_search(PointCache& cache, double start, int iterations) {
  double good = 0.0;
  double bad = start;
  for (int i = 0; i < 20 && cache.good(bad); ++i) {
    good = bad;
    bad *= 2.0;
  }
  if (good == 0.0) {
    for (int i = 0; i < 20 && !cache.good(good = bad / 2.0); ++i) bad = good;
    if (!cache.good(good)) return 0.0;
  }
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (good + bad);
    (cache.good(mid) ? good : bad) = mid;
  }
  return good;
}

}  // namespace

double find_saturation(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config,
                       double start_rate, int iterations) {
  PointCache cache(spec, keys, config);
  return saturation_search(cache, start_rate, iterations);
}

SloSweep sweep_slo(const WorkloadSpec& spec, const Keyspace& keys, const BenchConfig& config,
                   const std::vector<double>& slo_ns, double start_rate, int iterations) {
  SloSweep out;
  PointCache cache(spec, keys, config);
  out.saturation = saturation_search(cache, start_rate, iterations + 4);
  auto meets = [&](double rate, double slo) {
    const CurvePoint& p = cache.at(rate);
    return p.valid && !p.saturated && static_cast<double>(p.p99_ns) <= slo;
  };
  if (out.saturation > 0.0) {
    for (double slo : slo_ns) {
      if (std::isinf(slo) || meets(out.saturation, slo)) continue;
      double lo = 0.0;
      double hi = out.saturation;
      for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo + hi);
        (meets(mid, slo) ? lo : hi) = mid;
      }
    }
  }
  for (const auto& [rate, p] : cache.points()) out.curve.push_back(p);
  for (double slo : slo_ns) {
    SloResult res;
    res.slo_ns = slo;
    for (const auto& [rate, p] : cache.points()) {
      if (p.valid && !p.saturated && rate <= out.saturation &&
          static_cast<double>(p.p99_ns) <= slo && rate >= res.max_rate) {
        res.max_rate = rate;
        res.p99_ns = p.p99_ns;
      }
    }
    out.slo.push_back(res);
  }
  return out;
}

void write_curve_csv_header(std::ostream& os) {
  os << "policy,offered,achieved,mean_ns,p50_ns,p99_ns,p999_ns,p99_small_ns,p99_large_ns,valid,"
        "saturated\n";
}

void write_curve_csv(std::ostream& os, std::string_view policy, const CurvePoint& p) {
  os << policy << ',' << p.offered << ',' << p.achieved << ',' << p.mean_ns << ',' << p.p50_ns
     << ',' << p.p99_ns << ',' << p.p999_ns << ',' << p.p99_small_ns << ',' << p.p99_large_ns
     << ',' << (p.valid ? 1 : 0) << ',' << (p.saturated ? 1 : 0) << '\n';
}

}  // namespace minos
