#include <algorithm>
#include <chrono>
#include <random>
#include <stdexcept>

#include "minos/runtime.hpp"

namespace minos {

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::kSizeAware: return "size-aware";
    case Policy::kHkh: return "hkh";
    case Policy::kSho: return "sho";
    case Policy::kHkhWs: return "hkh-ws";
  }
  return "?";
}

Policy parse_policy(std::string_view s) {
  if (s == "size-aware" || s == "SIZE_AWARE" || s == "minos") return Policy::kSizeAware;
  if (s == "hkh" || s == "HKH") return Policy::kHkh;
  if (s == "sho" || s == "SHO") return Policy::kSho;
  if (s == "hkh-ws" || s == "HKH_WS" || s == "hkh+ws") return Policy::kHkhWs;
  throw std::invalid_argument("unknown policy '" + std::string(s) +
                              "' (expected size-aware, hkh, sho or hkh-ws)");
}

void ServerConfig::validate() const {
  if (cores < 2 || cores > 64) throw std::invalid_argument("--cores must lie in [2, 64]");
  if (batch == 0) throw std::invalid_argument("--batch must be positive");
  if (policy == Policy::kSho && (handoff == 0 || handoff >= cores)) {
    throw std::invalid_argument("--handoff must lie in [1, cores - 1] for sho");
  }
  if (epoch_ns <= 0) throw std::invalid_argument("--epoch-ms must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("--alpha must lie in [0, 1]");
  if (mtu_payload == 0) throw std::invalid_argument("MTU payload must be positive");
}

void TxBuffer::add(std::vector<Frame> message) {
  if (!message.empty()) pending_.push_back(std::move(message));
}

void TxBuffer::flush(Transport& transport, uint32_t core) {
  if (pending_.empty()) return;
  out_.clear();
  std::vector<size_t> next(pending_.size(), 0);
  size_t remaining = pending_.size();
  while (remaining > 0) {
    for (size_t m = 0; m < pending_.size(); ++m) {
      if (next[m] == pending_[m].size()) continue;
      out_.push_back(std::move(pending_[m][next[m]++]));
      if (next[m] == pending_[m].size()) --remaining;
    }
  }
  pending_.clear();
  transport.send(core, out_);
  out_.clear();
}

struct Server::Core {
  CoreCounters counters;
  TxBuffer tx;
  std::vector<Frame> frames;
  std::deque<std::pair<uint32_t, Request>> stalled;
  std::vector<uint8_t> value_buf;
  uint32_t rr = 0;
  std::mt19937_64 rng;
  std::vector<ServiceRecord> services;
  std::vector<DispatchRecord> dispatches;
  std::vector<StealRecord> steals;
};

struct Server::Ctx {
  uint32_t core;
  Core& c;
  int64_t start;
  int64_t t;
  const ShardPlan* plan;
  CoreRole role;
  bool worked = false;
  int64_t busy = 0;

  void charge(int64_t ns) {
    t += ns;
    busy += ns;
    worked = true;
  }
  void wait_until(int64_t stamp) {
    if (stamp > t) t = stamp;
    worked = true;
  }
};

namespace {

ControllerConfig controller_config(const ServerConfig& c) {
  ControllerConfig cc;
  cc.cores = c.cores;
  cc.alpha = c.alpha;
  cc.static_threshold = c.static_threshold;
  cc.max_item_size = c.store.max_value_size;
  cc.mtu_payload = c.mtu_payload;
  return cc;
}

uint64_t reassembly_key(uint64_t client, uint64_t request_id) {
  return client * 0x9e3779b97f4a7c15ULL ^ request_id;
}

std::vector<uint8_t> copy_bytes(std::span<const uint8_t> s) { return {s.begin(), s.end()}; }

}  // namespace

Server::Server(const ServerConfig& config, Transport& transport)
    : config_(config),
      transport_(transport),
      controller_(controller_config(config)),
      reassembly_(64),
      hists_(config.cores) {
  config_.validate();
  if (transport_.queues() < config_.cores) {
    throw std::invalid_argument("transport has fewer RX queues than cores");
  }
  config_.store.cores = config_.cores;
  store_ = std::make_unique<Store>(config_.store);
  crew_plan_ = ShardPlan::all_small(config_.cores, 0, false);
  guarded_plan_ = ShardPlan::all_small(config_.cores, 0, false);
  guarded_plan_.n_s = 0;
  guarded_plan_.n_l = config_.cores;
  for (uint32_t i = 0; i < config_.cores; ++i) {
    auto core = std::make_unique<Core>();
    core->rng.seed(0x5eed0000u + i);
    cores_.push_back(std::move(core));
    sw_.push_back(std::make_unique<MpmcQueue<Request>>(config_.sw_capacity));
  }
  next_epoch_ns_ = config_.epoch_ns;
  last_snapshot_.assign(config_.cores, CoreSnapshot{});
}

Server::~Server() { stop(); }

const ShardPlan& Server::write_plan() const {
  switch (config_.policy) {
    case Policy::kSizeAware: return plan();
    case Policy::kHkh: return crew_plan_;
    default: return guarded_plan_;
  }
}

StoreStatus Server::preload(std::string_view key, std::span<const uint8_t> value) {
  KeyHash h = hash_key(key);
  uint32_t master = store_->master_of(store_->partition_of(h));
  return store_->put(key, h, value, master, crew_plan_);
}

int64_t Server::step(uint32_t core, int64_t now_ns) {
  if (core == 0 && now_ns >= next_epoch_ns_) control_epoch(now_ns);
  Core& c = *cores_[core];
  const ShardPlan& plan = controller_.plan();
  Ctx ctx{core, c, now_ns, now_ns, &plan, plan.role_of(core)};
  switch (config_.policy) {
    case Policy::kSizeAware: step_size_aware(ctx); break;
    case Policy::kHkh: step_hkh(ctx); break;
    case Policy::kSho: step_sho(ctx); break;
    case Policy::kHkhWs: step_hkh_ws(ctx); break;
  }
  c.tx.flush(transport_, core);
  if (!ctx.worked) return 0;
  c.counters.batches.fetch_add(1, std::memory_order_relaxed);
  c.counters.busy_ns.fetch_add(static_cast<uint64_t>(ctx.busy), std::memory_order_relaxed);
  return std::max<int64_t>(ctx.t - now_ns, 1);
}

bool Server::retry_stalled(Ctx& ctx) {
  auto& stalled = ctx.c.stalled;
  while (!stalled.empty()) {
    auto& [target, req] = stalled.front();
    req.stamp = ctx.t;
    if (!sw_[target]->try_push(std::move(req))) return false;
    stalled.pop_front();
    ctx.worked = true;
  }
  return true;
}

bool Server::push_sw(Ctx& ctx, uint32_t target, Request& req) {
  ctx.charge(config_.cost.dispatch);
  ctx.c.counters.dispatched.fetch_add(1, std::memory_order_relaxed);
  req.stamp = ctx.t;
  req.from_core = ctx.core;
  if (ctx.c.stalled.empty() && sw_[target]->try_push(std::move(req))) return true;
  ctx.c.stalled.emplace_back(target, std::move(req));
  return false;
}

bool Server::pop_sw(Ctx& ctx, uint32_t queue, Request& out) {
  if (!sw_[queue]->try_pop(out)) return false;
  ctx.wait_until(out.stamp);
  return true;
}

std::optional<Request> Server::decode_frame(Ctx& ctx, Frame& frame) {
  ctx.charge(config_.cost.rx_frame);
  ctx.c.counters.rx_frames.fetch_add(1, std::memory_order_relaxed);
  DecodedMessage msg;
  CodecStatus st = decode(frame.data, msg);
  const MessageHeader& h = msg.header;
  if (st != CodecStatus::kOk || (h.opcode != Opcode::kGet && h.opcode != Opcode::kPut) ||
      (h.frag_index == 0 && h.key_len == 0)) {
    malformed_.fetch_add(1, std::memory_order_relaxed);
    ctx.c.counters.errors.fetch_add(1, std::memory_order_relaxed);
    if (st == CodecStatus::kOk || st == CodecStatus::kBadFragment) {
      reply_error(ctx, frame.client, h, ReplyError::kMalformed);
    }
    return std::nullopt;
  }

  Request req;
  req.op = h.opcode;
  req.request_id = h.request_id;
  req.client_ts = h.client_timestamp;
  req.keyhash = h.keyhash;
  req.client = frame.client;
  req.stamp = ctx.t;

  if (h.opcode == Opcode::kGet) {
    req.key.assign(msg.key);
    return req;
  }
  if (h.value_len_total > config_.store.max_value_size) {
    if (h.frag_index == 0) reply_error(ctx, frame.client, h, ReplyError::kTooLarge);
    return std::nullopt;
  }
  if (h.frag_count == 1) {
    if (msg.payload.size() != h.value_len_total) {
      malformed_.fetch_add(1, std::memory_order_relaxed);
      reply_error(ctx, frame.client, h, ReplyError::kMalformed);
      return std::nullopt;
    }
    req.key.assign(msg.key);
    req.size = h.value_len_total;
    req.value = copy_bytes(msg.payload);
    return req;
  }

  const uint64_t rkey = reassembly_key(frame.client, h.request_id);
  ReassemblyShard& shard = reassembly_[rkey % reassembly_.size()];
  std::lock_guard lock(shard.mu);
  auto [it, fresh] = shard.partial.try_emplace(rkey, config_.mtu_payload);
  ReassemblyStatus rs = it->second.add(msg);
  if (rs == ReassemblyStatus::kInconsistent) {
    shard.partial.erase(it);
    malformed_.fetch_add(1, std::memory_order_relaxed);
    reply_error(ctx, frame.client, h, ReplyError::kMalformed);
    return std::nullopt;
  }
  if (rs != ReassemblyStatus::kComplete) return std::nullopt;
  req.key = it->second.key();
  req.size = h.value_len_total;
  req.value = it->second.take_value();
  shard.partial.erase(it);
  return req;
}

void Server::reply_error(Ctx& ctx, uint64_t client, const MessageHeader& h, ReplyError err) {
  ctx.charge(config_.cost.tx_packet);
  MessageHeader r;
  r.opcode = Opcode::kError;
  r.request_id = h.request_id;
  r.client_timestamp = h.client_timestamp;
  r.keyhash = h.keyhash;
  r.value_len_total = 1;
  const uint8_t code = static_cast<uint8_t>(err);
  std::vector<Frame> msg(1);
  msg[0].data = encode(r, {}, std::span<const uint8_t>(&code, 1), config_.mtu_payload);
  msg[0].client = client;
  msg[0].stamp = ctx.t;
  ctx.c.tx.add(std::move(msg));
}

void Server::reply_error(Ctx& ctx, const Request& req, ReplyError err) {
  MessageHeader h;
  h.request_id = req.request_id;
  h.client_timestamp = req.client_ts;
  h.keyhash = req.keyhash;
  reply_error(ctx, req.client, h, err);
  ctx.c.counters.errors.fetch_add(1, std::memory_order_relaxed);
}

void Server::record_service(Ctx& ctx, const Request& req, bool from_sw) {
  if (!config_.trace) return;
  ServiceRecord r;
  r.request_id = req.request_id;
  r.core = ctx.core;
  r.size = req.size;
  r.op = req.op;
  r.role = ctx.role;
  r.plan_version = ctx.plan->version;
  r.threshold = ctx.plan->threshold;
  r.from_software_queue = from_sw;
  r.transition = from_sw && config_.policy == Policy::kSizeAware &&
                 ctx.role == CoreRole::kSmall;
  r.routed_version = from_sw ? req.plan_version : ctx.plan->version;
  r.time = ctx.t;
  ctx.c.services.push_back(r);
}

void Server::serve(Ctx& ctx, Request& req, bool from_sw) {
  const CostModel& cost = config_.cost;
  const KeyHash hash(req.keyhash);
  Core& c = ctx.c;
  if (req.op == Opcode::kGet) {
    ctx.charge(cost.op);
    if (!store_->get_into(req.key, hash, c.value_buf)) {
      reply_error(ctx, req, ReplyError::kNotFound);
      return;
    }
    req.size = static_cast<uint32_t>(c.value_buf.size());
    MessageHeader h;
    h.opcode = Opcode::kGetReply;
    h.request_id = req.request_id;
    h.client_timestamp = req.client_ts;
    h.keyhash = req.keyhash;
    h.value_len_total = req.size;
    auto slices = fragment(c.value_buf, config_.mtu_payload);
    h.frag_count = static_cast<uint16_t>(slices.size());
    std::vector<Frame> msg(slices.size());
    for (size_t i = 0; i < slices.size(); ++i) {
      ctx.charge(cost.tx_packet);
      h.frag_index = static_cast<uint16_t>(i);
      encode_into(h, {}, slices[i], config_.mtu_payload, msg[i].data);
      msg[i].client = req.client;
      msg[i].stamp = ctx.t;
    }
    c.tx.add(std::move(msg));
    c.counters.packets.fetch_add(packet_cost(Opcode::kGet, req.size, config_.mtu_payload),
                                 std::memory_order_relaxed);
  } else {
    const uint64_t packets = packet_cost(Opcode::kPut, req.size, config_.mtu_payload);
    ctx.charge(cost.op + static_cast<int64_t>(packets) * cost.put_packet);
    StoreStatus st = store_->put(req.key, hash, req.value, ctx.core,
                                 config_.policy == Policy::kSizeAware ? *ctx.plan : write_plan());
    if (st != StoreStatus::kOk) {
      reply_error(ctx, req,
                  st == StoreStatus::kTooLarge ? ReplyError::kTooLarge
                                               : ReplyError::kCapacityExceeded);
      return;
    }
    ctx.charge(cost.tx_packet);
    MessageHeader h;
    h.opcode = Opcode::kPutReply;
    h.request_id = req.request_id;
    h.client_timestamp = req.client_ts;
    h.keyhash = req.keyhash;
    std::vector<Frame> msg(1);
    encode_into(h, {}, {}, config_.mtu_payload, msg[0].data);
    msg[0].client = req.client;
    msg[0].stamp = ctx.t;
    c.tx.add(std::move(msg));
    c.counters.packets.fetch_add(packets, std::memory_order_relaxed);
  }
  c.counters.ops.fetch_add(1, std::memory_order_relaxed);
  record_service(ctx, req, from_sw);
}

void Server::dispatch_size_aware(Ctx& ctx, Request& req) {
  const ShardPlan& plan = *ctx.plan;
  const KeyHash hash(req.keyhash);
  if (req.op == Opcode::kGet) {
    auto size = store_->lookup_size(req.key, hash);
    if (!size) {
      ctx.charge(config_.cost.op);
      reply_error(ctx, req, ReplyError::kNotFound);
      return;
    }
    req.size = *size;
  }
  hists_[ctx.core].record(req.size);
  if (!plan.is_large(req.size)) {
    serve(ctx, req, false);
    return;
  }
  if (req.op == Opcode::kGet) ctx.charge(config_.cost.op);
  const uint32_t target = plan.large_core_for(req.size);
  req.plan_version = plan.version;
  if (config_.trace) {
    DispatchRecord d;
    d.request_id = req.request_id;
    d.from_core = ctx.core;
    d.to_core = target;
    d.size = req.size;
    d.threshold = plan.threshold;
    d.plan_version = plan.version;
    d.target_role = plan.role_of(target);
    d.time = ctx.t;
    ctx.c.dispatches.push_back(d);
  }
  push_sw(ctx, target, req);
}

int64_t Server::step_size_aware(Ctx& ctx) {
  Core& c = ctx.c;
  const ShardPlan& plan = *ctx.plan;
  const uint32_t B = config_.batch;
  if (!retry_stalled(ctx)) {
    ctx.charge(config_.cost.poll);
    return 0;
  }
  // Large cores poll only their software queue. A standby core and a core
  // demoted from a large role serve queued large requests before anything else.
  Request req;
  if (pop_sw(ctx, ctx.core, req)) {
    serve(ctx, req, true);
    return 0;
  }
  if (ctx.role == CoreRole::kLarge) return 0;

  c.frames.clear();
  transport_.receive(ctx.core, c.frames, B);
  if (plan.n_l > 0) {
    const uint32_t share = (B + plan.n_s - 1) / plan.n_s;
    for (uint32_t i = 0; i < plan.n_l; ++i) {
      const uint32_t l = plan.n_s + (c.rr + i) % plan.n_l;
      transport_.receive(l, c.frames, share);
    }
  } else if (plan.standby && ctx.core != plan.standby_core()) {
    const uint32_t share = (B + plan.n - 2) / (plan.n - 1);
    transport_.receive(plan.standby_core(), c.frames, share);
  }
  ++c.rr;
  for (Frame& f : c.frames) {
    if (auto r = decode_frame(ctx, f)) dispatch_size_aware(ctx, *r);
  }
  return 0;
}

int64_t Server::step_hkh(Ctx& ctx) {
  Core& c = ctx.c;
  c.frames.clear();
  transport_.receive(ctx.core, c.frames, config_.batch);
  for (Frame& f : c.frames) {
    if (auto r = decode_frame(ctx, f)) {
      if (r->op == Opcode::kPut) r->size = static_cast<uint32_t>(r->value.size());
      serve(ctx, *r, false);
    }
  }
  return 0;
}

int64_t Server::step_sho(Ctx& ctx) {
  Core& c = ctx.c;
  const uint32_t k = config_.handoff;
  if (!retry_stalled(ctx)) {
    ctx.charge(config_.cost.poll);
    return 0;
  }
  if (ctx.core < k) {
    c.frames.clear();
    transport_.receive(ctx.core, c.frames, config_.batch);
    for (Frame& f : c.frames) {
      if (auto r = decode_frame(ctx, f)) push_sw(ctx, ctx.core, *r);
    }
    return 0;
  }
  // Workers pull one request at a time, round-robin over the handoff queues.
  Request req;
  for (uint32_t i = 0; i < k; ++i) {
    const uint32_t q = (c.rr + i) % k;
    if (pop_sw(ctx, q, req)) {
      c.rr = q + 1;
      serve(ctx, req, true);
      return 0;
    }
  }
  return 0;
}

int64_t Server::step_hkh_ws(Ctx& ctx) {
  Core& c = ctx.c;
  const uint32_t n = config_.cores;
  // Stage the own RX batch into the own software queue, then serve one. A
  // full queue stops intake but never stops service.
  if (retry_stalled(ctx)) {
    c.frames.clear();
    transport_.receive(ctx.core, c.frames, config_.batch);
    for (Frame& f : c.frames) {
      if (auto r = decode_frame(ctx, f)) push_sw(ctx, ctx.core, *r);
    }
  }
  Request req;
  if (pop_sw(ctx, ctx.core, req)) {
    serve(ctx, req, true);
    return 0;
  }
  if (!c.stalled.empty()) {
    ctx.charge(config_.cost.poll);
    return 0;
  }

  // Idle: steal a single request from another software queue.
  const uint32_t offset = static_cast<uint32_t>(c.rng() % n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t v = (offset + i) % n;
    if (v == ctx.core) continue;
    if (pop_sw(ctx, v, req)) {
      c.counters.steals.fetch_add(1, std::memory_order_relaxed);
      if (config_.trace) {
        c.steals.push_back({ctx.core, v, 1, false, !sw_[ctx.core]->empty_approx(), ctx.t});
      }
      ctx.charge(config_.cost.dispatch);
      serve(ctx, req, true);
      return 0;
    }
  }
  // Then a batch from another core's RX queue, staged so it can be stolen again.
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t v = (offset + i) % n;
    if (v == ctx.core || !transport_.rx_maybe_nonempty(v)) continue;
    c.frames.clear();
    const size_t got = transport_.receive(v, c.frames, config_.batch);
    if (got == 0) continue;
    c.counters.steals.fetch_add(got, std::memory_order_relaxed);
    if (config_.trace) {
      c.steals.push_back({ctx.core, v, static_cast<uint32_t>(got), true,
                          !sw_[ctx.core]->empty_approx(), ctx.t});
    }
    for (Frame& f : c.frames) {
      if (auto r = decode_frame(ctx, f)) push_sw(ctx, ctx.core, *r);
    }
    if (pop_sw(ctx, ctx.core, req)) serve(ctx, req, true);
    return 0;
  }
  return 0;
}

void Server::control_epoch(int64_t now_ns) {
  if (config_.policy == Policy::kSizeAware) {
    controller_.control_epoch(std::span<CoreHistogram>(hists_), now_ns);
  }
  snapshot_epoch(now_ns);
  while (next_epoch_ns_ <= now_ns) next_epoch_ns_ += config_.epoch_ns;
}

void Server::close_epoch(int64_t now_ns) {
  if (now_ns > last_epoch_ns_) snapshot_epoch(now_ns);
}

void Server::snapshot_epoch(int64_t now_ns) {
  EpochStats e;
  e.epoch = epoch_stats_.size() + 1;
  e.time_ns = now_ns;
  e.span_ns = now_ns - last_epoch_ns_;
  e.plan = controller_.plan();
  auto now = counters();
  for (size_t i = 0; i < now.size(); ++i) {
    CoreSnapshot d;
    const CoreSnapshot& a = now[i];
    const CoreSnapshot& b = last_snapshot_[i];
    d.ops = a.ops - b.ops;
    d.packets = a.packets - b.packets;
    d.rx_frames = a.rx_frames - b.rx_frames;
    d.dispatched = a.dispatched - b.dispatched;
    d.steals = a.steals - b.steals;
    d.errors = a.errors - b.errors;
    d.busy_ns = a.busy_ns - b.busy_ns;
    d.batches = a.batches - b.batches;
    e.delta.push_back(d);
  }
  last_snapshot_ = std::move(now);
  last_epoch_ns_ = now_ns;
  epoch_stats_.push_back(std::move(e));
}

bool Server::quiescent() const {
  for (uint32_t i = 0; i < config_.cores; ++i) {
    if (!sw_[i]->empty_approx() || !cores_[i]->stalled.empty() || !cores_[i]->tx.empty()) {
      return false;
    }
    if (transport_.rx_maybe_nonempty(i)) return false;
  }
  return true;
}

std::vector<CoreSnapshot> Server::counters() const {
  std::vector<CoreSnapshot> out;
  for (const auto& c : cores_) {
    const CoreCounters& k = c->counters;
    CoreSnapshot s;
    s.ops = k.ops.load(std::memory_order_relaxed);
    s.packets = k.packets.load(std::memory_order_relaxed);
    s.rx_frames = k.rx_frames.load(std::memory_order_relaxed);
    s.dispatched = k.dispatched.load(std::memory_order_relaxed);
    s.steals = k.steals.load(std::memory_order_relaxed);
    s.errors = k.errors.load(std::memory_order_relaxed);
    s.busy_ns = k.busy_ns.load(std::memory_order_relaxed);
    s.batches = k.batches.load(std::memory_order_relaxed);
    out.push_back(s);
  }
  return out;
}

std::vector<ServiceRecord> Server::service_trace() const {
  std::vector<ServiceRecord> out;
  for (const auto& c : cores_) out.insert(out.end(), c->services.begin(), c->services.end());
  std::sort(out.begin(), out.end(),
            [](const ServiceRecord& a, const ServiceRecord& b) { return a.time < b.time; });
  return out;
}

std::vector<DispatchRecord> Server::dispatch_trace() const {
  std::vector<DispatchRecord> out;
  for (const auto& c : cores_) out.insert(out.end(), c->dispatches.begin(), c->dispatches.end());
  std::sort(out.begin(), out.end(),
            [](const DispatchRecord& a, const DispatchRecord& b) { return a.time < b.time; });
  return out;
}

std::vector<StealRecord> Server::steal_trace() const {
  std::vector<StealRecord> out;
  for (const auto& c : cores_) out.insert(out.end(), c->steals.begin(), c->steals.end());
  return out;
}

void Server::write_epoch_csv(std::ostream& os) const {
  os << "epoch,time_ms,core,role,ops_per_s,packets_per_s,busy,threshold,n_l\n";
  for (const EpochStats& e : epoch_stats_) {
    const double secs = e.span_ns > 0 ? static_cast<double>(e.span_ns) / 1e9 : 1.0;
    for (uint32_t i = 0; i < e.delta.size(); ++i) {
      const CoreSnapshot& d = e.delta[i];
      os << e.epoch << ',' << static_cast<double>(e.time_ns) / 1e6 << ',' << i << ',';
      if (config_.policy == Policy::kSizeAware) {
        os << to_string(e.plan.role_of(i));
      } else if (config_.policy == Policy::kSho) {
        os << (i < config_.handoff ? "handoff" : "worker");
      } else {
        os << "any";
      }
      os << ',' << static_cast<double>(d.ops) / secs << ','
         << static_cast<double>(d.packets) / secs << ','
         << static_cast<double>(d.busy_ns) / static_cast<double>(std::max<int64_t>(e.span_ns, 1))
         << ',' << (config_.policy == Policy::kSizeAware ? e.plan.threshold : 0) << ','
         << (config_.policy == Policy::kSizeAware ? e.plan.n_l : 0) << '\n';
    }
  }
}

void Server::start() {
  if (running_.exchange(true)) return;
  const auto origin = std::chrono::steady_clock::now();
  auto now_ns = [origin] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - origin)
        .count();
  };
  for (uint32_t i = 0; i < config_.cores; ++i) {
    threads_.emplace_back([this, i, now_ns] {
      while (running_.load(std::memory_order_relaxed)) {
        if (step(i, now_ns()) == 0) std::this_thread::yield();
      }
    });
  }
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  for (auto& t : threads_) t.join();
  threads_.clear();
}

}  // namespace minos
