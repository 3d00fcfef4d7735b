#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "minos/mpmc_queue.hpp"
#include "minos/plan.hpp"
#include "minos/protocol.hpp"
#include "minos/shardctl.hpp"
#include "minos/store.hpp"

namespace minos {

enum class Policy { kSizeAware, kHkh, kSho, kHkhWs };

std::string_view to_string(Policy p);
/// size-aware | hkh | sho | hkh-ws
Policy parse_policy(std::string_view s);

/// Nanoseconds charged for each unit of work when the server runs in virtual
/// time. Threaded backends ignore it.
struct CostModel {
  int64_t rx_frame = 100;    // pull and decode one frame
  int64_t op = 300;          // one lookup plus item access
  int64_t tx_packet = 500;   // build and send one reply frame
  int64_t put_packet = 500;  // copy one PUT fragment into the store
  int64_t dispatch = 100;    // one software-queue enqueue
  int64_t poll = 50;         // an iteration that found no work
};

struct Frame {
  std::vector<uint8_t> data;
  /// Opaque reply address (client index in-process, packed IPv4:port over UDP).
  uint64_t client = 0;
  /// Virtual time at which the frame becomes visible to its consumer.
  int64_t stamp = 0;
};

/// Decoded request as it travels through software queues.
struct Request {
  Opcode op = Opcode::kGet;
  uint64_t request_id = 0;
  uint64_t client_ts = 0;
  uint64_t keyhash = 0;
  std::string key;
  uint32_t size = 0;
  std::vector<uint8_t> value;
  uint64_t client = 0;
  int64_t stamp = 0;
  uint64_t plan_version = 0;
  uint32_t from_core = 0;
};

/// Emulated multi-queue NIC: RX queue i is the i-th receive queue (UDP port
/// BASE_PORT + i), and each core owns one TX path.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual uint32_t queues() const = 0;
  /// Appends up to `max` frames from RX queue `queue`; returns the count.
  virtual size_t receive(uint32_t queue, std::vector<Frame>& out, size_t max) = 0;
  virtual bool rx_maybe_nonempty(uint32_t queue) const = 0;
  /// Transmits frames in order on the TX path of `core`.
  virtual void send(uint32_t core, std::vector<Frame>& frames) = 0;
};

/// Per-core transmit buffer. Reply frames are queued per message and, on
/// flush, emitted round-robin across messages so a long multi-fragment reply
/// does not hold back short replies queued behind it.
class TxBuffer {
 public:
  void add(std::vector<Frame> message);
  bool empty() const { return pending_.empty(); }
  void flush(Transport& transport, uint32_t core);

 private:
  std::deque<std::vector<Frame>> pending_;
  std::vector<Frame> out_;
};

struct ServiceRecord {
  uint64_t request_id = 0;
  uint32_t core = 0;
  uint32_t size = 0;
  Opcode op = Opcode::kGet;
  CoreRole role = CoreRole::kSmall;  // role under the plan pinned for the batch
  uint64_t plan_version = 0;
  uint64_t threshold = 0;
  bool from_software_queue = false;
  /// Served from a software queue by a core that no longer holds a large role.
  bool transition = false;
  uint64_t routed_version = 0;  // plan version that routed it to the queue
  int64_t time = 0;
};

struct DispatchRecord {
  uint64_t request_id = 0;
  uint32_t from_core = 0;
  uint32_t to_core = 0;
  uint32_t size = 0;
  uint64_t threshold = 0;
  uint64_t plan_version = 0;
  CoreRole target_role = CoreRole::kLarge;
  int64_t time = 0;
};

struct StealRecord {
  uint32_t stealer = 0;
  uint32_t victim = 0;
  uint32_t count = 0;
  bool from_rx = false;
  bool stealer_had_work = false;
  int64_t time = 0;
};

struct ServerConfig {
  Policy policy = Policy::kSizeAware;
  uint32_t cores = 8;
  /// Handoff cores for the software-handoff baseline.
  uint32_t handoff = 1;
  uint32_t batch = 32;
  std::optional<uint64_t> static_threshold;
  double alpha = 0.9;
  int64_t epoch_ns = 1'000'000'000;
  size_t mtu_payload = kDefaultMtuPayload;
  size_t rx_capacity = 4096;
  size_t sw_capacity = 1024;
  StoreConfig store;
  CostModel cost;
  /// Keep per-request service, dispatch and steal records.
  bool trace = false;

  /// Throws std::invalid_argument with a readable message.
  void validate() const;
};

/// Monotone per-core counters; safe to read while cores run.
struct CoreCounters {
  std::atomic<uint64_t> ops{0};
  std::atomic<uint64_t> packets{0};  // packet cost of the requests served
  std::atomic<uint64_t> rx_frames{0};
  std::atomic<uint64_t> dispatched{0};
  std::atomic<uint64_t> steals{0};
  std::atomic<uint64_t> errors{0};
  std::atomic<uint64_t> busy_ns{0};
  std::atomic<uint64_t> batches{0};
};

struct CoreSnapshot {
  uint64_t ops = 0;
  uint64_t packets = 0;
  uint64_t rx_frames = 0;
  uint64_t dispatched = 0;
  uint64_t steals = 0;
  uint64_t errors = 0;
  uint64_t busy_ns = 0;
  uint64_t batches = 0;
};

struct EpochStats {
  uint64_t epoch = 0;
  int64_t time_ns = 0;
  int64_t span_ns = 0;
  ShardPlan plan;
  std::vector<CoreSnapshot> delta;
};

/// The key-value server: per-core run-to-completion loops over a transport.
/// step() runs one iteration of a core's loop; the threaded driver calls it
/// in a loop per core, the virtual-time harness calls it in clock order.
class Server {
 public:
  Server(const ServerConfig& config, Transport& transport);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  const ServerConfig& config() const { return config_; }
  Store& store() { return *store_; }
  Controller& controller() { return controller_; }
  const ShardPlan& plan() const { return controller_.plan(); }

  /// Plan used for store writes by the baselines (CREW for HKH, guarded
  /// everywhere for the policies that move requests between cores).
  const ShardPlan& write_plan() const;

  /// Writes an item directly, bypassing the network path.
  StoreStatus preload(std::string_view key, std::span<const uint8_t> value);

  /// One loop iteration of `core` starting at `now_ns`. Returns the virtual
  /// nanoseconds the iteration took; 0 when it found no work.
  int64_t step(uint32_t core, int64_t now_ns);

  /// Coordinator work at an epoch boundary; core 0 runs it from step().
  void control_epoch(int64_t now_ns);
  int64_t next_epoch_ns() const { return next_epoch_ns_; }
  /// Records the statistics of the partial epoch ending at `now_ns`.
  void close_epoch(int64_t now_ns);

  /// True when no request is buffered anywhere inside the server.
  bool quiescent() const;

  void start();
  void stop();
  bool running() const { return running_.load(); }

  std::vector<CoreSnapshot> counters() const;
  const std::vector<EpochStats>& epochs() const { return epoch_stats_; }
  std::vector<ServiceRecord> service_trace() const;
  std::vector<DispatchRecord> dispatch_trace() const;
  std::vector<StealRecord> steal_trace() const;
  uint64_t malformed() const { return malformed_.load(); }

  /// Per-core statistics for each epoch: ops/s, packets/s, role, threshold, n_l.
  void write_epoch_csv(std::ostream& os) const;

 private:
  struct Core;
  struct Ctx;
  struct ReassemblyShard {
    std::mutex mu;
    std::unordered_map<uint64_t, Reassembly> partial;
  };

  int64_t step_size_aware(Ctx& ctx);
  int64_t step_hkh(Ctx& ctx);
  int64_t step_sho(Ctx& ctx);
  int64_t step_hkh_ws(Ctx& ctx);

  /// Decodes one frame; returns a complete request or nothing (fragment
  /// pending or malformed frame answered with an error).
  std::optional<Request> decode_frame(Ctx& ctx, Frame& frame);
  void serve(Ctx& ctx, Request& req, bool from_sw);
  void reply_error(Ctx& ctx, const Request& req, ReplyError err);
  void reply_error(Ctx& ctx, uint64_t client, const MessageHeader& h, ReplyError err);
  /// Routes a request to a software queue; false when the queue is full.
  bool push_sw(Ctx& ctx, uint32_t target, Request& req);
  bool pop_sw(Ctx& ctx, uint32_t queue, Request& out);
  void dispatch_size_aware(Ctx& ctx, Request& req);
  bool retry_stalled(Ctx& ctx);
  void record_service(Ctx& ctx, const Request& req, bool from_sw);
  void snapshot_epoch(int64_t now_ns);

  ServerConfig config_;
  Transport& transport_;
  std::unique_ptr<Store> store_;
  Controller controller_;
  ShardPlan crew_plan_;
  ShardPlan guarded_plan_;
  std::vector<std::unique_ptr<Core>> cores_;
  std::vector<std::unique_ptr<MpmcQueue<Request>>> sw_;
  std::vector<ReassemblyShard> reassembly_;
  std::vector<CoreHistogram> hists_;
  std::atomic<uint64_t> malformed_{0};

  int64_t next_epoch_ns_ = 0;
  int64_t last_epoch_ns_ = 0;
  std::vector<CoreSnapshot> last_snapshot_;
  std::vector<EpochStats> epoch_stats_;

  std::atomic<bool> running_{false};
  std::vector<std::thread> threads_;
};

/// In-process transport: RX queues are bounded MPMC rings fed by the load
/// generator, replies go to a sink callback.
class InprocTransport : public Transport {
 public:
  using Sink = std::function<void(uint32_t core, Frame&& frame)>;

  InprocTransport(uint32_t queues, size_t capacity);

  void set_sink(Sink sink) { sink_ = std::move(sink); }
  /// Client side: enqueue on an RX queue; false when the queue is full.
  bool deliver(uint32_t queue, Frame&& frame);
  size_t rx_depth(uint32_t queue) const { return rx_[queue]->size_approx(); }

  uint32_t queues() const override { return static_cast<uint32_t>(rx_.size()); }
  size_t receive(uint32_t queue, std::vector<Frame>& out, size_t max) override;
  bool rx_maybe_nonempty(uint32_t queue) const override { return !rx_[queue]->empty_approx(); }
  void send(uint32_t core, std::vector<Frame>& frames) override;

 private:
  std::vector<std::unique_ptr<MpmcQueue<Frame>>> rx_;
  Sink sink_;
};

/// One scheduled client transmission for the virtual-time harness.
struct SimArrival {
  int64_t time = 0;
  uint32_t queue = 0;
  Frame frame;
};

/// Produces arrivals in non-decreasing time order.
class ArrivalSource {
 public:
  virtual ~ArrivalSource() = default;
  /// Time of the next arrival, or nullopt when exhausted.
  virtual std::optional<int64_t> peek_time() = 0;
  virtual SimArrival next() = 0;
};

struct SimOptions {
  /// Stop draining this long after the last arrival.
  int64_t drain_limit_ns = 2'000'000'000;
};

/// Discrete-event driver that runs the server's real core loops in virtual
/// time. The core with the smallest clock always runs next; arrivals are
/// injected once that clock reaches their time; each step advances the core's
/// clock by the cost it charged.
class SimHarness {
 public:
  SimHarness(Server& server, InprocTransport& transport, SimOptions options = {});

  /// Returns the virtual time at which the server went quiescent.
  int64_t run(ArrivalSource& source);

  uint64_t backpressure_events() const { return backpressure_; }

 private:
  Server& server_;
  InprocTransport& transport_;
  SimOptions options_;
  uint64_t backpressure_ = 0;
};

/// Real UDP sockets, one per RX queue bound to base_port + i on `host`.
class UdpTransport : public Transport {
 public:
  UdpTransport(const std::string& host, uint16_t base_port, uint32_t queues);
  ~UdpTransport() override;

  uint32_t queues() const override { return static_cast<uint32_t>(fds_.size()); }
  size_t receive(uint32_t queue, std::vector<Frame>& out, size_t max) override;
  bool rx_maybe_nonempty(uint32_t) const override { return true; }
  void send(uint32_t core, std::vector<Frame>& frames) override;

  static uint64_t pack_address(uint32_t ipv4_host_order, uint16_t port);

 private:
  std::vector<int> fds_;
};

/// Client-side UDP socket bound to an ephemeral port.
class UdpClient {
 public:
  UdpClient(const std::string& server_host, uint16_t base_port);
  ~UdpClient();
  UdpClient(const UdpClient&) = delete;
  UdpClient& operator=(const UdpClient&) = delete;

  /// Sends one datagram to RX queue `queue` (port base_port + queue).
  bool send(uint32_t queue, std::span<const uint8_t> datagram);
  /// Receives one datagram, waiting up to `timeout_us`; false on timeout.
  bool receive(std::vector<uint8_t>& out, int timeout_us);

 private:
  int fd_ = -1;
  uint32_t host_ = 0;
  uint16_t base_port_ = 0;
};

}  // namespace minos
