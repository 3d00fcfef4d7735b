#include <algorithm>
#include <deque>
#include <limits>

#include "minos/runtime.hpp"

namespace minos {

SimHarness::SimHarness(Server& server, InprocTransport& transport, SimOptions options)
    : server_(server), transport_(transport), options_(options) {}

int64_t SimHarness::run(ArrivalSource& source) {
  const uint32_t n = server_.config().cores;
  const int64_t poll = server_.config().cost.poll;
  std::vector<int64_t> clock(n, 0);
  std::vector<bool> idle(n, false);
  std::vector<std::deque<Frame>> backlog(transport_.queues());
  size_t backlogged = 0;
  int64_t last_arrival = 0;

  uint32_t last = n - 1;
  for (;;) {
    // Earliest clock; ties rotate so no core index is favoured on shared queues.
    uint32_t c = (last + 1) % n;
    for (uint32_t i = 1; i < n; ++i) {
      const uint32_t o = (last + 1 + i) % n;
      if (clock[o] < clock[c]) c = o;
    }
    last = c;
    const int64_t now = clock[c];

    for (uint32_t q = 0; backlogged > 0 && q < backlog.size(); ++q) {
      while (!backlog[q].empty() && transport_.deliver(q, std::move(backlog[q].front()))) {
        backlog[q].pop_front();
        --backlogged;
      }
    }
    for (auto t = source.peek_time(); t && *t <= now; t = source.peek_time()) {
      SimArrival a = source.next();
      last_arrival = a.time;
      a.frame.stamp = a.time;
      if (!backlog[a.queue].empty() || !transport_.deliver(a.queue, std::move(a.frame))) {
        backlog[a.queue].push_back(std::move(a.frame));
        ++backlogged;
        ++backpressure_;
      }
    }

    const int64_t elapsed = server_.step(c, now);
    if (elapsed > 0) {
      clock[c] = now + elapsed;
      idle[c] = false;
      continue;
    }
    idle[c] = true;

    const auto next = source.peek_time();
    const bool all_idle = std::all_of(idle.begin(), idle.end(), [](bool b) { return b; });
    if (all_idle && !next && backlogged == 0 && server_.quiescent()) return now;
    if (!next && now > last_arrival + options_.drain_limit_ns) return now;

    // An idle core sleeps until something can change for it: an arrival, or
    // a busy core reaching the same time and possibly handing it work.
    int64_t wake = next ? *next : std::numeric_limits<int64_t>::max();
    for (uint32_t o = 0; o < n; ++o) {
      if (o != c && !idle[o]) wake = std::min(wake, clock[o]);
    }
    if (c == 0) wake = std::min(wake, server_.next_epoch_ns());
    if (backlogged > 0 || wake == std::numeric_limits<int64_t>::max()) wake = now + poll;
    clock[c] = std::max(now + poll, wake);
  }
}

}  // namespace minos
