#include "minos/runtime.hpp"

namespace minos {

InprocTransport::InprocTransport(uint32_t queues, size_t capacity) {
  for (uint32_t i = 0; i < queues; ++i) rx_.push_back(std::make_unique<MpmcQueue<Frame>>(capacity));
}

bool InprocTransport::deliver(uint32_t queue, Frame&& frame) {
  return rx_.at(queue)->try_push(std::move(frame));
}

size_t InprocTransport::receive(uint32_t queue, std::vector<Frame>& out, size_t max) {
  size_t got = 0;
  Frame f;
  while (got < max && rx_[queue]->try_pop(f)) {
    out.push_back(std::move(f));
    ++got;
  }
  return got;
}

void InprocTransport::send(uint32_t core, std::vector<Frame>& frames) {
  if (sink_) {
    for (Frame& f : frames) sink_(core, std::move(f));
  }
  frames.clear();
}

}  // namespace minos
