#include <stdexcept>

#include "minos/protocol.hpp"

namespace minos {

const char* to_string(ReassemblyStatus s) {
  switch (s) {
    case ReassemblyStatus::kIncomplete: return "incomplete";
    case ReassemblyStatus::kComplete: return "complete";
    case ReassemblyStatus::kDuplicate: return "duplicate";
    case ReassemblyStatus::kInconsistent: return "inconsistent";
  }
  return "?";
}

std::vector<std::span<const uint8_t>> fragment(std::span<const uint8_t> value, size_t mtu_payload) {
  if (mtu_payload == 0) throw std::invalid_argument("mtu_payload must be positive");
  std::vector<std::span<const uint8_t>> slices;
  if (value.empty()) {
    slices.push_back(value);
    return slices;
  }
  slices.reserve(fragment_count(value.size(), mtu_payload));
  for (size_t off = 0; off < value.size(); off += mtu_payload) {
    slices.push_back(value.subspan(off, std::min(mtu_payload, value.size() - off)));
  }
  return slices;
}

std::vector<std::vector<uint8_t>> encode_message(MessageHeader header, std::string_view key,
                                                 std::span<const uint8_t> value,
                                                 size_t mtu_payload) {
  auto slices = fragment(value, mtu_payload);
  if (slices.size() > 0xffff) throw std::length_error("value needs too many fragments");
  std::vector<std::vector<uint8_t>> frames;
  frames.reserve(slices.size());
  header.value_len_total = static_cast<uint32_t>(value.size());
  header.frag_count = static_cast<uint16_t>(slices.size());
  for (size_t i = 0; i < slices.size(); ++i) {
    header.frag_index = static_cast<uint16_t>(i);
    std::string_view k = i == 0 ? key : std::string_view{};
    header.key_len = static_cast<uint16_t>(k.size());
    frames.push_back(encode(header, k, slices[i], mtu_payload));
  }
  return frames;
}

ReassemblyStatus Reassembly::add(const DecodedMessage& msg) {
  const MessageHeader& h = msg.header;
  if (!started_) {
    if (h.frag_count != fragment_count(h.value_len_total, mtu_payload_)) {
      return ReassemblyStatus::kInconsistent;
    }
    started_ = true;
    header_ = h;
    value_.assign(h.value_len_total, 0);
    have_.assign(h.frag_count, false);
  } else if (h.request_id != header_.request_id || h.frag_count != header_.frag_count ||
             h.value_len_total != header_.value_len_total || h.opcode != header_.opcode) {
    return ReassemblyStatus::kInconsistent;
  }
  if (h.frag_index >= have_.size()) return ReassemblyStatus::kInconsistent;

  const size_t offset = size_t{h.frag_index} * mtu_payload_;
  const size_t expected =
      h.value_len_total == 0 ? 0 : std::min(mtu_payload_, size_t{h.value_len_total} - offset);
  if (msg.payload.size() != expected) return ReassemblyStatus::kInconsistent;

  if (have_[h.frag_index]) return ReassemblyStatus::kDuplicate;
  have_[h.frag_index] = true;
  ++received_;
  std::copy(msg.payload.begin(), msg.payload.end(), value_.begin() + offset);
  if (h.frag_index == 0) {
    key_.assign(msg.key);
    header_.key_len = h.key_len;
    header_.keyhash = h.keyhash;
    header_.client_timestamp = h.client_timestamp;
  }
  return complete() ? ReassemblyStatus::kComplete : ReassemblyStatus::kIncomplete;
}

ReassembleResult reassemble(std::span<const std::vector<uint8_t>> frames, size_t mtu_payload) {
  ReassembleResult result;
  Reassembly r(mtu_payload);
  for (const auto& f : frames) {
    DecodedMessage msg;
    if (decode(f, msg) != CodecStatus::kOk) {
      result.status = ReassemblyStatus::kInconsistent;
      return result;
    }
    if (r.add(msg) == ReassemblyStatus::kInconsistent) {
      result.status = ReassemblyStatus::kInconsistent;
      return result;
    }
  }
  if (r.complete()) {
    result.status = ReassemblyStatus::kComplete;
    result.key = r.key();
    result.value = r.take_value();
  }
  return result;
}

}  // namespace minos
