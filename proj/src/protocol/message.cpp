#include <stdexcept>

#include "minos/protocol.hpp"

namespace minos {
namespace {

template <class T>
void put_le(uint8_t* p, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<uint8_t>(static_cast<uint64_t>(v) >> (8 * i));
}

template <class T>
T get_le(const uint8_t* p) {
  uint64_t v = 0;
  for (size_t i = sizeof(T); i-- > 0;) v = (v << 8) | p[i];
  return static_cast<T>(v);
}

bool valid_opcode(uint8_t op) { return op >= 1 && op <= 5; }

// Largest UDP payload over IPv4.
constexpr size_t kMaxDatagram = 65507;

}  // namespace

const char* to_string(Opcode op) {
  switch (op) {
    case Opcode::kGet: return "GET";
    case Opcode::kPut: return "PUT";
    case Opcode::kGetReply: return "GET_REPLY";
    case Opcode::kPutReply: return "PUT_REPLY";
    case Opcode::kError: return "ERROR";
  }
  return "?";
}

const char* to_string(CodecStatus s) {
  switch (s) {
    case CodecStatus::kOk: return "ok";
    case CodecStatus::kOversize: return "oversize";
    case CodecStatus::kTruncated: return "truncated";
    case CodecStatus::kBadMagic: return "bad-magic";
    case CodecStatus::kBadVersion: return "bad-version";
    case CodecStatus::kBadOpcode: return "bad-opcode";
    case CodecStatus::kBadFragment: return "bad-fragment";
  }
  return "?";
}

CodecStatus encode_into(const MessageHeader& h, std::string_view key,
                        std::span<const uint8_t> payload, size_t mtu_payload,
                        std::vector<uint8_t>& out) {
  if (key.size() != h.key_len || payload.size() > mtu_payload ||
      MessageHeader::kSize + key.size() + payload.size() > kMaxDatagram) {
    return CodecStatus::kOversize;
  }
  const size_t base = out.size();
  out.resize(base + MessageHeader::kSize + key.size() + payload.size());
  uint8_t* p = out.data() + base;
  put_le<uint16_t>(p + 0, MessageHeader::kMagic);
  p[2] = MessageHeader::kVersion;
  p[3] = static_cast<uint8_t>(h.opcode);
  put_le<uint64_t>(p + 4, h.request_id);
  put_le<uint64_t>(p + 12, h.client_timestamp);
  put_le<uint64_t>(p + 20, h.keyhash);
  put_le<uint16_t>(p + 28, h.key_len);
  put_le<uint32_t>(p + 30, h.value_len_total);
  put_le<uint16_t>(p + 34, h.frag_index);
  put_le<uint16_t>(p + 36, h.frag_count);
  p += MessageHeader::kSize;
  if (!key.empty()) std::copy(key.begin(), key.end(), p);
  if (!payload.empty()) std::copy(payload.begin(), payload.end(), p + key.size());
  return CodecStatus::kOk;
}

std::vector<uint8_t> encode(const MessageHeader& header, std::string_view key,
                            std::span<const uint8_t> payload, size_t mtu_payload) {
  std::vector<uint8_t> out;
  out.reserve(MessageHeader::kSize + key.size() + payload.size());
  if (encode_into(header, key, payload, mtu_payload, out) != CodecStatus::kOk) {
    throw std::length_error("message exceeds frame budget");
  }
  return out;
}

CodecStatus decode(std::span<const uint8_t> d, DecodedMessage& out) {
  if (d.size() < MessageHeader::kSize) return CodecStatus::kTruncated;
  const uint8_t* p = d.data();
  if (get_le<uint16_t>(p) != MessageHeader::kMagic) return CodecStatus::kBadMagic;
  if (p[2] != MessageHeader::kVersion) return CodecStatus::kBadVersion;
  if (!valid_opcode(p[3])) return CodecStatus::kBadOpcode;
  MessageHeader& h = out.header;
  h.opcode = static_cast<Opcode>(p[3]);
  h.request_id = get_le<uint64_t>(p + 4);
  h.client_timestamp = get_le<uint64_t>(p + 12);
  h.keyhash = get_le<uint64_t>(p + 20);
  h.key_len = get_le<uint16_t>(p + 28);
  h.value_len_total = get_le<uint32_t>(p + 30);
  h.frag_index = get_le<uint16_t>(p + 34);
  h.frag_count = get_le<uint16_t>(p + 36);
  if (h.frag_count == 0 || h.frag_index >= h.frag_count) return CodecStatus::kBadFragment;
  if (h.opcode == Opcode::kGet && h.frag_count != 1) return CodecStatus::kBadFragment;
  if (d.size() < MessageHeader::kSize + h.key_len) return CodecStatus::kTruncated;
  out.key = std::string_view(reinterpret_cast<const char*>(p + MessageHeader::kSize), h.key_len);
  out.payload = d.subspan(MessageHeader::kSize + h.key_len);
  return CodecStatus::kOk;
}

uint64_t packet_cost(Opcode, uint64_t value_size, size_t mtu_payload) {
  // GET replies and PUT requests both carry the value, so either way the
  // cost is the frame count of the value.
  return (std::max<uint64_t>(value_size, 1) + mtu_payload - 1) / mtu_payload;
}

}  // namespace minos
