#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace minos {

/// Value bytes carried per frame: 1500-byte Ethernet MTU minus IP and UDP headers.
inline constexpr size_t kDefaultMtuPayload = 1472;

enum class Opcode : uint8_t { kGet = 1, kPut = 2, kGetReply = 3, kPutReply = 4, kError = 5 };

const char* to_string(Opcode op);

/// Error codes carried as the one-byte payload of an kError reply.
enum class ReplyError : uint8_t { kNotFound = 1, kCapacityExceeded = 2, kMalformed = 3, kTooLarge = 4 };

/// Fixed little-endian layout, 38 bytes:
///
///   off  size  field
///     0     2  magic            0x4B4D ("MK")
///     2     1  version          1
///     3     1  opcode
///     4     8  request_id
///    12     8  client_timestamp (ns)
///    20     8  keyhash
///    28     2  key_len          key bytes follow the header
///    30     4  value_len_total  whole value, repeated in every fragment
///    34     2  frag_index
///    36     2  frag_count
struct MessageHeader {
  static constexpr uint16_t kMagic = 0x4B4D;
  static constexpr uint8_t kVersion = 1;
  static constexpr size_t kSize = 38;

  Opcode opcode = Opcode::kGet;
  uint64_t request_id = 0;
  uint64_t client_timestamp = 0;
  uint64_t keyhash = 0;
  uint16_t key_len = 0;
  uint32_t value_len_total = 0;
  uint16_t frag_index = 0;
  uint16_t frag_count = 1;

  friend bool operator==(const MessageHeader&, const MessageHeader&) = default;
};

enum class CodecStatus { kOk, kOversize, kTruncated, kBadMagic, kBadVersion, kBadOpcode, kBadFragment };

const char* to_string(CodecStatus s);

/// Serialized datagram: header, then key_len key bytes, then the payload
/// slice. Throws std::length_error (kOversize) when the key length disagrees
/// with the header or the payload exceeds `mtu_payload`.
std::vector<uint8_t> encode(const MessageHeader& header, std::string_view key,
                            std::span<const uint8_t> payload,
                            size_t mtu_payload = kDefaultMtuPayload);

/// Non-throwing variant of encode; appends to `out`.
CodecStatus encode_into(const MessageHeader& header, std::string_view key,
                        std::span<const uint8_t> payload, size_t mtu_payload,
                        std::vector<uint8_t>& out);

/// View over a decoded datagram; key and payload alias the input buffer.
struct DecodedMessage {
  MessageHeader header;
  std::string_view key;
  std::span<const uint8_t> payload;
};

CodecStatus decode(std::span<const uint8_t> datagram, DecodedMessage& out);

/// Splits a value into mtu_payload-sized slices. An empty value yields one
/// empty slice so every message carries at least one frame.
std::vector<std::span<const uint8_t>> fragment(std::span<const uint8_t> value,
                                               size_t mtu_payload = kDefaultMtuPayload);

inline size_t fragment_count(size_t value_size, size_t mtu_payload = kDefaultMtuPayload) {
  return value_size == 0 ? 1 : (value_size + mtu_payload - 1) / mtu_payload;
}

/// Network packets handled to serve a request: reply frames for a GET,
/// request frames for a PUT. Never less than one.
uint64_t packet_cost(Opcode op, uint64_t value_size, size_t mtu_payload = kDefaultMtuPayload);

/// Encodes every frame of a message whose value spans several fragments.
/// The key travels in fragment 0 only.
std::vector<std::vector<uint8_t>> encode_message(MessageHeader header, std::string_view key,
                                                 std::span<const uint8_t> value,
                                                 size_t mtu_payload = kDefaultMtuPayload);

enum class ReassemblyStatus { kIncomplete, kComplete, kDuplicate, kInconsistent };

const char* to_string(ReassemblyStatus s);

/// Collects the fragments of one message in any order.
class Reassembly {
 public:
  explicit Reassembly(size_t mtu_payload = kDefaultMtuPayload) : mtu_payload_(mtu_payload) {}

  ReassemblyStatus add(const DecodedMessage& msg);

  bool complete() const { return started_ && received_ == header_.frag_count; }
  const MessageHeader& header() const { return header_; }
  const std::string& key() const { return key_; }
  /// Valid once complete(); moves the assembled value out.
  std::vector<uint8_t> take_value() { return std::move(value_); }

 private:
  size_t mtu_payload_;
  bool started_ = false;
  MessageHeader header_;
  std::string key_;
  std::vector<uint8_t> value_;
  std::vector<bool> have_;
  uint32_t received_ = 0;
};

struct ReassembleResult {
  ReassemblyStatus status = ReassemblyStatus::kIncomplete;
  std::vector<uint8_t> value;
  std::string key;
};

/// Reassembles a set of encoded frames sharing one request id.
ReassembleResult reassemble(std::span<const std::vector<uint8_t>> frames,
                            size_t mtu_payload = kDefaultMtuPayload);

}  // namespace minos
