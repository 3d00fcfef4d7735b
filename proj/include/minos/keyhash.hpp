#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace minos {

/// 64-bit hash of a key's bytes. The same bytes hash identically on client
/// and server, and three disjoint bit fields select partition, bucket and tag:
///
///   bits 63..48  partition (taken modulo the partition count)
///   bits 47..8   bucket index within the partition
///   bits  7..0   tag stored next to the entry reference
class KeyHash {
 public:
  constexpr KeyHash() = default;
  constexpr explicit KeyHash(uint64_t value) : value_(value) {}

  constexpr uint64_t value() const { return value_; }

  constexpr uint32_t partition(uint32_t num_partitions) const {
    return static_cast<uint32_t>((value_ >> 48) % num_partitions);
  }
  /// Bucket index for a power-of-two bucket count.
  constexpr uint64_t bucket(uint64_t num_buckets) const {
    return (value_ >> 8) & (num_buckets - 1);
  }
  constexpr uint8_t tag() const { return static_cast<uint8_t>(value_ & 0xff); }

  friend constexpr bool operator==(KeyHash, KeyHash) = default;

 private:
  uint64_t value_ = 0;
};

/// SipHash-2-4 with an explicit 128-bit key.
uint64_t siphash24(std::span<const uint8_t> data, uint64_t k0, uint64_t k1);

/// Key hash shared by clients and servers (SipHash-2-4 under a fixed key).
KeyHash hash_key(std::string_view key);

}  // namespace minos
