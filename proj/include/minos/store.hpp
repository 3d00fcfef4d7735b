#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "minos/keyhash.hpp"
#include "minos/plan.hpp"

namespace minos {

struct StoreConfig {
  uint32_t cores = 8;
  /// Partition count; 0 means one partition per core.
  uint32_t partitions = 0;
  /// Primary buckets per partition, rounded up to a power of two.
  uint64_t buckets_per_partition = 1 << 12;
  uint32_t max_value_size = 1 << 20;
  size_t memory_cap = size_t{2} << 30;
  /// Record which cores execute mutations per partition (test builds).
  bool audit_writers = false;
};

enum class StoreStatus { kOk, kNotFound, kCapacityExceeded, kTooLarge };

const char* to_string(StoreStatus s);

namespace detail {

/// Arena-resident item. The key is immutable once published; the value is
/// rewritten in place when it fits `capacity`, always inside a bucket write
/// section so readers validate it against the bucket epoch.
struct Entry {
  uint64_t keyhash;
  uint32_t key_len;
  uint32_t capacity;
  std::atomic<uint32_t> size;  // 0 marks a deleted item
  uint32_t reserved;

  static size_t key_storage(uint32_t key_len) { return (key_len + 7u) & ~size_t{7}; }
  const char* key_data() const { return reinterpret_cast<const char*>(this + 1); }
  char* key_data() { return reinterpret_cast<char*>(this + 1); }
  uint64_t* words() {
    return reinterpret_cast<uint64_t*>(key_data() + key_storage(key_len));
  }
  std::string_view key() const { return {key_data(), key_len}; }
};

inline constexpr int kSlotsPerBucket = 5;

/// One cache line: epoch, overflow link, packed tags and entry references.
struct alignas(64) Bucket {
  std::atomic<uint64_t> epoch{0};
  std::atomic<Bucket*> overflow{nullptr};
  std::atomic<uint8_t> tags[8]{};
  std::atomic<Entry*> slots[kSlotsPerBucket]{};
};

static_assert(sizeof(Bucket) == 64, "bucket must occupy exactly one cache line");

/// Bump allocator with whole-run lifetime, shared byte budget across arenas.
class Arena {
 public:
  Arena(std::atomic<size_t>* budget_used, size_t budget_cap)
      : used_(budget_used), cap_(budget_cap) {}
  Arena(const Arena&) = delete;
  Arena& operator=(const Arena&) = delete;

  /// Returns nullptr when the store-wide budget is exhausted.
  void* allocate(size_t bytes, size_t align);

 private:
  struct Block {
    std::byte* base;
    size_t size;
    size_t align;
  };
  struct BlockDeleter {
    void operator()(Block* b) const;
  };

  std::mutex mu_;
  std::vector<std::unique_ptr<Block, BlockDeleter>> blocks_;
  std::byte* cursor_ = nullptr;
  std::byte* limit_ = nullptr;
  std::atomic<size_t>* used_;
  size_t cap_;
};

}  // namespace detail

/// Counters maintained by readers and writers.
struct StoreStats {
  uint64_t reads = 0;
  uint64_t read_retries = 0;
  uint64_t odd_epoch_spins = 0;
  uint64_t unstable_reads = 0;  // completed reads whose epochs disagreed (must be 0)
  uint64_t guarded_writes = 0;
  uint64_t crew_writes = 0;
  uint64_t overflow_buckets = 0;
};

/// Partitioned hash store with bucket-epoch optimistic reads. Each partition
/// has a master core (partition index modulo the core count). Writes by the
/// master of a partition it owns as a small core run without the partition
/// guard; every other write takes the guard first.
class Store {
 public:
  explicit Store(const StoreConfig& config);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  std::optional<std::vector<uint8_t>> get(std::string_view key, KeyHash hash) const;
  /// Copies into `out`; false when the key is absent.
  bool get_into(std::string_view key, KeyHash hash, std::vector<uint8_t>& out) const;
  std::optional<uint32_t> lookup_size(std::string_view key, KeyHash hash) const;

  StoreStatus put(std::string_view key, KeyHash hash, std::span<const uint8_t> value,
                  uint32_t executing_core, const ShardPlan& plan);
  /// Deletes by writing a tombstone.
  StoreStatus remove(std::string_view key, KeyHash hash, uint32_t executing_core,
                     const ShardPlan& plan);

  uint32_t partition_count() const { return static_cast<uint32_t>(partitions_.size()); }
  uint32_t partition_of(KeyHash hash) const { return hash.partition(partition_count()); }
  uint32_t master_of(uint32_t partition) const { return partition % config_.cores; }
  const StoreConfig& config() const { return config_; }

  StoreStats stats() const;
  size_t memory_used() const { return memory_used_.load(std::memory_order_relaxed); }

  /// Bitmask of cores that executed a mutation on `partition` (audit mode).
  uint64_t writer_mask(uint32_t partition) const;

  /// Visits every primary and overflow bucket epoch. Quiescent use only.
  void for_each_epoch(const std::function<void(uint64_t)>& fn) const;
  /// Visits every live item by brute-force scan. Quiescent use only.
  void for_each_item(const std::function<void(std::string_view key, uint32_t size)>& fn) const;

 private:
  struct Partition;

  struct ReadCounters {
    std::atomic<uint64_t> reads{0};
    std::atomic<uint64_t> retries{0};
    std::atomic<uint64_t> spins{0};
    std::atomic<uint64_t> unstable{0};
  };

  detail::Bucket& head_bucket(KeyHash hash) const;
  template <class Visit>
  bool optimistic_read(std::string_view key, KeyHash hash, Visit&& visit) const;
  StoreStatus write(std::string_view key, KeyHash hash, std::span<const uint8_t> value,
                    bool tombstone, uint32_t executing_core, const ShardPlan& plan);

  StoreConfig config_;
  uint64_t bucket_mask_;
  std::vector<std::unique_ptr<Partition>> partitions_;
  std::atomic<size_t> memory_used_{0};
  mutable ReadCounters counters_;
  std::atomic<uint64_t> guarded_writes_{0};
  std::atomic<uint64_t> crew_writes_{0};
  std::atomic<uint64_t> overflow_buckets_{0};
};

}  // namespace minos
