#include "minos/store.hpp"

#include <bit>
#include <cstring>
#include <new>
#include <thread>

namespace minos {

const char* to_string(StoreStatus s) {
  switch (s) {
    case StoreStatus::kOk: return "ok";
    case StoreStatus::kNotFound: return "not-found";
    case StoreStatus::kCapacityExceeded: return "capacity-exceeded";
    case StoreStatus::kTooLarge: return "too-large";
  }
  return "?";
}

namespace detail {

void Arena::BlockDeleter::operator()(Block* b) const {
  ::operator delete(b->base, std::align_val_t(b->align));
  delete b;
}

void* Arena::allocate(size_t bytes, size_t align) {
  constexpr size_t kBlockSize = size_t{4} << 20;
  std::lock_guard lock(mu_);
  auto fits = [&] {
    if (cursor_ == nullptr) return false;
    auto p = reinterpret_cast<uintptr_t>(cursor_);
    uintptr_t aligned = (p + align - 1) & ~(uintptr_t{align} - 1);
    return aligned + bytes <= reinterpret_cast<uintptr_t>(limit_);
  };
  if (!fits()) {
    size_t block = bytes + align > kBlockSize / 4 ? bytes + align : kBlockSize;
    size_t prev = used_->fetch_add(block, std::memory_order_relaxed);
    if (prev + block > cap_) {
      used_->fetch_sub(block, std::memory_order_relaxed);
      return nullptr;
    }
    auto* base = static_cast<std::byte*>(::operator new(block, std::align_val_t(64)));
    blocks_.emplace_back(new Block{base, block, 64});
    if (block != kBlockSize) {
      // Dedicated block; keep bump-allocating from the current one.
      return base;
    }
    cursor_ = base;
    limit_ = base + block;
  }
  auto p = reinterpret_cast<uintptr_t>(cursor_);
  uintptr_t aligned = (p + align - 1) & ~(uintptr_t{align} - 1);
  cursor_ = reinterpret_cast<std::byte*>(aligned + bytes);
  return reinterpret_cast<void*>(aligned);
}

}  // namespace detail

using detail::Bucket;
using detail::Entry;
using detail::kSlotsPerBucket;

namespace {

class SpinLock {
 public:
  void lock() {
    int spins = 0;
    while (flag_.test_and_set(std::memory_order_acquire)) {
      if (++spins % 1024 == 0) std::this_thread::yield();
    }
  }
  void unlock() { flag_.clear(std::memory_order_release); }

 private:
  std::atomic_flag flag_ = ATOMIC_FLAG_INIT;
};

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#endif
}

uint64_t load_word(const uint64_t& w) {
  return std::atomic_ref<uint64_t>(const_cast<uint64_t&>(w)).load(std::memory_order_relaxed);
}

void store_word(uint64_t& w, uint64_t v) {
  std::atomic_ref<uint64_t>(w).store(v, std::memory_order_relaxed);
}

void write_value(Entry& e, std::span<const uint8_t> value) {
  uint64_t* words = e.words();
  const size_t full = value.size() / 8;
  for (size_t i = 0; i < full; ++i) {
    uint64_t v;
    std::memcpy(&v, value.data() + i * 8, 8);
    store_word(words[i], v);
  }
  if (size_t tail = value.size() % 8) {
    uint64_t v = 0;
    std::memcpy(&v, value.data() + full * 8, tail);
    store_word(words[full], v);
  }
  e.size.store(static_cast<uint32_t>(value.size()), std::memory_order_relaxed);
}

void read_value(const Entry& e, uint32_t size, std::vector<uint8_t>& out) {
  size = std::min(size, e.capacity);
  out.resize(size);
  const uint64_t* words = const_cast<Entry&>(e).words();
  const size_t full = size / 8;
  for (size_t i = 0; i < full; ++i) {
    uint64_t v = load_word(words[i]);
    std::memcpy(out.data() + i * 8, &v, 8);
  }
  if (size_t tail = size % 8) {
    uint64_t v = load_word(words[full]);
    std::memcpy(out.data() + full * 8, &v, tail);
  }
}

}  // namespace

struct Store::Partition {
  Partition(uint64_t buckets, std::atomic<size_t>* used, size_t cap)
      : table(new Bucket[buckets]), arena(used, cap) {}

  std::unique_ptr<Bucket[]> table;
  SpinLock guard;
  detail::Arena arena;
  std::atomic<uint64_t> writers{0};
};

Store::Store(const StoreConfig& config) : config_(config) {
  if (config_.cores == 0) config_.cores = 1;
  if (config_.partitions == 0) config_.partitions = config_.cores;
  uint64_t buckets = std::bit_ceil(std::max<uint64_t>(config_.buckets_per_partition, 1));
  config_.buckets_per_partition = buckets;
  bucket_mask_ = buckets - 1;
  partitions_.reserve(config_.partitions);
  for (uint32_t i = 0; i < config_.partitions; ++i) {
    partitions_.push_back(std::make_unique<Partition>(buckets, &memory_used_, config_.memory_cap));
  }
}

Store::~Store() = default;

Bucket& Store::head_bucket(KeyHash hash) const {
  Partition& part = *partitions_[partition_of(hash)];
  return part.table[hash.bucket(bucket_mask_ + 1)];
}

template <class Visit>
bool Store::optimistic_read(std::string_view key, KeyHash hash, Visit&& visit) const {
  const Bucket& head = head_bucket(hash);
  const uint8_t tag = hash.tag();
  for (;;) {
    uint64_t before = head.epoch.load(std::memory_order_acquire);
    for (uint64_t spins = 1; before & 1; ++spins) {
      if (spins % 1024 == 0) {
        std::this_thread::yield();
      } else {
        cpu_relax();
      }
      counters_.spins.fetch_add(1, std::memory_order_relaxed);
      before = head.epoch.load(std::memory_order_acquire);
    }

    bool found = false;
    bool matched = false;
    for (const Bucket* b = &head; b != nullptr && !matched;
         b = b->overflow.load(std::memory_order_acquire)) {
      for (int s = 0; s < kSlotsPerBucket; ++s) {
        const Entry* e = b->slots[s].load(std::memory_order_acquire);
        if (e == nullptr || b->tags[s].load(std::memory_order_relaxed) != tag) continue;
        if (e->keyhash != hash.value() || e->key() != key) continue;
        matched = true;
        uint32_t size = e->size.load(std::memory_order_relaxed);
        if (size != 0) {
          found = true;
          visit(*e, size);
        }
        break;
      }
    }

    std::atomic_thread_fence(std::memory_order_acquire);
    uint64_t after = head.epoch.load(std::memory_order_relaxed);
    if (before == after) {
      if (after & 1) counters_.unstable.fetch_add(1, std::memory_order_relaxed);
      return found;
    }
    counters_.retries.fetch_add(1, std::memory_order_relaxed);
  }
}

bool Store::get_into(std::string_view key, KeyHash hash, std::vector<uint8_t>& out) const {
  return optimistic_read(key, hash, [&](const Entry& e, uint32_t size) { read_value(e, size, out); });
}

std::optional<std::vector<uint8_t>> Store::get(std::string_view key, KeyHash hash) const {
  std::vector<uint8_t> out;
  if (!get_into(key, hash, out)) return std::nullopt;
  return out;
}

std::optional<uint32_t> Store::lookup_size(std::string_view key, KeyHash hash) const {
  uint32_t result = 0;
  bool found = optimistic_read(key, hash, [&](const Entry&, uint32_t size) { result = size; });
  if (!found) return std::nullopt;
  return result;
}

StoreStatus Store::put(std::string_view key, KeyHash hash, std::span<const uint8_t> value,
                       uint32_t executing_core, const ShardPlan& plan) {
  if (value.empty() || value.size() > config_.max_value_size) return StoreStatus::kTooLarge;
  return write(key, hash, value, false, executing_core, plan);
}

StoreStatus Store::remove(std::string_view key, KeyHash hash, uint32_t executing_core,
                          const ShardPlan& plan) {
  return write(key, hash, {}, true, executing_core, plan);
}

StoreStatus Store::write(std::string_view key, KeyHash hash, std::span<const uint8_t> value,
                         bool tombstone, uint32_t executing_core, const ShardPlan& plan) {
  const uint32_t pidx = partition_of(hash);
  Partition& part = *partitions_[pidx];
  const uint32_t master = master_of(pidx);
  const bool crew = plan.is_small_core(master) && executing_core == master;

  std::unique_lock<SpinLock> guard(part.guard, std::defer_lock);
  if (crew) {
    crew_writes_.fetch_add(1, std::memory_order_relaxed);
  } else {
    guard.lock();
    guarded_writes_.fetch_add(1, std::memory_order_relaxed);
  }
  if (config_.audit_writers && executing_core < 64) {
    part.writers.fetch_or(uint64_t{1} << executing_core, std::memory_order_relaxed);
  }

  // A large core may write a partition whose small master writes without the
  // guard, so the odd epoch is taken with a CAS rather than a plain store.
  Bucket& head = part.table[hash.bucket(bucket_mask_ + 1)];
  uint64_t epoch = head.epoch.load(std::memory_order_relaxed);
  for (int spins = 1;; ++spins) {
    if (epoch & 1) {
      cpu_relax();
      if (spins % 1024 == 0) std::this_thread::yield();
      epoch = head.epoch.load(std::memory_order_relaxed);
      continue;
    }
    if (head.epoch.compare_exchange_weak(epoch, epoch + 1, std::memory_order_acquire,
                                         std::memory_order_relaxed)) {
      break;
    }
  }
  std::atomic_thread_fence(std::memory_order_release);

  const uint8_t tag = hash.tag();
  Bucket* last = &head;
  Bucket* free_bucket = nullptr;
  int free_slot = -1;
  Entry* found = nullptr;
  Bucket* found_bucket = nullptr;
  int found_slot = -1;
  for (Bucket* b = &head; b != nullptr; b = b->overflow.load(std::memory_order_relaxed)) {
    last = b;
    for (int s = 0; s < kSlotsPerBucket; ++s) {
      Entry* e = b->slots[s].load(std::memory_order_relaxed);
      if (e == nullptr) {
        if (free_slot < 0) free_bucket = b, free_slot = s;
        continue;
      }
      if (b->tags[s].load(std::memory_order_relaxed) == tag && e->keyhash == hash.value() &&
          e->key() == key) {
        found = e, found_bucket = b, found_slot = s;
        break;
      }
      if (free_slot < 0 && e->size.load(std::memory_order_relaxed) == 0) {
        free_bucket = b, free_slot = s;
      }
    }
    if (found) break;
  }

  auto make_entry = [&]() -> Entry* {
    size_t capacity = (value.size() + 7) & ~size_t{7};
    size_t bytes = sizeof(Entry) + Entry::key_storage(static_cast<uint32_t>(key.size())) + capacity;
    void* mem = part.arena.allocate(bytes, alignof(Entry));
    if (mem == nullptr) return nullptr;
    auto* e = new (mem) Entry{hash.value(), static_cast<uint32_t>(key.size()),
                              static_cast<uint32_t>(capacity), {0}, 0};
    std::memcpy(e->key_data(), key.data(), key.size());
    write_value(*e, value);
    return e;
  };

  StoreStatus status = StoreStatus::kOk;
  if (found != nullptr) {
    if (tombstone) {
      found->size.store(0, std::memory_order_relaxed);
    } else if (value.size() <= found->capacity) {
      write_value(*found, value);
    } else if (Entry* e = make_entry()) {
      found_bucket->slots[found_slot].store(e, std::memory_order_release);
    } else {
      status = StoreStatus::kCapacityExceeded;
    }
  } else if (tombstone) {
    status = StoreStatus::kNotFound;
  } else if (Entry* e = make_entry()) {
    if (free_slot >= 0) {
      free_bucket->tags[free_slot].store(tag, std::memory_order_relaxed);
      free_bucket->slots[free_slot].store(e, std::memory_order_release);
    } else if (void* mem = part.arena.allocate(sizeof(Bucket), alignof(Bucket))) {
      auto* nb = new (mem) Bucket();
      nb->tags[0].store(tag, std::memory_order_relaxed);
      nb->slots[0].store(e, std::memory_order_relaxed);
      last->overflow.store(nb, std::memory_order_release);
      overflow_buckets_.fetch_add(1, std::memory_order_relaxed);
    } else {
      status = StoreStatus::kCapacityExceeded;
    }
  } else {
    status = StoreStatus::kCapacityExceeded;
  }

  head.epoch.store(epoch + 2, std::memory_order_release);
  return status;
}

StoreStats Store::stats() const {
  StoreStats s;
  s.read_retries = counters_.retries.load(std::memory_order_relaxed);
  s.odd_epoch_spins = counters_.spins.load(std::memory_order_relaxed);
  s.unstable_reads = counters_.unstable.load(std::memory_order_relaxed);
  s.guarded_writes = guarded_writes_.load(std::memory_order_relaxed);
  s.crew_writes = crew_writes_.load(std::memory_order_relaxed);
  s.overflow_buckets = overflow_buckets_.load(std::memory_order_relaxed);
  return s;
}

uint64_t Store::writer_mask(uint32_t partition) const {
  return partitions_.at(partition)->writers.load(std::memory_order_relaxed);
}

void Store::for_each_epoch(const std::function<void(uint64_t)>& fn) const {
  for (const auto& part : partitions_) {
    for (uint64_t i = 0; i <= bucket_mask_; ++i) {
      for (const Bucket* b = &part->table[i]; b != nullptr;
           b = b->overflow.load(std::memory_order_acquire)) {
        fn(b->epoch.load(std::memory_order_acquire));
      }
    }
  }
}

void Store::for_each_item(
    const std::function<void(std::string_view key, uint32_t size)>& fn) const {
  for (const auto& part : partitions_) {
    for (uint64_t i = 0; i <= bucket_mask_; ++i) {
      for (const Bucket* b = &part->table[i]; b != nullptr;
           b = b->overflow.load(std::memory_order_acquire)) {
        for (int s = 0; s < kSlotsPerBucket; ++s) {
          const Entry* e = b->slots[s].load(std::memory_order_acquire);
          if (e == nullptr) continue;
          uint32_t size = e->size.load(std::memory_order_relaxed);
          if (size != 0) fn(e->key(), size);
        }
      }
    }
  }
}

}  // namespace minos
