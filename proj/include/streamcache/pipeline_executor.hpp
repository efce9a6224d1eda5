#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

namespace streamcache {

/// Bounded FIFO channel between exactly one producer and one consumer.
/// push() blocks while `capacity` items are queued and reports whether it had
/// to wait.
template <typename T>
class BoundedChannel {
 public:
  explicit BoundedChannel(std::size_t capacity) : capacity_(capacity) {}

  struct PushInfo {
    std::size_t occupancy_before = 0;
    bool stalled = false;
  };

  PushInfo push(T item) {
    std::unique_lock lock(mu_);
    PushInfo info{items_.size(), items_.size() >= capacity_};
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    max_occupancy_ = std::max(max_occupancy_, items_.size());
    not_empty_.notify_one();
    return info;
  }

  /// Empty optional once the channel is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }

  [[nodiscard]] std::size_t max_occupancy() const {
    std::lock_guard lock(mu_);
    return max_occupancy_;
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  std::size_t max_occupancy_ = 0;
  bool closed_ = false;
};

struct ExecutorOptions {
  std::int64_t n_chunks = 64;
  std::size_t queue_depth = 2;
  int chunk_latent_frames = 2;
  int overlap_frames = 1;
  // Per-chunk decode delay drawn uniformly from [0, max_decode_delay_us].
  std::int64_t max_decode_delay_us = 200;
  std::int64_t produce_delay_us = 0;
  std::uint64_t seed = 0;
};

struct ExecutorReport {
  std::vector<std::int64_t> emission_indices;
  std::size_t max_queue_occupancy = 0;
  std::size_t stall_count = 0;
  // Every stalled push saw a full queue and every non-stalled push did not.
  bool stalls_match_full_queue = true;
  // Each decoded snapshot matched the latent frames of its chunk even though
  // the producer kept overwriting its working window.
  bool snapshots_intact = true;
};

/// Runs one producer thread and one consumer thread joined by a
/// BoundedChannel of depth `queue_depth`; the calling thread is the writer and
/// reorders by sequence number before emitting.
ExecutorReport run_threaded_pipeline(const ExecutorOptions& opts);

}  // namespace streamcache
