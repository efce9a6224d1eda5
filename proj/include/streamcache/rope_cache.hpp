#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamcache/config.hpp"
#include "streamcache/frame.hpp"

namespace streamcache {

/// Raised on inserts or queries that break strictly increasing frame order.
class OrderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shift subtracted from absolute indices before clamping:
/// max(0, p_abs_t - cap_c).
std::int64_t compute_delta(std::int64_t p_abs_t, std::int64_t cap_c);

/// Local rotary positions for every cached frame plus the query target.
struct PositionAssignment {
  std::int64_t delta = 0;
  std::int64_t target_local = 0;
  std::map<std::int64_t, std::int64_t> local_of;  // abs_index -> local position

  /// Throws std::out_of_range if `abs_index` has no assigned position.
  [[nodiscard]] std::int64_t local(std::int64_t abs_index) const;
};

/// Sink slot plus a sliding window of at most `k_recent` raw-key frames.
///
/// Frames must arrive with strictly increasing `abs_index`. Absolute index 0
/// fills the sink slot and is never evicted. Once the window is full each
/// insert evicts the oldest non-sink frame.
class KvCache {
 public:
  explicit KvCache(StreamConfig cfg);

  /// Returns the evicted frame, if any. Throws OrderError when
  /// `frame.abs_index` is not greater than every cached index and
  /// std::invalid_argument on a dimension mismatch.
  std::optional<LatentFrame> insert(LatentFrame frame);

  [[nodiscard]] const std::optional<LatentFrame>& sink() const { return sink_; }
  [[nodiscard]] const std::deque<LatentFrame>& recent() const { return recent_; }
  [[nodiscard]] const StreamConfig& config() const { return cfg_; }

  /// Sink first (when present), then recent frames in ascending order.
  [[nodiscard]] std::vector<const LatentFrame*> frames() const;
  [[nodiscard]] std::size_t size() const { return recent_.size() + (sink_ ? 1 : 0); }
  [[nodiscard]] bool empty() const { return size() == 0; }
  [[nodiscard]] std::optional<std::int64_t> max_abs_index() const;

  /// {"sink": bool, "abs_indices": [...]} for debug dumps.
  [[nodiscard]] std::string to_json() const;

 private:
  StreamConfig cfg_;
  std::optional<LatentFrame> sink_;
  std::deque<LatentFrame> recent_;
};

/// Local positions per clamp(abs_i - delta, 0, cap_c); the target sits at
/// min(p_abs_t, cap_c). Throws OrderError unless `p_abs_t` exceeds every
/// cached index.
PositionAssignment assign_positions(const KvCache& cache, std::int64_t p_abs_t);

/// Standard rotary transform on interleaved pairs (2j, 2j+1): pair j turns by
/// position * rope_base^(-2j / head_dim). Throws ConfigError on odd length.
std::vector<double> rope_rotate(std::span<const double> v, std::int64_t position, const StreamConfig& cfg);

struct AttentionResult {
  std::vector<double> scores;  // one per cached frame, order of KvCache::frames()
  std::vector<double> output;
};

/// Softmax attention over the cache with keys rotated on the fly at their
/// current local positions. Stored keys are never modified.
AttentionResult attend_decoupled(std::span<const double> query_raw, std::int64_t p_abs_t, const KvCache& cache);

/// Same as above with a precomputed assignment (which must cover the cache).
AttentionResult attend_decoupled(std::span<const double> query_raw, const PositionAssignment& positions,
                                 const KvCache& cache);

}  // namespace streamcache
