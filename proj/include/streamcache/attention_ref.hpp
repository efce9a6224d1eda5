#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "streamcache/config.hpp"
#include "streamcache/frame.hpp"
#include "streamcache/rope_cache.hpp"

namespace streamcache {

// Ground-truth attention and the stale-rotation negative control.
//
// attend_reference shares no code with attend_decoupled: rotation is done in
// complex form with frequencies from exp/log, and normalisation goes through
// log-sum-exp. Agreement between the two is therefore evidence, not tautology.

struct ReferenceResult {
  std::vector<double> scores;
  std::vector<double> output;
};

/// Attention of `query_raw` (at positions.target_local) over `frames`, every
/// key rotated fresh at positions.local(abs_index). Throws std::out_of_range
/// if a frame has no position and std::invalid_argument if `frames` is empty.
ReferenceResult attend_reference(std::span<const LatentFrame> frames, const PositionAssignment& positions,
                                 std::span<const double> query_raw, const StreamConfig& cfg);

/// KV-cache that rotates keys once, at insertion, with the local position the
/// frame held as the generation target (min(abs_index, cap_c)), and never
/// re-rotates them. This is the failure mode raw-key caching avoids.
class StaleKvCache {
 public:
  explicit StaleKvCache(StreamConfig cfg);

  std::optional<LatentFrame> insert(const LatentFrame& frame);
  /// Cached frames whose `key_raw` field holds the insertion-time rotated key.
  [[nodiscard]] const KvCache& rotated() const { return inner_; }

 private:
  KvCache inner_;
};

/// Attention with the query rotated at its current local position but keys
/// used exactly as stored by the stale cache.
AttentionResult attend_stale(std::span<const double> query_raw, std::int64_t p_abs_t, const StaleKvCache& cache);

enum class AttentionVariant { Decoupled, Reference, Stale };

std::string to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(const std::string& name);

struct RolloutStep {
  std::int64_t p_abs_t = 0;
  std::int64_t delta = 0;
  std::int64_t target_local = 0;
  std::vector<std::int64_t> abs_indices;  // attended frames, ascending
  std::vector<std::int64_t> locals;       // local position per attended frame
  std::vector<double> scores;
  std::vector<double> output;
};

struct RolloutTrace {
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  std::vector<RolloutStep> records;
};

/// Streams frames 0..steps through the chosen attention path. Frame 0 is the
/// sink; step p (1..steps) queries with synth_query(seed, p) and then inserts
/// synth_frame(seed, p). The Reference variant tracks its live window
/// directly from the eviction rule instead of going through KvCache.
RolloutTrace run_rollout(const StreamConfig& cfg, std::uint64_t seed, std::int64_t steps, AttentionVariant variant);

/// Per-step max-abs output difference. Throws std::invalid_argument on a
/// length mismatch.
std::vector<double> step_differences(const RolloutTrace& a, const RolloutTrace& b);

/// Max-abs output difference over all steps.
double compare_traces(const RolloutTrace& a, const RolloutTrace& b);

/// One JSON object per step: step, p_abs, delta, target_local, positions,
/// max_score.
std::string trace_to_jsonl(const RolloutTrace& trace);

}  // namespace streamcache
