#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "streamcache/attention_ref.hpp"

namespace streamcache {
namespace {

StreamConfig cfg_of(std::int64_t cap, int recent) {
  StreamConfig cfg;
  cfg.cap_c = cap;
  cfg.k_recent = recent;
  return cfg;
}

TEST(AttendReference, MatchesDecoupledOnShiftedWindow) {
  const StreamConfig cfg;
  KvCache cache(cfg);
  std::vector<LatentFrame> frames{synth_frame(3, 0, cfg)};
  cache.insert(frames.back());
  for (std::int64_t i = 93; i <= 99; ++i) {
    frames.push_back(synth_frame(3, i, cfg));
    cache.insert(frames.back());
  }
  const auto pa = assign_positions(cache, 100);
  const auto q = synth_query(3, 100, cfg);
  const auto ref = attend_reference(frames, pa, q, cfg);
  const auto dec = attend_decoupled(q, pa, cache);
  ASSERT_EQ(ref.scores.size(), dec.scores.size());
  for (std::size_t i = 0; i < ref.scores.size(); ++i) EXPECT_NEAR(ref.scores[i], dec.scores[i], 1e-12);
  for (std::size_t i = 0; i < ref.output.size(); ++i) EXPECT_NEAR(ref.output[i], dec.output[i], 1e-12);
}

TEST(AttendReference, ZeroQueryGivesUniformWeights) {
  const StreamConfig cfg;
  std::vector<LatentFrame> frames;
  PositionAssignment pa;
  for (std::int64_t i = 0; i < 5; ++i) {
    frames.push_back(synth_frame(1, i, cfg));
    pa.local_of[i] = i;
  }
  pa.target_local = 5;
  const std::vector<double> zero(static_cast<std::size_t>(cfg.head_dim), 0.0);
  const auto r = attend_reference(frames, pa, zero, cfg);
  for (double s : r.scores) EXPECT_NEAR(s, 0.2, 1e-15);
  for (std::size_t d = 0; d < r.output.size(); ++d) {
    double mean = 0.0;
    for (const auto& f : frames) mean += f.value[d] / 5.0;
    EXPECT_NEAR(r.output[d], mean, 1e-14);
  }
}

TEST(AttendReference, RejectsEmptyAndUnpositionedFrames) {
  const StreamConfig cfg;
  const auto q = synth_query(0, 1, cfg);
  EXPECT_THROW(attend_reference({}, PositionAssignment{}, q, cfg), std::invalid_argument);
  const std::vector<LatentFrame> one{synth_frame(0, 4, cfg)};
  EXPECT_THROW(attend_reference(one, PositionAssignment{}, q, cfg), std::out_of_range);
}

TEST(StaleKvCache, RotatesKeyOnceAtInsertion) {
  const StreamConfig cfg;
  StaleKvCache cache(cfg);
  for (std::int64_t i = 0; i <= 20; ++i) cache.insert(synth_frame(0, i, cfg));
  const auto& stored = cache.rotated().recent().back();
  EXPECT_EQ(stored.key_raw, rope_rotate(synth_frame(0, 20, cfg).key_raw, 16, cfg));
  EXPECT_EQ(cache.rotated().sink()->key_raw, synth_frame(0, 0, cfg).key_raw);
}

TEST(Rollout, RejectsNonPositiveSteps) {
  EXPECT_THROW(run_rollout(StreamConfig{}, 0, 0, AttentionVariant::Decoupled), std::invalid_argument);
}

TEST(Rollout, SingleStepAttendsOnlyTheSink) {
  const auto t = run_rollout(StreamConfig{}, 0, 1, AttentionVariant::Decoupled);
  ASSERT_EQ(t.records.size(), 1u);
  EXPECT_EQ(t.records[0].abs_indices, std::vector<std::int64_t>{0});
  EXPECT_DOUBLE_EQ(t.records[0].scores[0], 1.0);
  EXPECT_EQ(t.records[0].output, synth_frame(0, 0, StreamConfig{}).value);
}

TEST(Rollout, RecordsPositionsAndShift) {
  const auto t = run_rollout(StreamConfig{}, 5, 100, AttentionVariant::Decoupled);
  const auto& last = t.records.back();
  EXPECT_EQ(last.p_abs_t, 100);
  EXPECT_EQ(last.delta, 84);
  EXPECT_EQ(last.target_local, 16);
  EXPECT_EQ(last.abs_indices, (std::vector<std::int64_t>{0, 93, 94, 95, 96, 97, 98, 99}));
  EXPECT_EQ(last.locals, (std::vector<std::int64_t>{0, 9, 10, 11, 12, 13, 14, 15}));
}

TEST(Rollout, DecoupledMatchesReferenceAcrossConfigs) {
  for (auto [cap, kr] : {std::pair<std::int64_t, int>{16, 7}, {12, 7}, {16, 4}, {7, 7}}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      const auto cfg = cfg_of(cap, kr);
      const auto a = run_rollout(cfg, seed, 400, AttentionVariant::Decoupled);
      const auto b = run_rollout(cfg, seed, 400, AttentionVariant::Reference);
      EXPECT_LE(compare_traces(a, b), 1e-6) << "cap " << cap << " kr " << kr << " seed " << seed;
      for (std::size_t i = 0; i < a.records.size(); ++i) {
        ASSERT_EQ(a.records[i].abs_indices, b.records[i].abs_indices);
        ASSERT_EQ(a.records[i].locals, b.records[i].locals);
      }
    }
  }
}

TEST(Rollout, StaleRotationAgreesBeforeShiftAndDivergesAfter) {
  for (auto [cap, kr] : {std::pair<std::int64_t, int>{16, 7}, {12, 7}, {16, 4}}) {
    const auto cfg = cfg_of(cap, kr);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto stale = run_rollout(cfg, seed, 200, AttentionVariant::Stale);
      const auto ref = run_rollout(cfg, seed, 200, AttentionVariant::Reference);
      const auto diffs = step_differences(stale, ref);
      double before = 0.0;
      double after = 1e300;
      for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (ref.records[i].delta == 0) before = std::max(before, diffs[i]);
        else after = std::min(after, diffs[i]);
      }
      EXPECT_LE(before, 1e-12);
      EXPECT_GT(after, 1e-3) << "cap " << cap << " kr " << kr << " seed " << seed;
    }
  }
}

TEST(Rollout, CompareRejectsLengthMismatch) {
  const auto a = run_rollout(StreamConfig{}, 0, 5, AttentionVariant::Decoupled);
  const auto b = run_rollout(StreamConfig{}, 0, 6, AttentionVariant::Decoupled);
  EXPECT_THROW(compare_traces(a, b), std::invalid_argument);
}

TEST(Rollout, IsDeterministicPerSeed) {
  const auto a = run_rollout(StreamConfig{}, 9, 50, AttentionVariant::Decoupled);
  const auto b = run_rollout(StreamConfig{}, 9, 50, AttentionVariant::Decoupled);
  EXPECT_EQ(compare_traces(a, b), 0.0);
  EXPECT_EQ(trace_to_jsonl(a), trace_to_jsonl(b));
}

TEST(AttentionVariantNames, RoundTrip) {
  for (auto v : {AttentionVariant::Decoupled, AttentionVariant::Reference, AttentionVariant::Stale})
    EXPECT_EQ(parse_attention_variant(to_string(v)), v);
  EXPECT_THROW(parse_attention_variant("rotated"), std::invalid_argument);
}

}  // namespace
}  // namespace streamcache
