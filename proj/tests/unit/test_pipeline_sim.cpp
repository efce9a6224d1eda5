#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "streamcache/pipeline_executor.hpp"
#include "streamcache/pipeline_sim.hpp"

namespace streamcache {
namespace {

PipelineConfig wan(double dit, double vae, int overlap = 3) {
  PipelineConfig cfg;
  cfg.backend = "wan";
  cfg.overlap_frames = overlap;
  cfg.dit_latency_ms = dit;
  cfg.vae_latency_ms = vae;
  cfg.write_latency_ms = 37.0;
  return cfg;
}

std::vector<std::int64_t> iota_indices(std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

TEST(ChunkPlayback, DefaultGeometry) {
  PipelineConfig cfg;
  EXPECT_DOUBLE_EQ(chunk_playback_ms(cfg), 500.0);
  cfg.chunk_latent_frames = 1;
  EXPECT_DOUBLE_EQ(chunk_playback_ms(cfg), 250.0);
  cfg.chunk_latent_frames = 2;
  cfg.target_fps = 32.0;
  EXPECT_DOUBLE_EQ(chunk_playback_ms(cfg), 250.0);
}

TEST(DerivedMetrics, TableRows) {
  const PipelineConfig cfg;
  const auto a = derived_metrics(406.0, cfg);
  EXPECT_NEAR(a.eff_fps, 19.70, 0.01);
  EXPECT_NEAR(a.rt_ratio, 0.812, 1e-3);
  const auto b = derived_metrics(789.0, cfg);
  EXPECT_NEAR(b.eff_fps, 10.14, 0.01);
  EXPECT_NEAR(b.rt_ratio, 1.578, 1e-3);
  const auto c = derived_metrics(500.0, cfg);
  EXPECT_DOUBLE_EQ(c.eff_fps, 16.0);
  EXPECT_DOUBLE_EQ(c.rt_ratio, 1.0);
  EXPECT_THROW(derived_metrics(0.0, cfg), std::invalid_argument);
}

TEST(Simulate, SequentialIsSumOfStages) {
  auto cfg = wan(501, 432);
  cfg.schedule = Schedule::Sequential;
  const auto r = simulate(cfg, 100);
  EXPECT_NEAR(r.throughput_ms_per_chunk, 970.0, 1e-9);
  EXPECT_EQ(r.emission_indices, iota_indices(100));
  EXPECT_EQ(r.vae_input_frames, 5);
  EXPECT_EQ(r.retained_pixel_frames, 8);
}

TEST(Simulate, OverlapFallsInsideBracket) {
  for (auto [dit, vae] : {std::pair{501.0, 432.0}, {504.0, 236.0}, {363.0, 9.0}, {361.0, 9.0}}) {
    const auto cfg = wan(dit, vae);
    const auto r = simulate(cfg, 100);
    EXPECT_LE(r.throughput_ms_per_chunk, dit + vae + 37.0 + 1e-9);
    EXPECT_GE(r.throughput_ms_per_chunk, dit + 37.0 - 1e-9 - (dit + vae + 37.0) / 99.0);
    // Away from the ends writes are spaced by the bottleneck stage plus the write.
    const double steady = (r.jobs[90].write_done_ms - r.jobs[10].write_done_ms) / 80.0;
    EXPECT_NEAR(steady, std::max(dit, vae) + 37.0, 1e-6);
  }
}

// Hand-traced: Q=1 and a 1000 ms decoder. The producer finishes chunk i+1
// long before chunk i decodes, so it stalls every time and each write lands
// one decode later.
TEST(Simulate, SlowDecoderWithSingleSlot) {
  PipelineConfig cfg;
  cfg.queue_depth = 1;
  cfg.dit_latency_ms = 10;
  cfg.vae_latency_ms = 1000;
  cfg.write_latency_ms = 0;
  const auto r = simulate(cfg, 20);
  EXPECT_NEAR(r.throughput_ms_per_chunk, 1000.0, 1e-9);
  EXPECT_EQ(r.max_queue_occupancy, 1u);
  EXPECT_DOUBLE_EQ(r.jobs[0].write_done_ms, 1010.0);
  EXPECT_DOUBLE_EQ(r.jobs[1].write_done_ms, 2010.0);
  for (const auto& s : r.submits) EXPECT_EQ(s.stalled, s.chunk > 0);
}

TEST(Simulate, QueueDepthIrrelevantWithFastDecoder) {
  std::vector<double> t;
  for (int q : {1, 2, 4}) {
    auto cfg = wan(361, 9, 1);
    cfg.queue_depth = q;
    const auto r = simulate(cfg, 100);
    t.push_back(r.throughput_ms_per_chunk);
    EXPECT_LE(r.max_queue_occupancy, 1u);
  }
  EXPECT_NEAR(t[0], t[1], 1e-9);
  EXPECT_NEAR(t[1], t[2], 1e-9);
}

TEST(Simulate, JitterKeepsOrderAndStallRule) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (int q : {1, 2, 3}) {
      auto cfg = wan(300, 400);
      cfg.queue_depth = q;
      cfg.dit_jitter_ms = 250;
      cfg.vae_jitter_ms = 350;
      cfg.jitter_seed = seed;
      const auto r = simulate(cfg, 300);
      EXPECT_EQ(r.emission_indices, iota_indices(300));
      EXPECT_LE(r.max_queue_occupancy, static_cast<std::size_t>(q));
      bool any_stall = false;
      for (const auto& s : r.submits) {
        EXPECT_EQ(s.stalled, s.occupancy == static_cast<std::size_t>(q));
        any_stall = any_stall || s.stalled;
      }
      EXPECT_TRUE(any_stall);
      for (const auto& j : r.jobs) {
        EXPECT_LE(j.produce_done_ms, j.submit_ms);
        EXPECT_LE(j.submit_ms, j.decode_start_ms);
        EXPECT_LE(j.decode_done_ms, j.write_start_ms);
      }
    }
  }
}

TEST(Simulate, DecoderSeesItsOwnSnapshot) {
  auto cfg = wan(100, 450, 3);
  cfg.queue_depth = 3;
  const auto r = simulate(cfg, 50);
  for (const auto& j : r.jobs) {
    ASSERT_TRUE(j.snapshot_taken);
    EXPECT_EQ(j.decoded_version, j.snapshot_version);
    EXPECT_EQ(j.decoded_version, static_cast<std::uint64_t>(j.index + 1));
    std::vector<std::int64_t> expected;
    for (std::int64_t f = std::max<std::int64_t>(0, 2 * j.index - 3); f < 2 * j.index + 2; ++f) expected.push_back(f);
    EXPECT_EQ(j.decoded_frames, expected);
  }
}

TEST(Simulate, RejectsBadInput) {
  EXPECT_THROW(simulate(wan(1, 1), 1), std::invalid_argument);
  auto cfg = wan(1, 1);
  cfg.queue_depth = 0;
  EXPECT_THROW(simulate(cfg, 10), PipelineConfigError);
  cfg = wan(-1, 1);
  EXPECT_THROW(simulate(cfg, 10), PipelineConfigError);
  cfg = wan(1, 1);
  cfg.contention_factor = 0.5;
  EXPECT_THROW(simulate(cfg, 10), PipelineConfigError);
}

TEST(Calibrate, ReproducesMeasuredThroughput) {
  const auto cfg = wan(501, 432);
  const double f = calibrate_contention(cfg, 789.0, 100);
  EXPECT_GT(f, 1.0);
  auto tuned = cfg;
  tuned.contention_factor = f;
  EXPECT_NEAR(simulate(tuned, 100).throughput_ms_per_chunk, 789.0, 1e-3);
  EXPECT_THROW(calibrate_contention(cfg, 100.0, 100), std::invalid_argument);
}

TEST(Sweep, EmptyGridGivesNoRows) { EXPECT_TRUE(sweep(PipelineConfig{}, {}, 10).empty()); }

TEST(Sweep, ShippedTableRowsReproduceMeasurements) {
  const auto spec = load_pipeline_spec(std::string(STREAMCACHE_DATA_DIR) + "/timing_rows.yaml");
  const auto rows = sweep(spec.base, spec.grid, spec.n_chunks);
  ASSERT_EQ(rows.size(), 4u);
  const double expected_fps[] = {10.14, 13.42, 19.56, 19.70};
  const double expected_rt[] = {1.578, 1.192, 0.818, 0.812};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(rows[i].result.throughput_ms_per_chunk, *rows[i].measured_throughput_ms, 1e-3);
    EXPECT_NEAR(rows[i].result.eff_fps, expected_fps[i], 0.01);
    EXPECT_NEAR(rows[i].result.rt_ratio, expected_rt[i], 1e-3);
  }
  const auto csv = sweep_to_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "backend,L,Q,mode,throughput_ms,eff_fps,rt_ratio,max_queue");
}

TEST(Sweep, QueueGridFromFile) {
  const auto spec = load_pipeline_spec(std::string(STREAMCACHE_DATA_DIR) + "/queue_sweep.yaml");
  const auto rows = sweep(spec.base, spec.grid, spec.n_chunks);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].cfg.queue_depth, 1);
  EXPECT_EQ(rows[2].cfg.queue_depth, 4);
  EXPECT_NEAR(rows[0].result.throughput_ms_per_chunk, rows[2].result.throughput_ms_per_chunk, 1e-9);
}

TEST(PipelineSpec, RejectsUnknownKeysAndMissingMeasurement) {
  EXPECT_THROW(parse_pipeline_spec("pipeline: {latency: 3}\n"), PipelineConfigError);
  EXPECT_THROW(parse_pipeline_spec("grid: [{q: 2}]\n"), PipelineConfigError);
  EXPECT_THROW(parse_pipeline_spec("n_chunks: 1\n"), PipelineConfigError);
  const auto spec = parse_pipeline_spec("grid: [{mode: calibrated}]\n");
  EXPECT_THROW(sweep(spec.base, spec.grid, spec.n_chunks), PipelineConfigError);
}

TEST(ThreadedExecutor, EmitsInOrderWithIntactSnapshots) {
  for (std::size_t q : {1u, 2u, 4u}) {
    ExecutorOptions opts;
    opts.n_chunks = 100;
    opts.queue_depth = q;
    opts.seed = q;
    const auto rep = run_threaded_pipeline(opts);
    EXPECT_EQ(rep.emission_indices, iota_indices(100));
    EXPECT_LE(rep.max_queue_occupancy, q);
    EXPECT_TRUE(rep.stalls_match_full_queue);
    EXPECT_TRUE(rep.snapshots_intact);
  }
}

TEST(BoundedChannel, ReportsStallOnlyWhenFull) {
  BoundedChannel<int> ch(2);
  EXPECT_FALSE(ch.push(1).stalled);
  EXPECT_FALSE(ch.push(2).stalled);
  EXPECT_EQ(ch.pop(), 1);
  EXPECT_EQ(ch.push(3).occupancy_before, 1u);
  ch.close();
  EXPECT_EQ(ch.pop(), 2);
  EXPECT_EQ(ch.pop(), 3);
  EXPECT_FALSE(ch.pop().has_value());
  EXPECT_EQ(ch.max_occupancy(), 2u);
}

}  // namespace
}  // namespace streamcache
