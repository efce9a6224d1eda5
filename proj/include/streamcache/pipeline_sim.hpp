#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamcache {

class PipelineConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Schedule { Sequential, Overlapped };

std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& name);

/// Stage latencies and geometry of the chunked generate -> decode -> write
/// pipeline. Latencies are per-chunk averages replayed by the simulator.
struct PipelineConfig {
  std::string backend = "wan";
  int chunk_latent_frames = 2;  // new latent frames per chunk
  int overlap_frames = 1;       // preceding latents prepended to each decode
  int queue_depth = 2;          // max submitted-but-unwritten chunks
  double dit_latency_ms = 0.0;
  double vae_latency_ms = 0.0;
  double write_latency_ms = 0.0;
  Schedule schedule = Schedule::Overlapped;
  // Both device stages run this many times slower while co-resident.
  double contention_factor = 1.0;
  int temporal_compression = 4;
  double target_fps = 16.0;
  // Optional per-chunk uniform jitter (+/- ms) on each stage, seeded.
  double dit_jitter_ms = 0.0;
  double vae_jitter_ms = 0.0;
  std::uint64_t jitter_seed = 0;
};

PipelineConfig validate_pipeline_config(const PipelineConfig& cfg);

/// Per-chunk record of the simulated timeline (all times in ms).
struct ChunkJob {
  std::int64_t index = 0;
  double produce_start_ms = 0.0;
  double produce_done_ms = 0.0;
  double submit_ms = 0.0;
  double decode_start_ms = 0.0;
  double decode_done_ms = 0.0;
  double write_start_ms = 0.0;
  double write_done_ms = 0.0;
  bool snapshot_taken = false;
  // Version of the producer's working latent window when the snapshot was
  // cut, and the version the decoder actually consumed.
  std::uint64_t snapshot_version = 0;
  std::uint64_t decoded_version = 0;
  std::vector<std::int64_t> snapshot_frames;  // latent indices in the decode input
  std::vector<std::int64_t> decoded_frames;
};

/// A submission attempt by the producer. It stalls iff the in-flight queue
/// is full at the moment of the attempt.
struct SubmitAttempt {
  std::int64_t chunk = 0;
  double time_ms = 0.0;
  std::size_t occupancy = 0;
  bool stalled = false;
};

struct SimResult {
  double throughput_ms_per_chunk = 0.0;  // mean inter-write interval, chunks 2..n
  double eff_fps = 0.0;
  double rt_ratio = 0.0;
  std::size_t max_queue_occupancy = 0;
  std::vector<std::int64_t> emission_indices;
  int vae_input_frames = 0;
  int retained_pixel_frames = 0;
  std::vector<ChunkJob> jobs;
  std::vector<SubmitAttempt> submits;
};

/// Playback duration of one chunk: C * temporal_compression / fps seconds.
double chunk_playback_ms(const PipelineConfig& cfg);

struct DerivedMetrics {
  double eff_fps = 0.0;
  double rt_ratio = 0.0;
};

/// Throws std::invalid_argument for non-positive throughput.
DerivedMetrics derived_metrics(double throughput_ms, const PipelineConfig& cfg);

/// Replays `n_chunks` chunks through the configured schedule. Requires
/// n_chunks >= 2. Backpressure stalls the producer; it never fails.
SimResult simulate(const PipelineConfig& cfg, std::int64_t n_chunks);

/// Smallest contention factor in [1, max_factor] whose overlapped throughput
/// reaches `target_throughput_ms` (bisection to `tol_ms`). Throws
/// std::invalid_argument if the target lies outside the reachable range.
double calibrate_contention(PipelineConfig cfg, double target_throughput_ms, std::int64_t n_chunks,
                            double max_factor = 8.0, double tol_ms = 1e-6);

enum class RunMode { Sequential, Overlapped, Calibrated };

std::string to_string(RunMode m);
RunMode parse_run_mode(const std::string& name);

/// One sweep point: overrides applied on top of the base config.
struct GridPoint {
  std::optional<std::string> backend;
  std::optional<int> overlap_frames;
  std::optional<int> queue_depth;
  std::optional<double> dit_latency_ms;
  std::optional<double> vae_latency_ms;
  std::optional<double> write_latency_ms;
  std::optional<double> contention_factor;
  std::optional<double> vae_jitter_ms;
  // Measured throughput; required by Calibrated mode.
  std::optional<double> measured_throughput_ms;
  RunMode mode = RunMode::Overlapped;
};

struct SweepRow {
  PipelineConfig cfg;
  RunMode mode = RunMode::Overlapped;
  std::optional<double> measured_throughput_ms;
  SimResult result;
};

PipelineConfig apply_grid_point(const PipelineConfig& base, const GridPoint& point);

std::vector<SweepRow> sweep(const PipelineConfig& base, const std::vector<GridPoint>& grid, std::int64_t n_chunks);

/// Pipeline file: optional `pipeline:` mapping of PipelineConfig keys, optional
/// `grid:` list of GridPoint mappings, optional `n_chunks:`.
struct PipelineSpec {
  PipelineConfig base;
  std::vector<GridPoint> grid;
  std::int64_t n_chunks = 100;
};

PipelineSpec parse_pipeline_spec(const std::string& yaml_text);
PipelineSpec load_pipeline_spec(const std::filesystem::path& path);

/// Columns: backend,L,Q,mode,throughput_ms,eff_fps,rt_ratio,max_queue.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
/// Same fields plus contention_factor, dit/vae/write and measured throughput.
std::string sweep_to_jsonl(const std::vector<SweepRow>& rows);

}  // namespace streamcache
