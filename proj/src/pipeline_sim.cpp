#include "streamcache/pipeline_sim.hpp"

#include <yaml-cpp/yaml.h>

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace streamcache {

std::string to_string(Schedule s) { return s == Schedule::Sequential ? "sequential" : "overlapped"; }

Schedule parse_schedule(const std::string& name) {
  if (name == "sequential") return Schedule::Sequential;
  if (name == "overlapped") return Schedule::Overlapped;
  throw PipelineConfigError("unknown schedule: " + name);
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::Sequential: return "sequential";
    case RunMode::Overlapped: return "overlapped";
    case RunMode::Calibrated: return "calibrated";
  }
  return "unknown";
}

RunMode parse_run_mode(const std::string& name) {
  if (name == "sequential") return RunMode::Sequential;
  if (name == "overlapped") return RunMode::Overlapped;
  if (name == "calibrated") return RunMode::Calibrated;
  throw PipelineConfigError("unknown mode: " + name);
}

PipelineConfig validate_pipeline_config(const PipelineConfig& cfg) {
  auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
  if (cfg.chunk_latent_frames < 1) throw PipelineConfigError("chunk_latent_frames must be >= 1");
  if (cfg.overlap_frames < 0) throw PipelineConfigError("overlap_frames must be >= 0");
  if (cfg.queue_depth < 1) throw PipelineConfigError("queue_depth must be >= 1");
  if (!finite_nonneg(cfg.dit_latency_ms)) throw PipelineConfigError("dit_latency_ms must be >= 0");
  if (!finite_nonneg(cfg.vae_latency_ms)) throw PipelineConfigError("vae_latency_ms must be >= 0");
  if (!finite_nonneg(cfg.write_latency_ms)) throw PipelineConfigError("write_latency_ms must be >= 0");
  if (!std::isfinite(cfg.contention_factor) || cfg.contention_factor < 1.0) {
    throw PipelineConfigError("contention_factor must be >= 1");
  }
  if (cfg.temporal_compression < 1) throw PipelineConfigError("temporal_compression must be >= 1");
  if (!std::isfinite(cfg.target_fps) || cfg.target_fps <= 0.0) throw PipelineConfigError("target_fps must be > 0");
  if (!finite_nonneg(cfg.dit_jitter_ms)) throw PipelineConfigError("dit_jitter_ms must be >= 0");
  if (!finite_nonneg(cfg.vae_jitter_ms)) throw PipelineConfigError("vae_jitter_ms must be >= 0");
  return cfg;
}

double chunk_playback_ms(const PipelineConfig& cfg) {
  return static_cast<double>(cfg.chunk_latent_frames) * cfg.temporal_compression / cfg.target_fps * 1000.0;
}

DerivedMetrics derived_metrics(double throughput_ms, const PipelineConfig& cfg) {
  if (!(throughput_ms > 0.0)) throw std::invalid_argument("throughput must be > 0");
  const double retained = static_cast<double>(cfg.chunk_latent_frames) * cfg.temporal_compression;
  return {retained / throughput_ms * 1000.0, throughput_ms / chunk_playback_ms(cfg)};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-chunk stage costs, jittered deterministically when requested.
struct StageCosts {
  std::vector<double> dit;
  std::vector<double> vae;
};

StageCosts stage_costs(const PipelineConfig& cfg, std::int64_t n) {
  StageCosts costs{std::vector<double>(static_cast<std::size_t>(n), cfg.dit_latency_ms),
                   std::vector<double>(static_cast<std::size_t>(n), cfg.vae_latency_ms)};
  if (cfg.dit_jitter_ms == 0.0 && cfg.vae_jitter_ms == 0.0) return costs;
  std::mt19937_64 rng(cfg.jitter_seed);
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0; };
  for (std::size_t i = 0; i < costs.dit.size(); ++i) {
    costs.dit[i] = std::max(0.0, costs.dit[i] + cfg.dit_jitter_ms * unit());
    costs.vae[i] = std::max(0.0, costs.vae[i] + cfg.vae_jitter_ms * unit());
  }
  return costs;
}

// Producer-side latent window. Every chunk the producer overwrites it and
// bumps the version; decode jobs only ever see cloned snapshots.
struct WorkingWindow {
  std::uint64_t version = 0;
  std::vector<std::int64_t> frames;

  void produce(std::int64_t chunk, int c, int overlap) {
    frames.clear();
    const std::int64_t first_new = chunk * c;
    for (std::int64_t f = std::max<std::int64_t>(0, first_new - overlap); f < first_new + c; ++f) frames.push_back(f);
    ++version;
  }
};

// Two device streams (generator and decoder) that slow each other down by
// `contention` while both are busy. The host drives it by advancing time.
class Device {
 public:
  Device(std::vector<ChunkJob>& jobs, const StageCosts& costs, double contention)
      : jobs_(jobs), costs_(costs), contention_(contention) {}

  [[nodiscard]] double now() const { return now_; }

  void start_generate(std::int64_t chunk) { gen_remaining_ = costs_.dit[static_cast<std::size_t>(chunk)]; }
  [[nodiscard]] bool generating() const { return gen_remaining_.has_value(); }

  void submit_decode(std::int64_t chunk) {
    decode_queue_.push_back(chunk);
    start_next_decode();
  }
  [[nodiscard]] bool decoded(std::int64_t chunk) const { return done_.size() > static_cast<std::size_t>(chunk) && done_[static_cast<std::size_t>(chunk)]; }

  void run_until_generated() {
    while (generating()) step(kInf);
  }
  void run_until_decoded(std::int64_t chunk) {
    while (!decoded(chunk)) step(kInf);
  }
  void run_for(double dt) {
    const double until = now_ + dt;
    while (now_ < until) step(until);
  }

 private:
  void start_next_decode() {
    if (decode_active_ || decode_queue_.empty()) return;
    const auto chunk = decode_queue_.front();
    decode_queue_.pop_front();
    decode_active_ = chunk;
    decode_remaining_ = costs_.vae[static_cast<std::size_t>(chunk)];
    auto& job = jobs_[static_cast<std::size_t>(chunk)];
    job.decode_start_ms = now_;
    // The decoder consumes the cloned snapshot, never the working window.
    job.decoded_version = job.snapshot_version;
    job.decoded_frames = job.snapshot_frames;
  }

  void finish_decode() {
    const auto chunk = *decode_active_;
    jobs_[static_cast<std::size_t>(chunk)].decode_done_ms = now_;
    if (done_.size() <= static_cast<std::size_t>(chunk)) done_.resize(static_cast<std::size_t>(chunk) + 1, false);
    done_[static_cast<std::size_t>(chunk)] = true;
    decode_active_.reset();
    start_next_decode();
  }

  // Advances to the next completion, or to `until` if that comes first.
  void step(double until) {
    const bool both = gen_remaining_ && decode_active_;
    const double rate = both ? 1.0 / contention_ : 1.0;
    const double t_gen = gen_remaining_ ? *gen_remaining_ / rate : kInf;
    const double t_dec = decode_active_ ? decode_remaining_ / rate : kInf;
    const double max_dt = until - now_;
    const double dt = std::min({t_gen, t_dec, max_dt});
    if (dt == kInf) throw std::logic_error("pipeline simulation stalled with no runnable work");
    now_ = dt == max_dt ? until : now_ + dt;
    if (gen_remaining_) {
      if (dt == t_gen) gen_remaining_.reset();
      else *gen_remaining_ -= dt * rate;
    }
    if (decode_active_) {
      if (dt == t_dec) finish_decode();
      else decode_remaining_ -= dt * rate;
    }
  }

  std::vector<ChunkJob>& jobs_;
  const StageCosts& costs_;
  double contention_;
  double now_ = 0.0;
  std::optional<double> gen_remaining_;
  std::optional<std::int64_t> decode_active_;
  double decode_remaining_ = 0.0;
  std::deque<std::int64_t> decode_queue_;
  std::vector<bool> done_;
};

void finalize(SimResult& r, const PipelineConfig& cfg) {
  const auto n = r.jobs.size();
  r.throughput_ms_per_chunk = (r.jobs[n - 1].write_done_ms - r.jobs[0].write_done_ms) / static_cast<double>(n - 1);
  if (r.throughput_ms_per_chunk > 0.0) {
    const auto m = derived_metrics(r.throughput_ms_per_chunk, cfg);
    r.eff_fps = m.eff_fps;
    r.rt_ratio = m.rt_ratio;
  }
  r.vae_input_frames = cfg.overlap_frames + cfg.chunk_latent_frames;
  r.retained_pixel_frames = cfg.chunk_latent_frames * cfg.temporal_compression;
}

SimResult simulate_sequential(const PipelineConfig& cfg, std::int64_t n) {
  const auto costs = stage_costs(cfg, n);
  SimResult r;
  r.jobs.resize(static_cast<std::size_t>(n));
  WorkingWindow window;
  double t = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    auto& job = r.jobs[static_cast<std::size_t>(i)];
    job.index = i;
    job.produce_start_ms = t;
    t += costs.dit[static_cast<std::size_t>(i)];
    job.produce_done_ms = t;
    window.produce(i, cfg.chunk_latent_frames, cfg.overlap_frames);
    job.snapshot_frames = window.frames;
    job.snapshot_version = window.version;
    job.snapshot_taken = true;
    r.submits.push_back({i, t, 0, false});
    job.submit_ms = t;
    r.max_queue_occupancy = std::max<std::size_t>(r.max_queue_occupancy, 1);
    job.decode_start_ms = t;
    job.decoded_version = job.snapshot_version;
    job.decoded_frames = job.snapshot_frames;
    t += costs.vae[static_cast<std::size_t>(i)];
    job.decode_done_ms = t;
    job.write_start_ms = t;
    t += cfg.write_latency_ms;
    job.write_done_ms = t;
    r.emission_indices.push_back(i);
  }
  finalize(r, cfg);
  return r;
}

SimResult simulate_overlapped(const PipelineConfig& cfg, std::int64_t n) {
  const auto costs = stage_costs(cfg, n);
  SimResult r;
  r.jobs.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) r.jobs[static_cast<std::size_t>(i)].index = i;

  Device dev(r.jobs, costs, cfg.contention_factor);
  WorkingWindow window;
  std::deque<std::int64_t> in_flight;  // submitted, not yet written
  std::int64_t next_to_write = 0;
  const auto depth = static_cast<std::size_t>(cfg.queue_depth);

  auto write_oldest = [&] {
    const auto chunk = in_flight.front();
    if (chunk != next_to_write) throw std::logic_error("writer out of order");
    auto& job = r.jobs[static_cast<std::size_t>(chunk)];
    job.write_start_ms = dev.now();
    dev.run_for(cfg.write_latency_ms);
    job.write_done_ms = dev.now();
    r.emission_indices.push_back(chunk);
    in_flight.pop_front();
    ++next_to_write;
  };

  for (std::int64_t i = 0; i < n; ++i) {
    auto& job = r.jobs[static_cast<std::size_t>(i)];
    job.produce_start_ms = dev.now();
    dev.start_generate(i);
    dev.run_until_generated();
    job.produce_done_ms = dev.now();

    window.produce(i, cfg.chunk_latent_frames, cfg.overlap_frames);
    job.snapshot_frames = window.frames;
    job.snapshot_version = window.version;
    job.snapshot_taken = true;

    // Chunks that finished decoding while the host was generating are written
    // before the next hand-off.
    while (!in_flight.empty() && dev.decoded(in_flight.front())) write_oldest();
    const bool full = in_flight.size() >= depth;
    r.submits.push_back({i, dev.now(), in_flight.size(), full});
    while (in_flight.size() >= depth) {
      dev.run_until_decoded(in_flight.front());
      write_oldest();
    }
    job.submit_ms = dev.now();
    in_flight.push_back(i);
    dev.submit_decode(i);
    r.max_queue_occupancy = std::max(r.max_queue_occupancy, in_flight.size());

    while (!in_flight.empty() && dev.decoded(in_flight.front())) write_oldest();
  }
  while (!in_flight.empty()) {
    dev.run_until_decoded(in_flight.front());
    write_oldest();
  }
  finalize(r, cfg);
  return r;
}

}  // namespace

SimResult simulate(const PipelineConfig& cfg, std::int64_t n_chunks) {
  validate_pipeline_config(cfg);
  if (n_chunks < 2) throw std::invalid_argument("n_chunks must be >= 2");
  return cfg.schedule == Schedule::Sequential ? simulate_sequential(cfg, n_chunks)
                                              : simulate_overlapped(cfg, n_chunks);
}

double calibrate_contention(PipelineConfig cfg, double target_throughput_ms, std::int64_t n_chunks, double max_factor,
                            double tol_ms) {
  cfg.schedule = Schedule::Overlapped;
  auto throughput_at = [&](double f) {
    cfg.contention_factor = f;
    return simulate(cfg, n_chunks).throughput_ms_per_chunk;
  };
  double lo = 1.0;
  double hi = max_factor;
  const double t_lo = throughput_at(lo);
  if (target_throughput_ms <= t_lo + tol_ms) {
    if (target_throughput_ms < t_lo - tol_ms) {
      throw std::invalid_argument("target throughput is below the ideal-overlap throughput");
    }
    return lo;
  }
  if (throughput_at(hi) < target_throughput_ms - tol_ms) {
    throw std::invalid_argument("target throughput is not reachable with contention_factor <= max_factor");
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double t = throughput_at(mid);
    if (std::abs(t - target_throughput_ms) <= tol_ms) return mid;
    (t < target_throughput_ms ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

PipelineConfig apply_grid_point(const PipelineConfig& base, const GridPoint& p) {
  PipelineConfig cfg = base;
  if (p.backend) cfg.backend = *p.backend;
  if (p.overlap_frames) cfg.overlap_frames = *p.overlap_frames;
  if (p.queue_depth) cfg.queue_depth = *p.queue_depth;
  if (p.dit_latency_ms) cfg.dit_latency_ms = *p.dit_latency_ms;
  if (p.vae_latency_ms) cfg.vae_latency_ms = *p.vae_latency_ms;
  if (p.write_latency_ms) cfg.write_latency_ms = *p.write_latency_ms;
  if (p.contention_factor) cfg.contention_factor = *p.contention_factor;
  if (p.vae_jitter_ms) cfg.vae_jitter_ms = *p.vae_jitter_ms;
  cfg.schedule = p.mode == RunMode::Sequential ? Schedule::Sequential : Schedule::Overlapped;
  return validate_pipeline_config(cfg);
}

std::vector<SweepRow> sweep(const PipelineConfig& base, const std::vector<GridPoint>& grid, std::int64_t n_chunks) {
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const auto& point : grid) {
    auto cfg = apply_grid_point(base, point);
    if (point.mode == RunMode::Calibrated) {
      if (!point.measured_throughput_ms) throw PipelineConfigError("calibrated mode needs measured_throughput_ms");
      cfg.contention_factor = calibrate_contention(cfg, *point.measured_throughput_ms, n_chunks);
    }
    rows.push_back({cfg, point.mode, point.measured_throughput_ms, simulate(cfg, n_chunks)});
  }
  return rows;
}

namespace {

template <typename T>
void read_opt(const YAML::Node& node, const char* key, std::optional<T>& out) {
  if (const auto v = node[key]) {
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw PipelineConfigError(std::string("invalid value for ") + key);
    }
  }
}

template <typename T>
void read_val(const YAML::Node& node, const char* key, T& out) {
  std::optional<T> tmp;
  read_opt(node, key, tmp);
  if (tmp) out = *tmp;
}

void reject_unknown(const YAML::Node& node, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw PipelineConfigError("unknown key in " + where + ": " + key);
    }
  }
}

}  // namespace

PipelineSpec parse_pipeline_spec(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw PipelineConfigError(std::string("pipeline config parse error: ") + e.what());
  }
  PipelineSpec spec;
  if (root.IsNull()) return spec;
  if (!root.IsMap()) throw PipelineConfigError("pipeline config must be a mapping");
  reject_unknown(root, {"pipeline", "grid", "n_chunks"}, "pipeline file");
  read_val(root, "n_chunks", spec.n_chunks);

  if (const auto p = root["pipeline"]) {
    reject_unknown(p,
                   {"backend", "chunk_latent_frames", "overlap_frames", "queue_depth", "dit_latency_ms",
                    "vae_latency_ms", "write_latency_ms", "schedule", "contention_factor", "temporal_compression",
                    "target_fps", "dit_jitter_ms", "vae_jitter_ms", "jitter_seed"},
                   "pipeline");
    auto& c = spec.base;
    read_val(p, "backend", c.backend);
    read_val(p, "chunk_latent_frames", c.chunk_latent_frames);
    read_val(p, "overlap_frames", c.overlap_frames);
    read_val(p, "queue_depth", c.queue_depth);
    read_val(p, "dit_latency_ms", c.dit_latency_ms);
    read_val(p, "vae_latency_ms", c.vae_latency_ms);
    read_val(p, "write_latency_ms", c.write_latency_ms);
    read_val(p, "contention_factor", c.contention_factor);
    read_val(p, "temporal_compression", c.temporal_compression);
    read_val(p, "target_fps", c.target_fps);
    read_val(p, "dit_jitter_ms", c.dit_jitter_ms);
    read_val(p, "vae_jitter_ms", c.vae_jitter_ms);
    read_val(p, "jitter_seed", c.jitter_seed);
    std::string schedule = to_string(c.schedule);
    read_val(p, "schedule", schedule);
    c.schedule = parse_schedule(schedule);
  }
  validate_pipeline_config(spec.base);

  if (const auto g = root["grid"]) {
    if (!g.IsSequence()) throw PipelineConfigError("grid must be a list");
    for (const auto& item : g) {
      reject_unknown(item,
                     {"backend", "overlap_frames", "queue_depth", "dit_latency_ms", "vae_latency_ms",
                      "write_latency_ms", "contention_factor", "vae_jitter_ms", "measured_throughput_ms", "mode"},
                     "grid point");
      GridPoint gp;
      read_opt(item, "backend", gp.backend);
      read_opt(item, "overlap_frames", gp.overlap_frames);
      read_opt(item, "queue_depth", gp.queue_depth);
      read_opt(item, "dit_latency_ms", gp.dit_latency_ms);
      read_opt(item, "vae_latency_ms", gp.vae_latency_ms);
      read_opt(item, "write_latency_ms", gp.write_latency_ms);
      read_opt(item, "contention_factor", gp.contention_factor);
      read_opt(item, "vae_jitter_ms", gp.vae_jitter_ms);
      read_opt(item, "measured_throughput_ms", gp.measured_throughput_ms);
      std::optional<std::string> mode;
      read_opt(item, "mode", mode);
      gp.mode = mode ? parse_run_mode(*mode)
                     : (spec.base.schedule == Schedule::Sequential ? RunMode::Sequential : RunMode::Overlapped);
      spec.grid.push_back(gp);
    }
  } else {
    GridPoint gp;
    gp.mode = spec.base.schedule == Schedule::Sequential ? RunMode::Sequential : RunMode::Overlapped;
    spec.grid.push_back(gp);
  }
  if (spec.n_chunks < 2) throw PipelineConfigError("n_chunks must be >= 2");
  return spec;
}

PipelineSpec load_pipeline_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineConfigError("cannot open pipeline config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pipeline_spec(buf.str());
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "backend,L,Q,mode,throughput_ms,eff_fps,rt_ratio,max_queue\n";
  os << std::fixed;
  for (const auto& row : rows) {
    const auto& r = row.result;
    os << row.cfg.backend << ',' << row.cfg.overlap_frames << ',' << row.cfg.queue_depth << ',' << to_string(row.mode)
       << ',' << std::setprecision(3) << r.throughput_ms_per_chunk << ',' << std::setprecision(3) << r.eff_fps << ','
       << std::setprecision(4) << r.rt_ratio << ',' << r.max_queue_occupancy << '\n';
  }
  return os.str();
}

std::string sweep_to_jsonl(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  for (const auto& row : rows) {
    const auto& r = row.result;
    nlohmann::json j;
    j["backend"] = row.cfg.backend;
    j["L"] = row.cfg.overlap_frames;
    j["Q"] = row.cfg.queue_depth;
    j["mode"] = to_string(row.mode);
    j["throughput_ms"] = r.throughput_ms_per_chunk;
    j["eff_fps"] = r.eff_fps;
    j["rt_ratio"] = r.rt_ratio;
    j["max_queue"] = r.max_queue_occupancy;
    j["dit_ms"] = row.cfg.dit_latency_ms;
    j["vae_ms"] = row.cfg.vae_latency_ms;
    j["write_ms"] = row.cfg.write_latency_ms;
    j["contention_factor"] = row.cfg.contention_factor;
    j["vae_input_frames"] = r.vae_input_frames;
    j["retained_pixel_frames"] = r.retained_pixel_frames;
    if (row.measured_throughput_ms) j["measured_throughput_ms"] = *row.measured_throughput_ms;
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace streamcache
