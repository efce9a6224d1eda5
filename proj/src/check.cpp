#include "streamcache/check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "streamcache/mask.hpp"
#include "streamcache/pipeline_sim.hpp"
#include "streamcache/prompt.hpp"
#include "streamcache/rope_cache.hpp"
#include "streamcache/state_loop.hpp"

namespace streamcache {
namespace {

// A suite returns an empty string on success or a failure description.
using Suite = std::function<std::string()>;

SuiteResult run_suite(const std::string& name, const Suite& suite) {
  try {
    auto failure = suite();
    return {name, failure.empty(), failure.empty() ? "ok" : failure};
  } catch (const std::exception& e) {
    return {name, false, std::string("exception: ") + e.what()};
  }
}

std::string config_suite(const CheckOptions& opts) {
  validate_config(opts.cfg);
  return {};
}

std::string prompt_suite() {
  const auto two = format_prompt({{{"Player", "Roll forward"}, {"Boss", "Tail swipe"}}, 0});
  if (two != "Player performs Roll forward. Boss performs Tail swipe.") return "two-slot template mismatch: " + two;
  ActionPrompt many;
  for (int k = 1; k <= 5; ++k) {
    many.slots.push_back({"E" + std::to_string(k), "act"});
    const auto text = format_prompt(many);
    std::size_t count = 0;
    for (auto pos = text.find(" performs "); pos != std::string::npos; pos = text.find(" performs ", pos + 1)) ++count;
    if (count != static_cast<std::size_t>(k)) return "k-slot segment count mismatch at k=" + std::to_string(k);
  }
  return {};
}

std::string rope_cache_suite(const CheckOptions& opts) {
  const auto& cfg = opts.cfg;
  KvCache cache(cfg);
  cache.insert(synth_frame(opts.seed, 0, cfg));
  const std::int64_t steps = 20000;
  for (std::int64_t p = 1; p <= steps; ++p) {
    const auto pa = assign_positions(cache, p);
    if (pa.local(0) != 0) return "sink not at local 0 at step " + std::to_string(p);
    if (pa.target_local < 0 || pa.target_local > cfg.cap_c) return "target out of range at step " + std::to_string(p);
    for (const auto& [abs, local] : pa.local_of) {
      if (local < 0 || local > cfg.cap_c) return "local out of range at step " + std::to_string(p);
    }
    if (cache.recent().size() == static_cast<std::size_t>(cfg.k_recent)) {
      std::vector<std::int64_t> gaps;
      for (const auto& f : cache.recent()) gaps.push_back(pa.target_local - pa.local(f.abs_index));
      std::sort(gaps.begin(), gaps.end());
      for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (gaps[i] != static_cast<std::int64_t>(i) + 1) return "gap set is not {1..k_recent} at step " + std::to_string(p);
      }
    }
    if (p % 97 == 0) {
      const auto before = cache.frames();
      std::vector<std::vector<double>> keys;
      for (const auto* f : before) keys.push_back(f->key_raw);
      attend_decoupled(synth_query(opts.seed, p, cfg), pa, cache);
      for (std::size_t i = 0; i < before.size(); ++i) {
        if (before[i]->key_raw != keys[i]) return "attention mutated a stored key";
      }
    }
    cache.insert(synth_frame(opts.seed, p, cfg));
    if (cache.size() > static_cast<std::size_t>(cfg.k_sink + cfg.k_recent)) return "memory bound exceeded";
  }
  return {};
}

std::string mask_suite() {
  for (int tpf : {1, 2, 3}) {
    for (int kr : {0, 4, 7}) {
      StreamConfig cfg;
      cfg.k_recent = kr;
      cfg.tokens_per_frame = tpf;
      const std::size_t h = static_cast<std::size_t>(cfg.k_sink + kr);
      const std::size_t kn = static_cast<std::size_t>(cfg.k_noisy);
      const std::size_t t = static_cast<std::size_t>(tpf);
      const auto self = build_self_mask(cfg);
      const auto expect_self = (h * t) * (h * t) + (kn * t) * ((h + kn) * t);
      if (self.count_true() != expect_self) return "self-mask count mismatch";
      const auto cross = build_cross_mask(cfg, 4);
      if (cross.count_true() != kn * t * 4) return "cross-mask count mismatch";
    }
  }
  return {};
}

std::string oracle_suite(const CheckOptions& opts) {
  for (auto [cap, kr] : {std::pair<std::int64_t, int>{16, 7}, {12, 7}, {16, 4}}) {
    auto cfg = opts.cfg;
    cfg.cap_c = cap;
    cfg.k_recent = kr;
    for (std::uint64_t s = opts.seed; s < opts.seed + 3; ++s) {
      const auto candidate = run_rollout(cfg, s, 300, opts.candidate);
      const auto reference = run_rollout(cfg, s, 300, AttentionVariant::Reference);
      const double diff = compare_traces(candidate, reference);
      if (diff > 1e-6) {
        std::ostringstream os;
        os << to_string(opts.candidate) << " vs reference max-abs " << diff << " (C=" << cap << ", Kr=" << kr
           << ", seed " << s << ")";
        return os.str();
      }
    }
  }
  return {};
}

std::string stale_control_suite(const CheckOptions& opts) {
  const auto& cfg = opts.cfg;
  const std::int64_t steps = 200;
  const auto stale = run_rollout(cfg, opts.seed, steps, AttentionVariant::Stale);
  const auto reference = run_rollout(cfg, opts.seed, steps, AttentionVariant::Reference);
  const auto diffs = step_differences(stale, reference);
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    const bool stale_positions = stale.records[i].delta > 0;
    if (!stale_positions && diffs[i] > 1e-6) return "stale variant diverged before any shift";
    if (stale_positions && diffs[i] <= 1e-3) return "stale variant failed to diverge at step " + std::to_string(i + 1);
  }
  return {};
}

std::string pipeline_suite() {
  PipelineConfig cfg;
  cfg.schedule = Schedule::Sequential;
  cfg.dit_latency_ms = 501;
  cfg.vae_latency_ms = 432;
  cfg.write_latency_ms = 37;
  if (simulate(cfg, 10).throughput_ms_per_chunk != 970.0) return "sequential baseline is not 970 ms";
  if (chunk_playback_ms(cfg) != 500.0) return "chunk playback is not 500 ms";

  cfg.schedule = Schedule::Overlapped;
  cfg.queue_depth = 2;
  cfg.vae_jitter_ms = 300;
  cfg.jitter_seed = 7;
  const auto r = simulate(cfg, 200);
  for (std::size_t i = 0; i < r.emission_indices.size(); ++i) {
    if (r.emission_indices[i] != static_cast<std::int64_t>(i)) return "emission out of order";
  }
  if (r.max_queue_occupancy > 2) return "queue occupancy exceeded depth";
  for (const auto& s : r.submits) {
    if (s.stalled != (s.occupancy == 2)) return "stall/occupancy mismatch";
  }
  return {};
}

std::string state_loop_suite() {
  PolicyTable table;
  table.entities.push_back({"boss", "Boss", 10,
                            {{10, Phase::NormalCombat, "Moving forward"},
                             {5, Phase::Stagger, "Staggered"},
                             {0, Phase::Terminal, "Death"}}});
  std::vector<DamageEvent> trace;
  for (int k = 1; k <= 10; ++k) trace.push_back({3 * k, "boss", true});
  const auto on = run_episode(trace, table, {}, true);
  if (!on.terminal_triggered || on.terminal_window != 30) return "terminal not at the 10th hit";
  const auto off = run_episode(trace, table, {}, false);
  if (off.terminal_triggered) return "terminal fired without the loop";
  return {};
}

}  // namespace

std::vector<SuiteResult> run_check_suites(const CheckOptions& opts) {
  std::vector<SuiteResult> results;
  results.push_back(run_suite("config", [&] { return config_suite(opts); }));
  const bool cfg_ok = results.back().passed;
  results.push_back(run_suite("prompt", prompt_suite));
  results.push_back(run_suite("mask", mask_suite));
  if (cfg_ok) {
    results.push_back(run_suite("rope_cache", [&] { return rope_cache_suite(opts); }));
    results.push_back(run_suite("oracle", [&] { return oracle_suite(opts); }));
    results.push_back(run_suite("stale_control", [&] { return stale_control_suite(opts); }));
  } else {
    for (const char* name : {"rope_cache", "oracle", "stale_control"}) results.push_back({name, false, "skipped: invalid config"});
  }
  results.push_back(run_suite("pipeline", pipeline_suite));
  results.push_back(run_suite("state_loop", state_loop_suite));
  return results;
}

}  // namespace streamcache
