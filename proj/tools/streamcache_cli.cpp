// streamcache: runs cache rollouts, pipeline sweeps, episodes and the
// invariant suites from the command line.
//
// Exit status: 0 success, 1 invariant/assertion failure, 2 usage or parse error.

#include <CLI11.hpp>

#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "streamcache/attention_ref.hpp"
#include "streamcache/check.hpp"
#include "streamcache/config.hpp"
#include "streamcache/pipeline_sim.hpp"
#include "streamcache/rope_cache.hpp"
#include "streamcache/state_loop.hpp"

namespace sc = streamcache;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

enum class Format { Csv, Jsonl };

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  Format format = Format::Jsonl;

  [[nodiscard]] std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("STREAMCACHE_SEED"); env != nullptr && *env != '\0') {
      try {
        return std::stoull(env);
      } catch (const std::exception&) {
        throw CLI::ValidationError("STREAMCACHE_SEED", std::string("not an unsigned integer: ") + env);
      }
    }
    return 0;
  }
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(const RunManifest& m, const std::string& text) {
  if (m.out_path.empty() || m.out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(m.out_path);
  if (!out) throw UsageError("cannot write output file: " + m.out_path);
  out << text;
}

std::string join(const std::vector<std::int64_t>& xs, char sep) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(xs[i]);
  }
  return s;
}

int cmd_cache_rollout(const RunManifest& m, std::int64_t steps) {
  if (steps < 1) throw UsageError("steps must be >= 1");
  const auto cfg = m.config_path.empty() ? sc::validate_config({}) : sc::load_stream_config(m.config_path);
  const auto seed = m.resolved_seed();

  const auto decoupled = sc::run_rollout(cfg, seed, steps, sc::AttentionVariant::Decoupled);
  const auto reference = sc::run_rollout(cfg, seed, steps, sc::AttentionVariant::Reference);
  const auto stale = sc::run_rollout(cfg, seed, steps, sc::AttentionVariant::Stale);
  const auto diff_dec = sc::step_differences(decoupled, reference);
  const auto diff_stale = sc::step_differences(stale, reference);

  std::ostringstream os;
  if (m.format == Format::Csv) os << "step,p_abs,delta,target_local,positions,max_score,diff_decoupled,diff_stale\n";
  std::int64_t max_local = 0;
  double max_stale_post = 0.0;
  std::optional<std::int64_t> stale_onset;
  for (std::size_t i = 0; i < decoupled.records.size(); ++i) {
    const auto& r = decoupled.records[i];
    max_local = std::max({max_local, r.target_local, *std::max_element(r.locals.begin(), r.locals.end())});
    if (r.delta > 0) {
      if (!stale_onset) stale_onset = r.p_abs_t;
      max_stale_post = std::max(max_stale_post, diff_stale[i]);
    }
    const double max_score = *std::max_element(r.scores.begin(), r.scores.end());
    if (m.format == Format::Csv) {
      os << (i + 1) << ',' << r.p_abs_t << ',' << r.delta << ',' << r.target_local << ',' << join(r.locals, ';') << ','
         << max_score << ',' << diff_dec[i] << ',' << diff_stale[i] << '\n';
    } else {
      nlohmann::json j{{"step", i + 1},          {"p_abs", r.p_abs_t},    {"delta", r.delta},
                       {"target_local", r.target_local}, {"positions", r.locals}, {"max_score", max_score},
                       {"diff_decoupled", diff_dec[i]},  {"diff_stale", diff_stale[i]}};
      os << j.dump() << '\n';
    }
  }
  const double max_dec = *std::max_element(diff_dec.begin(), diff_dec.end());
  const bool ok = max_dec <= 1e-6 && max_local <= cfg.cap_c;
  if (m.format == Format::Jsonl) {
    nlohmann::json summary{{"summary", true},
                           {"steps", steps},
                           {"seed", seed},
                           {"cap_c", cfg.cap_c},
                           {"k_recent", cfg.k_recent},
                           {"max_local", max_local},
                           {"max_diff_decoupled", max_dec},
                           {"max_diff_stale_after_shift", max_stale_post},
                           {"stale_onset_step", stale_onset ? nlohmann::json(*stale_onset) : nlohmann::json(nullptr)},
                           {"pass", ok}};
    os << summary.dump() << '\n';
  }
  emit(m, os.str());
  return ok ? kOk : kFailure;
}

int cmd_pipeline(const RunManifest& m, const std::string& mode, std::int64_t n_chunks) {
  if (m.config_path.empty()) throw UsageError("pipeline requires --config <file>");
  auto spec = sc::load_pipeline_spec(m.config_path);
  if (!mode.empty()) {
    const auto forced = sc::parse_run_mode(mode);
    for (auto& p : spec.grid) p.mode = forced;
  }
  if (n_chunks > 0) spec.n_chunks = n_chunks;
  const auto rows = sc::sweep(spec.base, spec.grid, spec.n_chunks);
  emit(m, m.format == Format::Csv ? sc::sweep_to_csv(rows) : sc::sweep_to_jsonl(rows));
  return kOk;
}

int cmd_episode(const RunManifest& m, const std::string& trace_path, const std::string& policy_path,
                std::optional<std::int64_t> hp, bool no_loop, bool expect_terminal) {
  if (trace_path.empty() || policy_path.empty()) throw UsageError("episode requires --trace and --policy");
  const auto trace = sc::observe_trace_file(trace_path);
  const auto table = sc::load_policy(policy_path);
  std::map<std::string, std::int64_t> initial;
  if (hp) {
    for (const auto& e : table.entities) initial[e.id] = *hp;
  }
  const auto log = sc::run_episode(trace, table, initial, !no_loop);

  if (m.format == Format::Csv) {
    std::ostringstream os;
    os << "window,entity,hp,hits_taken,phase,injected_prompt\n";
    for (const auto& w : log.windows) {
      for (const auto& e : table.entities) {
        std::string prompt;
        for (const auto& inj : w.injections) {
          if (inj.entity == e.id) prompt = inj.prompt;
        }
        os << w.window_index << ',' << e.id << ',' << w.tracker.hp.at(e.id) << ',' << w.tracker.hits_taken.at(e.id) << ','
           << sc::to_string(w.phases.at(e.id)) << ",\"" << prompt << "\"\n";
      }
    }
    emit(m, os.str());
  } else {
    emit(m, sc::episode_to_jsonl(log));
  }
  if (expect_terminal && !log.terminal_triggered) return kFailure;
  return kOk;
}

int cmd_check(const RunManifest& m, const std::string& mutate) {
  sc::CheckOptions opts;
  // Read without validating so the config suite can report the violation.
  if (!m.config_path.empty()) opts.cfg = sc::load_stream_config(m.config_path, false);
  opts.seed = m.resolved_seed();
  if (mutate == "stale") opts.candidate = sc::AttentionVariant::Stale;
  else if (!mutate.empty()) throw UsageError("unknown mutation: " + mutate);

  const auto results = sc::run_check_suites(opts);
  std::ostringstream os;
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    if (m.format == Format::Csv) {
      os << r.name << ',' << (r.passed ? "pass" : "fail") << ",\"" << r.detail << "\"\n";
    } else {
      os << nlohmann::json{{"suite", r.name}, {"pass", r.passed}, {"detail", r.detail}}.dump() << '\n';
    }
  }
  emit(m, os.str());
  return all ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounded-RoPE KV-cache, decode pipeline and entity-state experiments"};
  app.require_subcommand(1);

  RunManifest m;
  std::string format = "jsonl";
  auto add_common = [&](CLI::App* sub, bool with_seed) {
    sub->add_option("--config", m.config_path, "Config file (YAML)");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}));
    sub->add_option("--out", m.out_path, "Output file (default: stdout)");
    if (with_seed) sub->add_option("--seed", m.seed, "RNG seed (falls back to STREAMCACHE_SEED, then 0)");
  };

  std::int64_t steps = 1000;
  auto* rollout = app.add_subcommand("cache-rollout", "Decoupled vs reference vs stale attention rollout");
  add_common(rollout, true);
  rollout->add_option("--steps", steps, "Number of query steps");

  std::string mode;
  std::int64_t n_chunks = 0;
  auto* pipeline = app.add_subcommand("pipeline", "Simulate the chunked decode pipeline over a grid");
  add_common(pipeline, false);
  pipeline->add_option("--mode", mode, "Force every grid point to this mode")
      ->check(CLI::IsMember({"sequential", "overlapped", "calibrated"}));
  pipeline->add_option("--n-chunks", n_chunks, "Chunks per simulation (default from config)");

  std::string trace_path;
  std::string policy_path;
  std::optional<std::int64_t> hp;
  bool no_loop = false;
  bool expect_terminal = false;
  auto* episode = app.add_subcommand("episode", "Run the observer/tracker/policy loop over a trace");
  add_common(episode, false);
  episode->add_option("--trace", trace_path, "Damage trace CSV (window,entity,hit)");
  episode->add_option("--policy", policy_path, "Policy table (YAML)");
  episode->add_option("--hp", hp, "Initial HP for every entity (overrides the policy file)");
  episode->add_flag("--no-loop", no_loop, "Bypass the tracker");
  episode->add_flag("--expect-terminal", expect_terminal, "Exit 1 unless a terminal phase is reached");

  std::string mutate;
  auto* check = app.add_subcommand("check", "Run every invariant suite");
  add_common(check, true);
  check->add_option("--mutate", mutate, "Swap in a known-bad component (stale)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  m.format = format == "csv" ? Format::Csv : Format::Jsonl;

  try {
    if (*rollout) return m.subcommand = "cache-rollout", cmd_cache_rollout(m, steps);
    if (*pipeline) return m.subcommand = "pipeline", cmd_pipeline(m, mode, n_chunks);
    if (*episode) return m.subcommand = "episode", cmd_episode(m, trace_path, policy_path, hp, no_loop, expect_terminal);
    if (*check) return m.subcommand = "check", cmd_check(m, mutate);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const sc::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
