#include "streamcache/attention_ref.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>

namespace streamcache {

ReferenceResult attend_reference(std::span<const LatentFrame> frames, const PositionAssignment& positions,
                                 std::span<const double> query_raw, const StreamConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("reference attention needs at least one frame");
  const std::size_t pairs = query_raw.size() / 2;
  if (query_raw.size() % 2 != 0) throw ConfigError("head_dim must be even");

  // theta_j = base^(-2j/d) = exp(-(2j/d) ln base)
  const double log_base = std::log(cfg.rope_base);
  std::vector<double> theta(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    theta[j] = std::exp(-(2.0 * static_cast<double>(j) / static_cast<double>(query_raw.size())) * log_base);
  }
  auto as_rotated_complex = [&](std::span<const double> x, std::int64_t pos) {
    std::vector<std::complex<double>> z(pairs);
    for (std::size_t j = 0; j < pairs; ++j) {
      z[j] = std::complex<double>(x[2 * j], x[2 * j + 1]) * std::polar(1.0, static_cast<double>(pos) * theta[j]);
    }
    return z;
  };

  const auto qz = as_rotated_complex(query_raw, positions.target_local);
  std::vector<double> logits;
  logits.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.key_raw.size() != query_raw.size()) throw std::invalid_argument("key/query dimension mismatch");
    const auto kz = as_rotated_complex(f.key_raw, positions.local(f.abs_index));
    // Re(q * conj(k)) summed over pairs equals the real dot product.
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < pairs; ++j) acc += qz[j] * std::conj(kz[j]);
    logits.push_back(acc.real() / std::sqrt(static_cast<double>(query_raw.size())));
  }

  const double peak = *std::max_element(logits.begin(), logits.end());
  const double lse =
      peak + std::log(std::accumulate(logits.begin(), logits.end(), 0.0,
                                      [peak](double s, double l) { return s + std::exp(l - peak); }));

  ReferenceResult out;
  out.scores.resize(frames.size());
  out.output.assign(frames.front().value.size(), 0.0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.scores[i] = std::exp(logits[i] - lse);
    for (std::size_t d = 0; d < out.output.size(); ++d) out.output[d] += out.scores[i] * frames[i].value[d];
  }
  return out;
}

StaleKvCache::StaleKvCache(StreamConfig cfg) : inner_(cfg) {}

std::optional<LatentFrame> StaleKvCache::insert(const LatentFrame& frame) {
  const auto& cfg = inner_.config();
  LatentFrame stored = frame;
  // The frame's position when it was itself the generation target.
  const auto local_at_insert = std::min<std::int64_t>(frame.abs_index, cfg.cap_c);
  stored.key_raw = rope_rotate(frame.key_raw, local_at_insert, cfg);
  return inner_.insert(std::move(stored));
}

AttentionResult attend_stale(std::span<const double> query_raw, std::int64_t p_abs_t, const StaleKvCache& cache) {
  const auto& kv = cache.rotated();
  if (kv.empty()) throw std::invalid_argument("attention over an empty cache");
  const auto& cfg = kv.config();
  const auto positions = assign_positions(kv, p_abs_t);
  const auto q = rope_rotate(query_raw, positions.target_local, cfg);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  const auto frames = kv.frames();

  AttentionResult result;
  for (const auto* f : frames) {
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * f->key_raw[d];
    result.scores.push_back(dot * scale);
  }
  const double peak = *std::max_element(result.scores.begin(), result.scores.end());
  double denom = 0.0;
  for (auto& s : result.scores) {
    s = std::exp(s - peak);
    denom += s;
  }
  for (auto& s : result.scores) s /= denom;
  result.output.assign(q.size(), 0.0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t d = 0; d < q.size(); ++d) result.output[d] += result.scores[i] * frames[i]->value[d];
  }
  return result;
}

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::Decoupled: return "decoupled";
    case AttentionVariant::Reference: return "reference";
    case AttentionVariant::Stale: return "stale";
  }
  return "unknown";
}

AttentionVariant parse_attention_variant(const std::string& name) {
  if (name == "decoupled") return AttentionVariant::Decoupled;
  if (name == "reference") return AttentionVariant::Reference;
  if (name == "stale") return AttentionVariant::Stale;
  throw std::invalid_argument("unknown attention variant: " + name);
}

namespace {

RolloutTrace rollout_decoupled(const StreamConfig& cfg, std::uint64_t seed, std::int64_t steps) {
  RolloutTrace trace{seed, steps, {}};
  trace.records.reserve(static_cast<std::size_t>(steps));
  KvCache cache(cfg);
  cache.insert(synth_frame(seed, 0, cfg));
  for (std::int64_t p = 1; p <= steps; ++p) {
    const auto positions = assign_positions(cache, p);
    auto att = attend_decoupled(synth_query(seed, p, cfg), positions, cache);
    RolloutStep rec{p, positions.delta, positions.target_local, {}, {}, std::move(att.scores), std::move(att.output)};
    for (const auto* f : cache.frames()) {
      rec.abs_indices.push_back(f->abs_index);
      rec.locals.push_back(positions.local(f->abs_index));
    }
    trace.records.push_back(std::move(rec));
    cache.insert(synth_frame(seed, p, cfg));
  }
  return trace;
}

RolloutTrace rollout_stale(const StreamConfig& cfg, std::uint64_t seed, std::int64_t steps) {
  RolloutTrace trace{seed, steps, {}};
  trace.records.reserve(static_cast<std::size_t>(steps));
  StaleKvCache cache(cfg);
  cache.insert(synth_frame(seed, 0, cfg));
  for (std::int64_t p = 1; p <= steps; ++p) {
    const auto positions = assign_positions(cache.rotated(), p);
    auto att = attend_stale(synth_query(seed, p, cfg), p, cache);
    RolloutStep rec{p, positions.delta, positions.target_local, {}, {}, std::move(att.scores), std::move(att.output)};
    for (const auto* f : cache.rotated().frames()) {
      rec.abs_indices.push_back(f->abs_index);
      // Effective positions are the insertion-time ones baked into the keys.
      rec.locals.push_back(std::min<std::int64_t>(f->abs_index, cfg.cap_c));
    }
    trace.records.push_back(std::move(rec));
    cache.insert(synth_frame(seed, p, cfg));
  }
  return trace;
}

// Brute force: the live window at step p is {0} plus the last k_recent
// indices below p, and positions come straight from the clamp formula.
RolloutTrace rollout_reference(const StreamConfig& cfg, std::uint64_t seed, std::int64_t steps) {
  RolloutTrace trace{seed, steps, {}};
  trace.records.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t p = 1; p <= steps; ++p) {
    std::vector<LatentFrame> live;
    live.push_back(synth_frame(seed, 0, cfg));
    for (std::int64_t i = std::max<std::int64_t>(1, p - cfg.k_recent); i < p; ++i) live.push_back(synth_frame(seed, i, cfg));

    PositionAssignment positions;
    positions.delta = p > cfg.cap_c ? p - cfg.cap_c : 0;
    positions.target_local = p < cfg.cap_c ? p : cfg.cap_c;
    for (const auto& f : live) {
      positions.local_of[f.abs_index] = std::min(cfg.cap_c, std::max<std::int64_t>(0, f.abs_index - positions.delta));
    }

    auto ref = attend_reference(live, positions, synth_query(seed, p, cfg), cfg);
    RolloutStep rec{p, positions.delta, positions.target_local, {}, {}, std::move(ref.scores), std::move(ref.output)};
    for (const auto& f : live) {
      rec.abs_indices.push_back(f.abs_index);
      rec.locals.push_back(positions.local_of.at(f.abs_index));
    }
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace

RolloutTrace run_rollout(const StreamConfig& cfg, std::uint64_t seed, std::int64_t steps, AttentionVariant variant) {
  validate_config(cfg);
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  switch (variant) {
    case AttentionVariant::Decoupled: return rollout_decoupled(cfg, seed, steps);
    case AttentionVariant::Reference: return rollout_reference(cfg, seed, steps);
    case AttentionVariant::Stale: return rollout_stale(cfg, seed, steps);
  }
  throw std::invalid_argument("unknown attention variant");
}

std::vector<double> step_differences(const RolloutTrace& a, const RolloutTrace& b) {
  if (a.records.size() != b.records.size()) throw std::invalid_argument("trace length mismatch");
  std::vector<double> diffs(a.records.size(), 0.0);
  for (std::size_t s = 0; s < a.records.size(); ++s) {
    const auto& x = a.records[s].output;
    const auto& y = b.records[s].output;
    if (x.size() != y.size()) throw std::invalid_argument("output dimension mismatch at step " + std::to_string(s));
    for (std::size_t d = 0; d < x.size(); ++d) diffs[s] = std::max(diffs[s], std::abs(x[d] - y[d]));
  }
  return diffs;
}

double compare_traces(const RolloutTrace& a, const RolloutTrace& b) {
  const auto diffs = step_differences(a, b);
  return diffs.empty() ? 0.0 : *std::max_element(diffs.begin(), diffs.end());
}

std::string trace_to_jsonl(const RolloutTrace& trace) {
  std::ostringstream os;
  for (std::size_t s = 0; s < trace.records.size(); ++s) {
    const auto& r = trace.records[s];
    nlohmann::json j;
    j["step"] = s + 1;
    j["p_abs"] = r.p_abs_t;
    j["delta"] = r.delta;
    j["target_local"] = r.target_local;
    j["positions"] = r.locals;
    j["max_score"] = r.scores.empty() ? 0.0 : *std::max_element(r.scores.begin(), r.scores.end());
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace streamcache
