#include "streamcache/rope_cache.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace streamcache {

std::int64_t compute_delta(std::int64_t p_abs_t, std::int64_t cap_c) {
  if (p_abs_t < 0) throw std::invalid_argument("p_abs_t must be >= 0");
  return std::max<std::int64_t>(0, p_abs_t - cap_c);
}

std::int64_t PositionAssignment::local(std::int64_t abs_index) const {
  const auto it = local_of.find(abs_index);
  if (it == local_of.end()) throw std::out_of_range("no local position for frame " + std::to_string(abs_index));
  return it->second;
}

KvCache::KvCache(StreamConfig cfg) : cfg_(validate_config(cfg)) {}

std::optional<LatentFrame> KvCache::insert(LatentFrame frame) {
  const auto dim = static_cast<std::size_t>(cfg_.head_dim);
  if (frame.key_raw.size() != dim || frame.value.size() != dim) {
    throw std::invalid_argument("frame vectors must have head_dim entries");
  }
  if (frame.abs_index < 0) throw OrderError("abs_index must be >= 0");
  if (const auto last = max_abs_index(); last && frame.abs_index <= *last) {
    throw OrderError("out-of-order insert: frame " + std::to_string(frame.abs_index) + " after " +
                     std::to_string(*last));
  }
  if (frame.abs_index == 0) {
    sink_ = std::move(frame);
    return std::nullopt;
  }
  recent_.push_back(std::move(frame));
  if (recent_.size() > static_cast<std::size_t>(cfg_.k_recent)) {
    LatentFrame evicted = std::move(recent_.front());
    recent_.pop_front();
    return evicted;
  }
  return std::nullopt;
}

std::vector<const LatentFrame*> KvCache::frames() const {
  std::vector<const LatentFrame*> out;
  out.reserve(size());
  if (sink_) out.push_back(&*sink_);
  for (const auto& f : recent_) out.push_back(&f);
  return out;
}

std::optional<std::int64_t> KvCache::max_abs_index() const {
  if (!recent_.empty()) return recent_.back().abs_index;
  if (sink_) return sink_->abs_index;
  return std::nullopt;
}

std::string KvCache::to_json() const {
  std::ostringstream os;
  os << "{\"sink\":" << (sink_ ? "true" : "false") << ",\"abs_indices\":[";
  bool first = true;
  for (const auto* f : frames()) {
    if (!first) os << ',';
    os << f->abs_index;
    first = false;
  }
  os << "]}";
  return os.str();
}

PositionAssignment assign_positions(const KvCache& cache, std::int64_t p_abs_t) {
  if (const auto last = cache.max_abs_index(); last && p_abs_t <= *last) {
    throw OrderError("query position " + std::to_string(p_abs_t) + " must exceed cached index " +
                     std::to_string(*last));
  }
  const auto cap = cache.config().cap_c;
  PositionAssignment pa;
  pa.delta = compute_delta(p_abs_t, cap);
  pa.target_local = std::clamp<std::int64_t>(p_abs_t - pa.delta, 0, cap);
  for (const auto* f : cache.frames()) {
    pa.local_of.emplace(f->abs_index, std::clamp<std::int64_t>(f->abs_index - pa.delta, 0, cap));
  }
  return pa;
}

std::vector<double> rope_rotate(std::span<const double> v, std::int64_t position, const StreamConfig& cfg) {
  if (v.size() % 2 != 0) throw ConfigError("head_dim must be even");
  const auto dim = static_cast<double>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < v.size() / 2; ++j) {
    const double inv_freq = std::pow(cfg.rope_base, -2.0 * static_cast<double>(j) / dim);
    const double angle = static_cast<double>(position) * inv_freq;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x0 = v[2 * j];
    const double x1 = v[2 * j + 1];
    out[2 * j] = x0 * c - x1 * s;
    out[2 * j + 1] = x0 * s + x1 * c;
  }
  return out;
}

AttentionResult attend_decoupled(std::span<const double> query_raw, std::int64_t p_abs_t, const KvCache& cache) {
  return attend_decoupled(query_raw, assign_positions(cache, p_abs_t), cache);
}

AttentionResult attend_decoupled(std::span<const double> query_raw, const PositionAssignment& positions,
                                 const KvCache& cache) {
  if (cache.empty()) throw std::invalid_argument("attention over an empty cache");
  const auto& cfg = cache.config();
  if (query_raw.size() != static_cast<std::size_t>(cfg.head_dim)) {
    throw std::invalid_argument("query must have head_dim entries");
  }

  const auto q = rope_rotate(query_raw, positions.target_local, cfg);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  const auto frames = cache.frames();

  AttentionResult result;
  result.scores.reserve(frames.size());
  for (const auto* f : frames) {
    const auto k = rope_rotate(f->key_raw, positions.local(f->abs_index), cfg);
    double dot = 0.0;
    for (std::size_t d = 0; d < k.size(); ++d) dot += q[d] * k[d];
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
    for (std::size_t d = 0; d < result.output.size(); ++d) result.output[d] += result.scores[i] * frames[i]->value[d];
  }
  return result;
}

}  // namespace streamcache
