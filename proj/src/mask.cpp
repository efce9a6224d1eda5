#include "streamcache/mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace streamcache {

BoolMatrix::BoolMatrix(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), cells_(rows * cols, fill ? 1 : 0) {}

std::size_t BoolMatrix::count_true() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::string BoolMatrix::to_string() const {
  std::string out;
  out.reserve(rows_ * (cols_ + 1));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out += at(r, c) ? '1' : '0';
    out += '\n';
  }
  return out;
}

namespace {

struct Layout {
  std::size_t tpf;
  std::size_t history_tokens;
  std::size_t total_tokens;
};

Layout layout_of(const StreamConfig& cfg) {
  if (cfg.k_sink < 0 || cfg.k_recent < 0) throw std::invalid_argument("frame counts must be >= 0");
  if (cfg.k_noisy <= 0) throw std::invalid_argument("k_noisy must be > 0");
  if (cfg.tokens_per_frame <= 0) throw std::invalid_argument("tokens_per_frame must be > 0");
  const auto tpf = static_cast<std::size_t>(cfg.tokens_per_frame);
  const auto history = static_cast<std::size_t>(cfg.k_sink + cfg.k_recent) * tpf;
  return {tpf, history, history + static_cast<std::size_t>(cfg.k_noisy) * tpf};
}

}  // namespace

BoolMatrix build_self_mask(const StreamConfig& cfg, const MaskOptions& opts) {
  const auto lay = layout_of(cfg);
  BoolMatrix m(lay.total_tokens, lay.total_tokens);
  for (std::size_t r = 0; r < lay.history_tokens; ++r) {
    const std::size_t row_frame = r / lay.tpf;
    for (std::size_t c = 0; c < lay.history_tokens; ++c) {
      const bool visible = opts.history == HistoryAttention::Bidirectional || c / lay.tpf <= row_frame;
      m.set(r, c, visible);
    }
  }
  for (std::size_t r = lay.history_tokens; r < lay.total_tokens; ++r) {
    for (std::size_t c = 0; c < lay.total_tokens; ++c) m.set(r, c, true);
  }
  return m;
}

BoolMatrix build_cross_mask(const StreamConfig& cfg, std::size_t text_len, const MaskOptions& opts) {
  if (text_len == 0) throw std::invalid_argument("text_len must be >= 1");
  const auto lay = layout_of(cfg);
  BoolMatrix m(lay.total_tokens, text_len);
  const std::size_t first_row = opts.text == TextAttention::AllFrames ? 0 : lay.history_tokens;
  for (std::size_t r = first_row; r < lay.total_tokens; ++r) {
    for (std::size_t c = 0; c < text_len; ++c) m.set(r, c, true);
  }
  return m;
}

AttnMasks build_masks(const StreamConfig& cfg, std::size_t text_len, const MaskOptions& opts) {
  return {build_self_mask(cfg, opts), build_cross_mask(cfg, text_len, opts)};
}

std::vector<std::vector<double>> masked_attention_reference(const AttnMasks& masks,
                                                            std::span<const std::vector<double>> visual_q,
                                                            std::span<const std::vector<double>> visual_k,
                                                            std::span<const std::vector<double>> visual_v,
                                                            std::span<const std::vector<double>> text_k,
                                                            std::span<const std::vector<double>> text_v) {
  const auto n = masks.self_mask.rows();
  if (visual_q.size() != n || visual_k.size() != n || visual_v.size() != n) {
    throw std::invalid_argument("visual token count does not match the self mask");
  }
  if (text_k.size() != masks.cross_mask.cols() || text_v.size() != masks.cross_mask.cols()) {
    throw std::invalid_argument("text token count does not match the cross mask");
  }
  const auto dim = n == 0 ? 0 : visual_q.front().size();
  const double scale = dim == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(dim));
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  std::vector<std::vector<double>> out(n, std::vector<double>(dim, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    // (logit, value) for every permitted key; disallowed keys never enter the
    // sum, so masked-out text cannot perturb the row even in the last bit.
    std::vector<std::pair<double, const std::vector<double>*>> terms;
    for (std::size_t c = 0; c < n; ++c) {
      if (masks.self_mask.at(r, c)) terms.emplace_back(dot(visual_q[r], visual_k[c]) * scale, &visual_v[c]);
    }
    for (std::size_t c = 0; c < text_k.size(); ++c) {
      if (masks.cross_mask.at(r, c)) terms.emplace_back(dot(visual_q[r], text_k[c]) * scale, &text_v[c]);
    }
    if (terms.empty()) throw std::invalid_argument("mask row " + std::to_string(r) + " has no visible key");
    double peak = -std::numeric_limits<double>::infinity();
    for (const auto& t : terms) peak = std::max(peak, t.first);
    double denom = 0.0;
    for (auto& t : terms) {
      t.first = std::exp(t.first - peak);
      denom += t.first;
    }
    for (const auto& [w, v] : terms) {
      for (std::size_t d = 0; d < dim; ++d) out[r][d] += (w / denom) * (*v)[d];
    }
  }
  return out;
}

}  // namespace streamcache
