#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "streamcache/config.hpp"

namespace streamcache {

/// Dense row-major boolean matrix.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  BoolMatrix(std::size_t rows, std::size_t cols, bool fill = false);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] bool at(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { cells_[r * cols_ + c] = v ? 1 : 0; }
  [[nodiscard]] std::size_t count_true() const;

  /// One line per row of '0'/'1' characters.
  [[nodiscard]] std::string to_string() const;

  bool operator==(const BoolMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// How history tokens attend among themselves, and which visual rows see text.
/// The defaults are the production layout; the others exist for ablations.
enum class HistoryAttention { Bidirectional, Causal };
enum class TextAttention { NoisyOnly, AllFrames };

struct MaskOptions {
  HistoryAttention history = HistoryAttention::Bidirectional;
  TextAttention text = TextAttention::NoisyOnly;
};

struct AttnMasks {
  BoolMatrix self_mask;   // visual x visual
  BoolMatrix cross_mask;  // visual x text
};

// Token layout: sink frames, then recent frames, then noisy frames, each
// frame contributing tokens_per_frame consecutive rows. Only the frame counts
// and tokens_per_frame are read from the config, so k_recent = 0 is accepted
// here even though validate_config rejects it.

/// History rows see all history columns and no noisy column; noisy rows see
/// everything, themselves included.
BoolMatrix build_self_mask(const StreamConfig& cfg, const MaskOptions& opts = {});

/// Noisy-frame rows see every text column; history rows see none. Throws
/// std::invalid_argument when text_len is 0.
BoolMatrix build_cross_mask(const StreamConfig& cfg, std::size_t text_len, const MaskOptions& opts = {});

AttnMasks build_masks(const StreamConfig& cfg, std::size_t text_len, const MaskOptions& opts = {});

/// Single-head masked attention used to check the masks' semantics.
/// Each visual row attends jointly over the visual keys its self-mask row
/// allows and the text keys its cross-mask row allows. All token vectors share
/// one dimension. Returns one output vector per visual token.
std::vector<std::vector<double>> masked_attention_reference(const AttnMasks& masks,
                                                            std::span<const std::vector<double>> visual_q,
                                                            std::span<const std::vector<double>> visual_k,
                                                            std::span<const std::vector<double>> visual_v,
                                                            std::span<const std::vector<double>> text_k,
                                                            std::span<const std::vector<double>> text_v);

}  // namespace streamcache
