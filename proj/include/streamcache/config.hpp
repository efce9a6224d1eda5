#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace streamcache {

/// Raised when a configuration value violates one of its invariants.
/// The message names the offending field or relation.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structural constants of the streaming context.
///
/// The context seen by each denoising step is `k_sink` anchor frames, the
/// `k_recent` most recent clean frames and `k_noisy` target frames. `cap_c`
/// is the largest local rotary index any frame may receive.
struct StreamConfig {
  int k_sink = 1;
  int k_recent = 7;
  int k_noisy = 1;
  std::int64_t cap_c = 16;
  int tokens_per_frame = 1;
  int head_dim = 16;
  double rope_base = 10000.0;
  int temporal_compression = 4;  // pixel frames per latent frame
  double target_fps = 16.0;      // pixel frames per second

  [[nodiscard]] int history_frames() const { return k_sink + k_recent; }
  [[nodiscard]] int context_frames() const { return k_sink + k_recent + k_noisy; }

  bool operator==(const StreamConfig&) const = default;
};

/// Returns `cfg` unchanged when every invariant holds, otherwise throws
/// ConfigError naming the first violation (checked in declaration order).
StreamConfig validate_config(const StreamConfig& cfg);

/// Reads a YAML mapping whose keys are StreamConfig field names. Missing keys
/// keep their defaults; unknown keys are rejected. The result is validated
/// unless `validate` is false (the check runner reports violations itself).
StreamConfig load_stream_config(const std::filesystem::path& path, bool validate = true);
StreamConfig parse_stream_config(const std::string& yaml_text, bool validate = true);

}  // namespace streamcache
