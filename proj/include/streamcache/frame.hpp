#pragma once

#include <cstdint>
#include <vector>

#include "streamcache/config.hpp"

namespace streamcache {

/// One latent frame as held by the KV-cache. `key_raw` never carries a
/// positional rotation; rotation is applied at attention time.
struct LatentFrame {
  std::int64_t abs_index = 0;
  std::vector<double> key_raw;
  std::vector<double> value;

  bool operator==(const LatentFrame&) const = default;
};

/// Deterministic fixture frame: key and value components are uniform in
/// [-1, 1) and depend only on (seed, abs_index, cfg.head_dim).
LatentFrame synth_frame(std::uint64_t seed, std::int64_t abs_index, const StreamConfig& cfg);

/// Deterministic query vector for step `abs_index`, drawn from a stream
/// disjoint from synth_frame's.
std::vector<double> synth_query(std::uint64_t seed, std::int64_t abs_index, const StreamConfig& cfg);

}  // namespace streamcache
