#include "streamcache/frame.hpp"

#include <stdexcept>

namespace streamcache {
namespace {

constexpr std::uint64_t kKeyStream = 0x6b6579;    // "key"
constexpr std::uint64_t kQueryStream = 0x717279;  // "qry"

// Counter-based splitmix64 stream keyed on (seed, index, stream): any frame
// can be regenerated directly without replaying the frames before it.
class FrameRng {
 public:
  FrameRng(std::uint64_t seed, std::int64_t abs_index, std::uint64_t stream)
      : state_(mix(seed ^ mix(static_cast<std::uint64_t>(abs_index) ^ mix(stream)))) {}

  // Top 53 bits mapped to [-1, 1).
  double next_unit() {
    const auto bits = next() >> 11;
    return static_cast<double>(bits) * 0x1.0p-52 - 1.0;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  std::uint64_t state_;
};

}  // namespace

LatentFrame synth_frame(std::uint64_t seed, std::int64_t abs_index, const StreamConfig& cfg) {
  if (abs_index < 0) throw std::invalid_argument("abs_index must be >= 0");
  FrameRng rng(seed, abs_index, kKeyStream);
  LatentFrame frame;
  frame.abs_index = abs_index;
  const auto dim = static_cast<std::size_t>(cfg.head_dim);
  frame.key_raw.resize(dim);
  frame.value.resize(dim);
  for (auto& k : frame.key_raw) k = rng.next_unit();
  for (auto& v : frame.value) v = rng.next_unit();
  return frame;
}

std::vector<double> synth_query(std::uint64_t seed, std::int64_t abs_index, const StreamConfig& cfg) {
  if (abs_index < 0) throw std::invalid_argument("abs_index must be >= 0");
  FrameRng rng(seed, abs_index, kQueryStream);
  std::vector<double> q(static_cast<std::size_t>(cfg.head_dim));
  for (auto& x : q) x = rng.next_unit();
  return q;
}

}  // namespace streamcache
