#pragma once

#include <optional>
#include <string>
#include <vector>

#include "streamcache/attention_ref.hpp"
#include "streamcache/config.hpp"

namespace streamcache {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  StreamConfig cfg;  // not pre-validated; the config suite reports violations
  std::uint64_t seed = 0;
  // Attention path checked against the reference; Stale is the mutation check.
  AttentionVariant candidate = AttentionVariant::Decoupled;
};

/// Runs every module's invariant suite with fixed seeds (fast sizes).
std::vector<SuiteResult> run_check_suites(const CheckOptions& opts);

}  // namespace streamcache
