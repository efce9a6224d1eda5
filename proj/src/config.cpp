#include "streamcache/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace streamcache {

StreamConfig validate_config(const StreamConfig& cfg) {
  if (cfg.k_sink <= 0) throw ConfigError("k_sink must be > 0");
  if (cfg.k_sink != 1) throw ConfigError("k_sink must be 1 (single anchor frame at local position 0)");
  if (cfg.k_recent <= 0) throw ConfigError("k_recent must be > 0");
  if (cfg.k_noisy <= 0) throw ConfigError("k_noisy must be > 0");
  if (cfg.cap_c <= 0) throw ConfigError("cap_c must be > 0");
  if (cfg.cap_c < cfg.k_recent) throw ConfigError("cap_c < k_recent");
  if (cfg.tokens_per_frame <= 0) throw ConfigError("tokens_per_frame must be > 0");
  if (cfg.head_dim <= 0) throw ConfigError("head_dim must be > 0");
  if (cfg.head_dim % 2 != 0) throw ConfigError("head_dim must be even");
  if (!(cfg.rope_base > 0.0) || !std::isfinite(cfg.rope_base)) throw ConfigError("rope_base must be a positive finite number");
  if (cfg.temporal_compression <= 0) throw ConfigError("temporal_compression must be > 0");
  if (!(cfg.target_fps > 0.0) || !std::isfinite(cfg.target_fps)) throw ConfigError("target_fps must be a positive finite number");
  return cfg;
}

namespace {

template <typename T>
void read_field(const YAML::Node& node, const char* key, T& out) {
  if (const auto value = node[key]) {
    try {
      out = value.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(std::string("invalid value for ") + key);
    }
  }
}

}  // namespace

StreamConfig parse_stream_config(const std::string& yaml_text, bool validate) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (root.IsNull()) return StreamConfig{};
  if (!root.IsMap()) throw ConfigError("config must be a mapping of StreamConfig fields");

  // A combined config file may nest the stream section.
  YAML::Node node = root["stream"] ? root["stream"] : root;

  static constexpr const char* kKnown[] = {"k_sink",          "k_recent",  "k_noisy",   "cap_c",
                                           "tokens_per_frame", "head_dim",  "rope_base", "temporal_compression",
                                           "target_fps"};
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw ConfigError("unknown config key: " + key);
  }

  StreamConfig cfg;
  read_field(node, "k_sink", cfg.k_sink);
  read_field(node, "k_recent", cfg.k_recent);
  read_field(node, "k_noisy", cfg.k_noisy);
  read_field(node, "cap_c", cfg.cap_c);
  read_field(node, "tokens_per_frame", cfg.tokens_per_frame);
  read_field(node, "head_dim", cfg.head_dim);
  read_field(node, "rope_base", cfg.rope_base);
  read_field(node, "temporal_compression", cfg.temporal_compression);
  read_field(node, "target_fps", cfg.target_fps);
  return validate ? validate_config(cfg) : cfg;
}

StreamConfig load_stream_config(const std::filesystem::path& path, bool validate) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_stream_config(buf.str(), validate);
}

}  // namespace streamcache
