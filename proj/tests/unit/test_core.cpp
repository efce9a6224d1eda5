#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "streamcache/config.hpp"
#include "streamcache/frame.hpp"
#include "streamcache/prompt.hpp"

namespace streamcache {
namespace {

StreamConfig with_cap(int k_recent, std::int64_t cap) {
  StreamConfig cfg;
  cfg.k_recent = k_recent;
  cfg.cap_c = cap;
  return cfg;
}

TEST(ValidateConfig, AcceptsDefaultCap16) { EXPECT_EQ(validate_config(with_cap(7, 16)).cap_c, 16); }

TEST(ValidateConfig, AcceptsCapEqualToWindow) { EXPECT_NO_THROW(validate_config(with_cap(7, 7))); }

TEST(ValidateConfig, RejectsCapBelowWindow) {
  try {
    validate_config(with_cap(7, 6));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "cap_c < k_recent");
  }
}

TEST(ValidateConfig, RejectsOddHeadDim) {
  StreamConfig cfg;
  cfg.head_dim = 15;
  EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(ValidateConfig, RejectsNonPositiveCounts) {
  StreamConfig cfg;
  cfg.tokens_per_frame = 0;
  EXPECT_THROW(validate_config(cfg), ConfigError);
  cfg = {};
  cfg.k_noisy = 0;
  EXPECT_THROW(validate_config(cfg), ConfigError);
  cfg = {};
  cfg.rope_base = -1.0;
  EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(StreamConfigFile, ParsesKnownKeysAndKeepsDefaults) {
  const auto cfg = parse_stream_config("cap_c: 12\nhead_dim: 8\n");
  EXPECT_EQ(cfg.cap_c, 12);
  EXPECT_EQ(cfg.head_dim, 8);
  EXPECT_EQ(cfg.k_recent, 7);
}

TEST(StreamConfigFile, RejectsUnknownKeyAndBadCap) {
  EXPECT_THROW(parse_stream_config("window: 3\n"), ConfigError);
  EXPECT_THROW(parse_stream_config("cap_c: 6\n"), ConfigError);
  EXPECT_EQ(parse_stream_config("cap_c: 6\n", false).cap_c, 6);
}

TEST(StreamConfigFile, LoadsShippedDefaults) {
  const auto cfg = load_stream_config(std::string(STREAMCACHE_DATA_DIR) + "/stream.yaml");
  EXPECT_EQ(cfg, StreamConfig{});
}

TEST(SynthFrame, IsDeterministic) {
  const StreamConfig cfg;
  EXPECT_EQ(synth_frame(0, 5, cfg), synth_frame(0, 5, cfg));
}

TEST(SynthFrame, DependsOnSeedAndIndex) {
  const StreamConfig cfg;
  const auto base = synth_frame(0, 5, cfg);
  EXPECT_NE(base.key_raw, synth_frame(1, 5, cfg).key_raw);
  EXPECT_NE(base.key_raw, synth_frame(0, 6, cfg).key_raw);
  EXPECT_NE(base.value, synth_frame(0, 6, cfg).value);
}

TEST(SynthFrame, ShapeAndRange) {
  StreamConfig cfg;
  cfg.head_dim = 32;
  const auto f = synth_frame(3, 11, cfg);
  EXPECT_EQ(f.abs_index, 11);
  ASSERT_EQ(f.key_raw.size(), 32u);
  for (double x : f.key_raw) {
    EXPECT_GE(x, -1.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_THROW(synth_frame(0, -1, cfg), std::invalid_argument);
}

TEST(FormatPrompt, TwoSlotTemplate) {
  const ActionPrompt p{{{"Player", "Roll forward"}, {"Boss", "Tail swipe"}}, 0};
  EXPECT_EQ(format_prompt(p), "Player performs Roll forward. Boss performs Tail swipe.");
}

TEST(FormatPrompt, SingleSlot) {
  EXPECT_EQ(format_prompt({{{"Player", "Standing"}}, 3}), "Player performs Standing.");
}

TEST(FormatPrompt, ThreeSlotsInOrder) {
  const ActionPrompt p{{{"Player", "Standing"}, {"Boss", "Staff slam"}, {"Ally", "Move left"}}, 0};
  EXPECT_EQ(format_prompt(p), "Player performs Standing. Boss performs Staff slam. Ally performs Move left.");
}

TEST(FormatPrompt, RejectsEmptyAndDuplicateSlots) {
  EXPECT_THROW(format_prompt({}), std::invalid_argument);
  EXPECT_THROW(format_prompt({{{"Boss", "a"}, {"Boss", "b"}}, 0}), std::invalid_argument);
}

// Random slot lists: k slots give k " performs " segments, and distinct lists
// (without embedded "performs" text) render distinctly.
TEST(FormatPrompt, SegmentCountAndInjectivityProperty) {
  std::mt19937 rng(1234);
  const std::vector<std::string> words = {"Roll", "forward", "Tail", "swipe", "Staff", "slam", "X-shaped", "slash"};
  auto random_text = [&] {
    std::string s = words[rng() % words.size()];
    const int extra = static_cast<int>(rng() % 3);
    for (int i = 0; i < extra; ++i) s += " " + words[rng() % words.size()];
    return s;
  };
  std::map<std::string, std::vector<ActionSlot>> seen;
  for (int trial = 0; trial < 500; ++trial) {
    ActionPrompt p;
    const int k = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < k; ++i) p.slots.push_back({"E" + std::to_string(i) + random_text().substr(0, 1), random_text()});
    bool unique = true;
    for (std::size_t i = 0; i < p.slots.size(); ++i)
      for (std::size_t j = i + 1; j < p.slots.size(); ++j) unique = unique && p.slots[i].entity != p.slots[j].entity;
    if (!unique) continue;
    const auto text = format_prompt(p);
    std::size_t count = 0;
    for (auto pos = text.find(" performs "); pos != std::string::npos; pos = text.find(" performs ", pos + 1)) ++count;
    EXPECT_EQ(count, static_cast<std::size_t>(k));
    const auto [it, inserted] = seen.emplace(text, p.slots);
    if (!inserted) EXPECT_EQ(it->second, p.slots) << text;
  }
}

TEST(Vocabulary, ShippedFileHasPlayerAndJointBossSizes) {
  const auto vocab = load_vocabulary(std::string(STREAMCACHE_DATA_DIR) + "/vocabulary.txt");
  EXPECT_EQ(vocab.player.size(), 13u);
  EXPECT_EQ(vocab.boss.size(), 47u);
  std::set<std::string> unique(vocab.boss.begin(), vocab.boss.end());
  EXPECT_EQ(unique.size(), vocab.boss.size());
}

TEST(Vocabulary, RejectsActionsOutsideSections) {
  std::istringstream in("Standing\n");
  EXPECT_THROW(parse_vocabulary(in), std::invalid_argument);
  std::istringstream bad("[npc]\nWave\n");
  EXPECT_THROW(parse_vocabulary(bad), std::invalid_argument);
}

}  // namespace
}  // namespace streamcache
