#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace streamcache {

struct ActionSlot {
  std::string entity;
  std::string action;

  bool operator==(const ActionSlot&) const = default;
};

/// Per-window multi-entity action prompt. One slot per entity, in the order
/// they are rendered. `window_index` counts 0.25 s latent windows.
struct ActionPrompt {
  std::vector<ActionSlot> slots;
  std::int64_t window_index = 0;
};

/// Renders "<Entity> performs <action>." for each slot, joined by single
/// spaces. Throws std::invalid_argument on an empty slot list or a repeated
/// entity name.
std::string format_prompt(const ActionPrompt& prompt);

/// Per-entity action vocabularies, loaded from a sectioned text file:
///
///     [player]
///     Standing
///     ...
///     [boss]
///     Tail swipe
///
/// Blank lines and lines starting with '#' are ignored.
struct Vocabulary {
  std::vector<std::string> player;
  std::vector<std::string> boss;
};

Vocabulary parse_vocabulary(std::istream& in);
Vocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace streamcache
