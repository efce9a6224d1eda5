#include "streamcache/prompt.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace streamcache {

std::string format_prompt(const ActionPrompt& prompt) {
  if (prompt.slots.empty()) throw std::invalid_argument("prompt has no slots");
  std::set<std::string> seen;
  std::string out;
  for (const auto& slot : prompt.slots) {
    if (!seen.insert(slot.entity).second) {
      throw std::invalid_argument("duplicate entity in prompt: " + slot.entity);
    }
    if (!out.empty()) out += ' ';
    out += slot.entity;
    out += " performs ";
    out += slot.action;
    out += '.';
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

Vocabulary parse_vocabulary(std::istream& in) {
  Vocabulary vocab;
  std::vector<std::string>* section = nullptr;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    if (text == "[player]") {
      section = &vocab.player;
    } else if (text == "[boss]") {
      section = &vocab.boss;
    } else if (text.front() == '[') {
      throw std::invalid_argument("vocabulary line " + std::to_string(line_no) + ": unknown section " + text);
    } else if (section == nullptr) {
      throw std::invalid_argument("vocabulary line " + std::to_string(line_no) + ": action outside a section");
    } else {
      section->push_back(text);
    }
  }
  return vocab;
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open vocabulary file: " + path.string());
  return parse_vocabulary(in);
}

}  // namespace streamcache
