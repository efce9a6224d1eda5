#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamcache {

/// Malformed trace or policy input. `line()` is 1-based, 0 when not tied to
/// a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line);
  [[nodiscard]] int line() const { return line_; }

 private:
  int line_;
};

struct DamageEvent {
  std::int64_t window_index = 0;  // 0.25 s windows
  std::string entity;
  bool hit = false;

  bool operator==(const DamageEvent&) const = default;
};

/// Observer: reads a scripted CSV trace (`window,entity,hit`, header optional,
/// hit in {0,1}). Window indices must be non-decreasing per entity. The
/// result is stably ordered by window.
std::vector<DamageEvent> observe_trace(std::istream& in);
std::vector<DamageEvent> observe_trace_file(const std::filesystem::path& path);

/// Tracker: per-entity hit points and hit counts. HP only falls.
struct TrackerState {
  std::map<std::string, std::int64_t> hp;
  std::map<std::string, std::int64_t> hits_taken;

  bool operator==(const TrackerState&) const = default;
};

TrackerState make_tracker(const std::map<std::string, std::int64_t>& initial_hp);

/// One hit removes one HP (floored at 0) and counts one hit; a miss is a
/// no-op. Throws std::invalid_argument for an entity the tracker does not know.
TrackerState tracker_update(TrackerState state, const DamageEvent& ev);

enum class Phase { NormalCombat = 0, Stagger = 1, Execution = 2, Terminal = 3 };

std::string to_string(Phase p);
Phase parse_phase(const std::string& name);

struct PolicyRow {
  std::int64_t hp_threshold = 0;  // row applies once hp <= threshold
  Phase phase = Phase::NormalCombat;
  std::string action;  // prompt slot text injected on entering this phase
};

struct EntityPolicy {
  std::string id;     // key used by traces and the tracker
  std::string label;  // name rendered in prompts
  std::int64_t initial_hp = 0;
  std::vector<PolicyRow> rows;  // strictly decreasing thresholds
};

/// Entities in prompt-slot order.
struct PolicyTable {
  std::vector<EntityPolicy> entities;

  const EntityPolicy& entity(const std::string& id) const;
  [[nodiscard]] std::map<std::string, std::int64_t> initial_hp() const;
};

/// Checks thresholds strictly decrease, phases strictly advance, and that
/// exactly one Terminal row exists, last, at a threshold >= 0.
void validate_policy(const PolicyTable& table);

/// YAML: `entities: [{id, label, initial_hp, rows: [{threshold, phase, action}]}]`.
PolicyTable parse_policy(const std::string& yaml_text);
PolicyTable load_policy(const std::filesystem::path& path);

/// Row whose threshold is the lowest one still >= hp; the first row when hp
/// is above every threshold.
const PolicyRow& select_row(const EntityPolicy& policy, std::int64_t hp);

struct Injection {
  std::string entity;
  Phase phase = Phase::NormalCombat;
  std::string prompt;
};

struct PolicyDecision {
  Phase phase = Phase::NormalCombat;
  std::optional<Injection> injection;
};

/// Policy with memory of the phase and slot action per entity. Phases never
/// regress. A prompt is produced exactly when an entity's phase changes; it is
/// the full multi-entity prompt with the transitioning slot updated.
class Policy {
 public:
  /// Starting phases and slot actions come from `initial_hp` (defaults to
  /// the table's values); the starting phase is not an injection.
  explicit Policy(PolicyTable table, std::map<std::string, std::int64_t> initial_hp = {});

  PolicyDecision step(const TrackerState& state, const std::string& entity);

  [[nodiscard]] Phase phase(const std::string& entity) const { return phase_.at(entity); }
  [[nodiscard]] const PolicyTable& table() const { return table_; }

 private:
  PolicyTable table_;
  std::map<std::string, Phase> phase_;
  std::map<std::string, std::string> action_;
};

struct WindowRecord {
  std::int64_t window_index = 0;
  TrackerState tracker;
  std::map<std::string, Phase> phases;
  std::vector<Injection> injections;
};

struct EpisodeLog {
  std::vector<WindowRecord> windows;
  bool terminal_triggered = false;
  std::optional<std::int64_t> terminal_window;
  std::optional<std::string> terminal_entity;
  TrackerState final_state;

  /// Distinct phases entered by `entity`, in order.
  [[nodiscard]] std::vector<Phase> phase_sequence(const std::string& entity) const;
};

/// Feeds the events window by window through Tracker and Policy. With the
/// loop disabled the Tracker is bypassed: HP stays at its initial value and
/// no phase ever changes. `initial_hp` entries override the table's values.
EpisodeLog run_episode(const std::vector<DamageEvent>& trace, const PolicyTable& table,
                       const std::map<std::string, std::int64_t>& initial_hp, bool loop_enabled);

/// Merges spurious Observer hits into a clean trace and runs the loop.
EpisodeLog buffer_false_positives(const std::vector<DamageEvent>& clean_trace,
                                  const std::vector<DamageEvent>& spurious_hits, const PolicyTable& table,
                                  const std::map<std::string, std::int64_t>& initial_hp);

/// One JSON object per window record plus a trailing summary object.
std::string episode_to_jsonl(const EpisodeLog& log);

}  // namespace streamcache
