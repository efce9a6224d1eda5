#include "streamcache/state_loop.hpp"

#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "streamcache/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace streamcache {

ParseError::ParseError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::int64_t parse_int(const std::string& text, const char* field, int line) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ParseError(std::string("invalid ") + field + " '" + text + "'", line);
  }
  if (used != text.size()) throw ParseError(std::string("invalid ") + field + " '" + text + "'", line);
  return v;
}

}  // namespace

std::vector<DamageEvent> observe_trace(std::istream& in) {
  std::vector<DamageEvent> events;
  std::map<std::string, std::int64_t> last_window;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line == "window,entity,hit") continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 3) throw ParseError("expected 3 fields (window,entity,hit), got " + std::to_string(fields.size()), line_no);

    DamageEvent ev;
    ev.window_index = parse_int(fields[0], "window", line_no);
    if (ev.window_index < 0) throw ParseError("window must be >= 0", line_no);
    ev.entity = fields[1];
    if (ev.entity.empty()) throw ParseError("empty entity", line_no);
    if (fields[2] == "1") ev.hit = true;
    else if (fields[2] == "0") ev.hit = false;
    else throw ParseError("hit must be 0 or 1, got '" + fields[2] + "'", line_no);

    if (const auto it = last_window.find(ev.entity); it != last_window.end() && ev.window_index < it->second) {
      throw ParseError("window " + std::to_string(ev.window_index) + " for " + ev.entity + " decreases from " +
                           std::to_string(it->second),
                       line_no);
    }
    last_window[ev.entity] = ev.window_index;
    events.push_back(std::move(ev));
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const DamageEvent& a, const DamageEvent& b) { return a.window_index < b.window_index; });
  return events;
}

std::vector<DamageEvent> observe_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file: " + path.string(), 0);
  return observe_trace(in);
}

TrackerState make_tracker(const std::map<std::string, std::int64_t>& initial_hp) {
  TrackerState s;
  for (const auto& [entity, hp] : initial_hp) {
    if (hp < 0) throw std::invalid_argument("initial hp must be >= 0 for " + entity);
    s.hp[entity] = hp;
    s.hits_taken[entity] = 0;
  }
  return s;
}

TrackerState tracker_update(TrackerState state, const DamageEvent& ev) {
  const auto it = state.hp.find(ev.entity);
  if (it == state.hp.end()) throw std::invalid_argument("unknown entity: " + ev.entity);
  if (ev.hit) {
    it->second = std::max<std::int64_t>(0, it->second - 1);
    ++state.hits_taken[ev.entity];
  }
  return state;
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::NormalCombat: return "NormalCombat";
    case Phase::Stagger: return "Stagger";
    case Phase::Execution: return "Execution";
    case Phase::Terminal: return "Terminal";
  }
  return "Unknown";
}

Phase parse_phase(const std::string& name) {
  for (auto p : {Phase::NormalCombat, Phase::Stagger, Phase::Execution, Phase::Terminal}) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown phase: " + name);
}

const EntityPolicy& PolicyTable::entity(const std::string& id) const {
  for (const auto& e : entities) {
    if (e.id == id) return e;
  }
  throw std::invalid_argument("unknown entity: " + id);
}

std::map<std::string, std::int64_t> PolicyTable::initial_hp() const {
  std::map<std::string, std::int64_t> out;
  for (const auto& e : entities) out[e.id] = e.initial_hp;
  return out;
}

void validate_policy(const PolicyTable& table) {
  if (table.entities.empty()) throw std::invalid_argument("policy has no entities");
  std::set<std::string> ids;
  std::set<std::string> labels;
  for (const auto& e : table.entities) {
    if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate entity id: " + e.id);
    if (!labels.insert(e.label).second) throw std::invalid_argument("duplicate entity label: " + e.label);
    if (e.initial_hp < 0) throw std::invalid_argument(e.id + ": initial_hp must be >= 0");
    if (e.rows.empty()) throw std::invalid_argument(e.id + ": no policy rows");
    int terminal_rows = 0;
    for (std::size_t i = 0; i < e.rows.size(); ++i) {
      const auto& row = e.rows[i];
      if (i > 0) {
        if (row.hp_threshold >= e.rows[i - 1].hp_threshold) {
          throw std::invalid_argument(e.id + ": thresholds must be strictly decreasing");
        }
        if (row.phase <= e.rows[i - 1].phase) throw std::invalid_argument(e.id + ": phases must strictly advance");
      }
      if (row.phase == Phase::Terminal) {
        ++terminal_rows;
        if (row.hp_threshold < 0) throw std::invalid_argument(e.id + ": Terminal threshold must be >= 0");
      }
    }
    if (terminal_rows != 1 || e.rows.back().phase != Phase::Terminal) {
      throw std::invalid_argument(e.id + ": exactly one Terminal row is required, as the last row");
    }
  }
}

PolicyTable parse_policy(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("policy parse error: ") + e.what(), 0);
  }
  if (!root.IsMap() || !root["entities"] || !root["entities"].IsSequence()) {
    throw ParseError("policy must contain an 'entities' list", 0);
  }
  PolicyTable table;
  try {
    for (const auto& node : root["entities"]) {
      EntityPolicy e;
      e.id = node["id"].as<std::string>();
      e.label = node["label"] ? node["label"].as<std::string>() : e.id;
      e.initial_hp = node["initial_hp"] ? node["initial_hp"].as<std::int64_t>() : 0;
      for (const auto& r : node["rows"]) {
        PolicyRow row;
        row.hp_threshold = r["threshold"].as<std::int64_t>();
        row.phase = parse_phase(r["phase"].as<std::string>());
        row.action = r["action"].as<std::string>();
        e.rows.push_back(std::move(row));
      }
      table.entities.push_back(std::move(e));
    }
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("policy field error: ") + e.what(), e.mark.line + 1);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 0);
  }
  try {
    validate_policy(table);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 0);
  }
  return table;
}

PolicyTable load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open policy file: " + path.string(), 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_policy(buf.str());
}

const PolicyRow& select_row(const EntityPolicy& policy, std::int64_t hp) {
  const PolicyRow* chosen = &policy.rows.front();
  for (const auto& row : policy.rows) {
    if (row.hp_threshold >= hp) chosen = &row;
  }
  return *chosen;
}

Policy::Policy(PolicyTable table, std::map<std::string, std::int64_t> initial_hp) : table_(std::move(table)) {
  validate_policy(table_);
  for (const auto& e : table_.entities) {
    const auto it = initial_hp.find(e.id);
    const auto hp = it == initial_hp.end() ? e.initial_hp : it->second;
    const auto& row = select_row(e, hp);
    phase_[e.id] = row.phase;
    action_[e.id] = row.action;
  }
}

PolicyDecision Policy::step(const TrackerState& state, const std::string& entity) {
  const auto& policy = table_.entity(entity);
  const auto hp_it = state.hp.find(entity);
  if (hp_it == state.hp.end()) throw std::invalid_argument("tracker has no entry for " + entity);
  const auto& row = select_row(policy, hp_it->second);

  auto& current = phase_.at(entity);
  PolicyDecision decision{current, std::nullopt};
  if (row.phase <= current) return decision;  // stable, or a regression that is clamped away

  current = row.phase;
  action_[entity] = row.action;
  ActionPrompt prompt;
  for (const auto& e : table_.entities) prompt.slots.push_back({e.label, action_.at(e.id)});
  decision.phase = current;
  decision.injection = Injection{entity, current, format_prompt(prompt)};
  return decision;
}

std::vector<Phase> EpisodeLog::phase_sequence(const std::string& entity) const {
  std::vector<Phase> seq;
  for (const auto& w : windows) {
    const auto it = w.phases.find(entity);
    if (it == w.phases.end()) continue;
    if (seq.empty() || seq.back() != it->second) seq.push_back(it->second);
  }
  return seq;
}

EpisodeLog run_episode(const std::vector<DamageEvent>& trace, const PolicyTable& table,
                       const std::map<std::string, std::int64_t>& initial_hp, bool loop_enabled) {
  auto hp = table.initial_hp();
  for (const auto& [id, value] : initial_hp) {
    table.entity(id);  // rejects ids the policy does not cover
    hp[id] = value;
  }
  Policy policy(table, hp);
  TrackerState state = make_tracker(hp);

  std::vector<DamageEvent> events = trace;
  std::stable_sort(events.begin(), events.end(),
                   [](const DamageEvent& a, const DamageEvent& b) { return a.window_index < b.window_index; });

  EpisodeLog log;
  for (std::size_t i = 0; i < events.size();) {
    const auto window = events[i].window_index;
    for (; i < events.size() && events[i].window_index == window; ++i) {
      if (loop_enabled) {
        state = tracker_update(std::move(state), events[i]);
      } else {
        table.entity(events[i].entity);
      }
    }
    WindowRecord rec;
    rec.window_index = window;
    for (const auto& e : table.entities) {
      auto decision = policy.step(state, e.id);
      rec.phases[e.id] = decision.phase;
      if (decision.injection) {
        if (decision.phase == Phase::Terminal && !log.terminal_triggered) {
          log.terminal_triggered = true;
          log.terminal_window = window;
          log.terminal_entity = e.id;
        }
        rec.injections.push_back(std::move(*decision.injection));
      }
    }
    rec.tracker = state;
    log.windows.push_back(std::move(rec));
  }
  log.final_state = state;
  return log;
}

EpisodeLog buffer_false_positives(const std::vector<DamageEvent>& clean_trace,
                                  const std::vector<DamageEvent>& spurious_hits, const PolicyTable& table,
                                  const std::map<std::string, std::int64_t>& initial_hp) {
  std::vector<DamageEvent> merged = clean_trace;
  for (auto ev : spurious_hits) {
    ev.hit = true;
    merged.push_back(std::move(ev));
  }
  return run_episode(merged, table, initial_hp, true);
}

std::string episode_to_jsonl(const EpisodeLog& log) {
  std::ostringstream os;
  for (const auto& w : log.windows) {
    nlohmann::json j;
    j["window"] = w.window_index;
    j["hp"] = w.tracker.hp;
    j["hits_taken"] = w.tracker.hits_taken;
    nlohmann::json phases = nlohmann::json::object();
    for (const auto& [id, p] : w.phases) phases[id] = to_string(p);
    j["phases"] = phases;
    nlohmann::json inj = nlohmann::json::array();
    for (const auto& i : w.injections) inj.push_back({{"entity", i.entity}, {"phase", to_string(i.phase)}, {"prompt", i.prompt}});
    j["injections"] = inj;
    os << j.dump() << '\n';
  }
  nlohmann::json summary;
  summary["summary"] = true;
  summary["windows"] = log.windows.size();
  summary["terminal_triggered"] = log.terminal_triggered;
  summary["terminal_window"] = log.terminal_window ? nlohmann::json(*log.terminal_window) : nlohmann::json(nullptr);
  summary["terminal_entity"] = log.terminal_entity ? nlohmann::json(*log.terminal_entity) : nlohmann::json(nullptr);
  summary["final_hp"] = log.final_state.hp;
  os << summary.dump() << '\n';
  return os.str();
}

}  // namespace streamcache
