#include "webstar/trajectory.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include "webstar/util.hpp"

namespace webstar {

using nlohmann::json;

namespace {

[[noreturn]] void schema_fail(const std::string& what) {
  throw DatasetError(DatasetError::Kind::schema, 0, what);
}

const json& require(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) schema_fail(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) schema_fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

json extras_of(const json& j, const std::set<std::string>& known) {
  json extra = json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) extra[it.key()] = it.value();
  }
  return extra;
}

std::map<std::string, std::string> string_map(const json& j, const char* key) {
  std::map<std::string, std::string> out;
  const auto it = j.find(key);
  if (it == j.end()) return out;
  if (!it->is_object()) schema_fail(std::string("field '") + key + "' must be an object");
  for (auto kv = it->begin(); kv != it->end(); ++kv) {
    if (!kv->is_string()) schema_fail(std::string("field '") + key + "' values must be strings");
    out[kv.key()] = kv->get<std::string>();
  }
  return out;
}

template <typename Enum, std::size_t N>
Enum enum_from(const json& j, const char* key, const std::array<std::pair<const char*, Enum>, N>& table) {
  const auto s = require_string(j, key);
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  schema_fail(std::string("unknown value '") + s + "' for field '" + key + "'");
}

constexpr std::array<std::pair<const char*, TrajectorySource>, 2> kSources{{
    {"sim", TrajectorySource::sim},
    {"ingested", TrajectorySource::ingested},
}};

constexpr std::array<std::pair<const char*, Terminal>, 3> kTerminals{{
    {"finished", Terminal::finished},
    {"step_cap_reached", Terminal::step_cap_reached},
    {"aborted", Terminal::aborted},
}};

const std::set<std::string> kStepKeys = {"index",       "observation", "thought",  "action",
                                         "grade",       "grade_error", "annotated_observation",
                                         "metadata"};
const std::set<std::string> kTrajKeys = {"schema_version", "id",      "instruction", "source",
                                         "steps",          "terminal", "success",     "max_steps",
                                         "metadata"};

}  // namespace

Step& Trajectory::append(Step step) {
  if (full()) {
    throw TrajectoryError("trajectory '" + id + "' is at its step cap of " + std::to_string(max_steps));
  }
  if (ended_with_finished()) throw TrajectoryError("cannot append after a finished action");
  step.index = static_cast<int>(steps.size());
  steps.push_back(std::move(step));
  return steps.back();
}

bool Trajectory::ended_with_finished() const {
  return !steps.empty() && steps.back().action.kind == ActionKind::finished;
}

void Trajectory::check_invariants() const {
  if (max_steps <= 0) throw TrajectoryError("max_steps must be positive");
  if (static_cast<int>(steps.size()) > max_steps) throw TrajectoryError("more steps than max_steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (s.index != static_cast<int>(i)) throw TrajectoryError("step index does not match position");
    if (s.grade && (s.grade->score < 0 || s.grade->score > 10)) {
      throw TrajectoryError("score outside 0..10 at step " + std::to_string(i));
    }
    if (s.action.kind == ActionKind::finished && i + 1 != steps.size()) {
      throw TrajectoryError("finished action is not the last step");
    }
  }
}

ContextWindow make_context(const Trajectory& traj, int n, int window) {
  if (n < 0 || n >= static_cast<int>(traj.steps.size())) {
    throw std::out_of_range("step index " + std::to_string(n) + " outside trajectory of " +
                            std::to_string(traj.steps.size()) + " steps");
  }
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  ContextWindow ctx;
  ctx.instruction = traj.instruction;
  ctx.target_index = n;
  ctx.history.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ctx.history.push_back({traj.steps[i].thought, traj.steps[i].action});
  for (int i = std::max(0, n - window + 1); i <= n; ++i) ctx.images.push_back(traj.steps[i].observation);
  return ctx;
}

std::string_view to_string(TrajectorySource s) { return kSources[static_cast<std::size_t>(s)].first; }
std::string_view to_string(Terminal t) { return kTerminals[static_cast<std::size_t>(t)].first; }

json to_json(const Thought& t) {
  json j = {{"raw", t.raw},
            {"situation", t.situation},
            {"reasoning", t.reasoning},
            {"instruction", t.instruction}};
  if (!t.missing.empty()) j["missing"] = t.missing;
  return j;
}

Thought thought_from_json(const json& j) {
  if (!j.is_object()) schema_fail("thought must be an object");
  Thought t;
  t.raw = require_string(j, "raw");
  t.situation = j.value("situation", "");
  t.reasoning = j.value("reasoning", "");
  t.instruction = j.value("instruction", "");
  if (j.contains("missing")) t.missing = j.at("missing").get<std::vector<std::string>>();
  return t;
}

json to_json(const Trajectory& traj) {
  json steps = json::array();
  for (const auto& s : traj.steps) {
    json js = s.extra;
    js["index"] = s.index;
    js["observation"] = s.observation;
    js["action"] = serialize_action(s.action);
    if (s.thought) js["thought"] = to_json(*s.thought);
    if (s.grade) {
      js["grade"] = {{"score", s.grade->score},
                     {"rationale", s.grade->rationale},
                     {"grader_id", s.grade->grader_id}};
    }
    if (s.grade_error) js["grade_error"] = *s.grade_error;
    if (s.annotated_observation) js["annotated_observation"] = *s.annotated_observation;
    if (!s.metadata.empty()) js["metadata"] = s.metadata;
    steps.push_back(std::move(js));
  }
  json j = traj.extra;
  j["schema_version"] = kTrajectorySchema;
  j["id"] = traj.id;
  j["instruction"] = traj.instruction;
  j["source"] = to_string(traj.source);
  j["terminal"] = to_string(traj.terminal);
  j["max_steps"] = traj.max_steps;
  j["success"] = traj.success ? json(*traj.success) : json(nullptr);
  if (!traj.metadata.empty()) j["metadata"] = traj.metadata;
  j["steps"] = std::move(steps);
  return j;
}

Trajectory trajectory_from_json(const json& j) {
  if (!j.is_object()) schema_fail("trajectory line must be a JSON object");
  const auto version = require_string(j, "schema_version");
  if (version != kTrajectorySchema) {
    schema_fail("schema_version '" + version + "' does not match '" + kTrajectorySchema + "'");
  }
  Trajectory t;
  t.id = require_string(j, "id");
  t.instruction = require_string(j, "instruction");
  t.source = enum_from(j, "source", kSources);
  t.terminal = enum_from(j, "terminal", kTerminals);
  const auto& max_steps = require(j, "max_steps");
  if (!max_steps.is_number_integer()) schema_fail("max_steps must be an integer");
  t.max_steps = max_steps.get<int>();
  if (const auto it = j.find("success"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) schema_fail("success must be a boolean or null");
    t.success = it->get<bool>();
  }
  t.metadata = string_map(j, "metadata");
  t.extra = extras_of(j, kTrajKeys);

  const auto& steps = require(j, "steps");
  if (!steps.is_array()) schema_fail("steps must be an array");
  for (const auto& js : steps) {
    if (!js.is_object()) schema_fail("step must be an object");
    Step s;
    const auto& index = require(js, "index");
    if (!index.is_number_integer()) schema_fail("step index must be an integer");
    s.index = index.get<int>();
    s.observation = require_string(js, "observation");
    try {
      s.action = parse_action(require_string(js, "action"));
    } catch (const ActionParseError& e) {
      schema_fail("step " + std::to_string(s.index) + ": " + e.what());
    }
    if (const auto it = js.find("thought"); it != js.end() && !it->is_null()) {
      s.thought = thought_from_json(*it);
    }
    if (const auto it = js.find("grade"); it != js.end() && !it->is_null()) {
      const auto& g = *it;
      const auto& score = require(g, "score");
      if (!score.is_number_integer()) schema_fail("grade score must be an integer");
      s.grade = Grade{score.get<int>(), g.value("rationale", ""), g.value("grader_id", "")};
    }
    if (const auto it = js.find("grade_error"); it != js.end() && it->is_string()) {
      s.grade_error = it->get<std::string>();
    }
    if (const auto it = js.find("annotated_observation"); it != js.end() && it->is_string()) {
      s.annotated_observation = it->get<std::string>();
    }
    s.metadata = string_map(js, "metadata");
    s.extra = extras_of(js, kStepKeys);
    t.steps.push_back(std::move(s));
  }
  try {
    t.check_invariants();
  } catch (const TrajectoryError& e) {
    schema_fail(e.what());
  }
  return t;
}

std::string dump_line(const json& j) {
  try {
    return j.dump(-1, ' ', false, json::error_handler_t::strict);
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::serialization, 0, e.what());
  }
}

std::string to_jsonl_line(const Trajectory& traj) { return dump_line(to_json(traj)); }

std::size_t write_jsonl(std::span<const Trajectory> trajs, const std::filesystem::path& path) {
  std::string buffer;
  for (const auto& t : trajs) {
    buffer += to_jsonl_line(t);
    buffer += '\n';
  }
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError(DatasetError::Kind::io, 0, "cannot open " + path.string() + " for writing");
  out << buffer;
  if (!out) throw DatasetError(DatasetError::Kind::io, 0, "write failed: " + path.string());
  return trajs.size();
}

std::vector<Trajectory> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetError::Kind::io, 0, "cannot open " + path.string());
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(DatasetError::Kind::parse, line_no, e.what());
    }
    try {
      out.push_back(trajectory_from_json(j));
    } catch (const DatasetError& e) {
      throw DatasetError(e.kind(), line_no, e.what());
    } catch (const json::exception& e) {
      throw DatasetError(DatasetError::Kind::schema, line_no, e.what());
    }
  }
  return out;
}

}  // namespace webstar
