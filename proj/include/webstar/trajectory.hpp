#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "webstar/action.hpp"

namespace webstar {

inline constexpr const char* kTrajectorySchema = "webstar/1";
inline constexpr int kDefaultMaxSteps = 100;

// Image file path for ingested rollouts, "sim:p<page>/s<scroll>" for
// simulator states.
using ObservationRef = std::string;

struct Thought {
  std::string situation;
  std::string reasoning;
  std::string instruction;
  std::string raw;
  // Components the splitter could not find, e.g. "situation".
  std::vector<std::string> missing;

  bool complete() const { return missing.empty(); }
  friend bool operator==(const Thought&, const Thought&) = default;
};

struct Grade {
  int score = 0;
  std::string rationale;
  std::string grader_id;
  friend bool operator==(const Grade&, const Grade&) = default;
};

struct Step {
  int index = 0;
  ObservationRef observation;
  std::optional<Thought> thought;
  Action action;
  std::optional<Grade> grade;
  std::optional<std::string> grade_error;
  std::optional<std::string> annotated_observation;
  std::map<std::string, std::string> metadata;
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, kept verbatim

  friend bool operator==(const Step&, const Step&) = default;
};

enum class TrajectorySource { sim, ingested };
enum class Terminal { finished, step_cap_reached, aborted };

class TrajectoryError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Trajectory {
  std::string id;
  std::string instruction;
  TrajectorySource source = TrajectorySource::sim;
  std::vector<Step> steps;
  Terminal terminal = Terminal::aborted;
  std::optional<bool> success;
  int max_steps = kDefaultMaxSteps;
  std::map<std::string, std::string> metadata;
  nlohmann::json extra = nlohmann::json::object();

  // Appends with index assignment. Throws TrajectoryError past max_steps or
  // after a finished action.
  Step& append(Step step);
  bool full() const { return static_cast<int>(steps.size()) >= max_steps; }
  bool ended_with_finished() const;

  // Throws TrajectoryError describing the first broken invariant.
  void check_invariants() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct HistoryEntry {
  std::optional<Thought> thought;
  Action action;
  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct ContextWindow {
  std::string instruction;
  std::vector<HistoryEntry> history;  // steps 0..n-1, never truncated
  std::vector<ObservationRef> images;  // last min(w, n+1) observations, oldest first
  int target_index = 0;
  friend bool operator==(const ContextWindow&, const ContextWindow&) = default;
};

ContextWindow make_context(const Trajectory& traj, int n, int window);

std::string_view to_string(TrajectorySource s);
std::string_view to_string(Terminal t);

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { io, schema, parse, serialization };

  DatasetError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        kind_(kind),
        line_(line) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }  // 1-based, 0 when not line specific

 private:
  Kind kind_;
  std::size_t line_;
};

nlohmann::json to_json(const Thought& t);
Thought thought_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Trajectory& traj);
// Throws DatasetError(schema) with line 0; read_jsonl fills in the line.
Trajectory trajectory_from_json(const nlohmann::json& j);

std::string to_jsonl_line(const Trajectory& traj);

std::size_t write_jsonl(std::span<const Trajectory> trajs, const std::filesystem::path& path);
std::vector<Trajectory> read_jsonl(const std::filesystem::path& path);

// Deterministic single-line JSON dump used for every dataset file.
std::string dump_line(const nlohmann::json& j);

}  // namespace webstar
