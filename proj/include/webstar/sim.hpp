#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "webstar/action.hpp"
#include "webstar/chat.hpp"
#include "webstar/image.hpp"
#include "webstar/trajectory.hpp"

// Deterministic simulated website used to make every pipeline claim checkable
// without a browser: a page graph with links, scrollable layouts and embedded
// facts, a task generator, a scripted noisy teacher, and ground-truth
// grader/judge oracles.
namespace webstar::sim {

enum class ElementKind { link, button, textbox, text };

struct Element {
  ElementKind kind = ElementKind::text;
  Rect bbox;  // page coordinates
  std::string label;
  std::optional<std::string> value;
  std::optional<int> target;  // link destination page

  Point center() const { return {bbox.x + bbox.width / 2, bbox.y + bbox.height / 2}; }
  friend bool operator==(const Element&, const Element&) = default;
};

struct Page {
  int id = 0;
  std::string title;
  int depth = 0;
  std::vector<Element> elements;
  int scroll_height = 0;
  friend bool operator==(const Page&, const Page&) = default;
};

struct SiteGraph {
  std::uint64_t seed = 0;
  Viewport viewport{1280, 720};
  int scroll_step = 360;
  int home = 0;
  std::vector<Page> pages;

  int max_scroll(int page) const { return pages.at(page).scroll_height - viewport.height; }
  int scroll_positions(int page) const { return max_scroll(page) / scroll_step + 1; }
  int max_depth() const;
  // Largest number of scroll steps any page needs to reach its bottom.
  int max_scroll_steps() const;
  std::string hash() const;
  friend bool operator==(const SiteGraph&, const SiteGraph&) = default;
};

struct SimGoal {
  int target_page = 0;
  std::string attribute;  // label of the fact element, e.g. "Price"
  std::string fact;       // expected final answer, e.g. "42 USD"
  friend bool operator==(const SimGoal&, const SimGoal&) = default;
};

struct SimTask {
  std::string id;
  std::string instruction;
  SimGoal goal;
  std::vector<Action> optimal_path;
  std::uint64_t seed = 0;
  friend bool operator==(const SimTask&, const SimTask&) = default;
};

struct SiteParams {
  int pages = 60;
  int depth = 3;
  int branching = 5;
  int cross_links = 2;
  Viewport viewport{1280, 720};
};

struct SimWorld {
  SiteGraph site;
  std::vector<SimTask> tasks;

  const SimTask& task(const std::string& id) const;
  const SimTask* find_task(const std::string& id) const;
  const SimTask* find_by_instruction(const std::string& instruction) const;
  friend bool operator==(const SimWorld&, const SimWorld&) = default;
};

// Upper bound on optimal path length for a target at `depth`: each level may
// need every scroll step plus one click, the target page may need every scroll
// step, and the final answer is one more action.
int optimal_path_bound(int depth, int max_scroll_steps);

// One task per non-home page, in a seed-shuffled order.
SimWorld generate_site(std::uint64_t seed, const SiteParams& params = {});

nlohmann::json to_json(const SimWorld& world);
SimWorld world_from_json(const nlohmann::json& j);
void save_world(const SimWorld& world, const std::string& path);
SimWorld load_world(const std::string& path);

struct SimState {
  int page = 0;
  int scroll = 0;
  std::optional<int> focused;          // element index of a focused textbox
  std::map<int, std::string> typed;    // textbox contents
  int steps = 0;
  bool done = false;
  std::optional<std::string> answer;
  friend bool operator==(const SimState&, const SimState&) = default;
};

SimState initial_state(const SiteGraph& site);
// "sim:p<page>/s<scroll>"
ObservationRef observation_ref(const SimState& state);
// Parses a sim observation ref back into (page, scroll). nullopt for non-sim refs.
std::optional<std::pair<int, int>> parse_observation_ref(const ObservationRef& ref);

bool element_visible(const SiteGraph& site, const SimState& state, const Element& e);
// Index of the element under a viewport point, if any.
std::optional<int> hit_test(const SiteGraph& site, const SimState& state, Point viewport_point);
// Viewport coordinates of a page element's centre.
Point to_viewport(const SimState& state, Point page_point);

// Deterministic transition. Misses are legal no-ops that only advance the step counter.
SimState step(const SiteGraph& site, const SimState& state, const Action& action);
Image render(const SiteGraph& site, const SimState& state);
Image render(const SiteGraph& site, const ObservationRef& ref);

bool goal_visible(const SiteGraph& site, const SimState& state, const SimGoal& goal);

// Clicks on every visible link in element order, then scroll down, then scroll up.
std::vector<Action> navigation_actions(const SiteGraph& site, const SimState& state);

// Shortest-path oracle for one task: distance[page][scroll_index] is the
// minimum number of actions (including the final answer) to finish the task.
class DistanceOracle {
 public:
  DistanceOracle(const SiteGraph& site, const SimGoal& goal);

  int distance(int page, int scroll) const;
  int distance(const SimState& s) const { return distance(s.page, s.scroll); }
  // First action in canonical candidate order that decreases the distance.
  Action optimal_action(const SimState& state) const;
  // Every pointer/scroll action considered by the planner from this state.
  std::vector<Action> candidate_actions(const SimState& state) const;

  const SimGoal& goal() const { return goal_; }

 private:
  const SiteGraph* site_;
  SimGoal goal_;
  std::vector<std::vector<int>> dist_;
};

inline constexpr int kUnreachable = 1 << 29;

std::vector<Action> plan_optimal_path(const SiteGraph& site, const SimGoal& goal);

struct TeacherConfig {
  double noise = 0.4;             // per-step probability of a slip
  double irreversible_prob = 0.0;  // per-rollout probability of one wrong final answer
  double habit = 0.8;             // probability a slip is the state's habitual mistake
  std::uint64_t seed = 0;

  void validate() const;
};

// Hidden per-step label written to step metadata["teacher_label"].
inline constexpr const char* kTeacherLabelKey = "teacher_label";

Trajectory teacher_rollout(const SimWorld& world, const SimTask& task, const TeacherConfig& cfg,
                           int max_steps, int rollout_index);

// 10 = strictly closer to the goal or the correct answer, 5 = no progress
// (recoverable), 0 = wrong final answer or unreachable goal.
int oracle_grade(const SiteGraph& site, const DistanceOracle& oracle, const SimState& state,
                 const Action& action);

struct JudgeOptions {
  bool case_fold = false;
};

bool answer_matches(const std::string& answer, const std::string& fact, const JudgeOptions& opts = {});
bool oracle_judge(const Trajectory& traj, const SimTask& task, const JudgeOptions& opts = {});

// Renders "sim:" references against a site; other references load PNG files.
class SimObservationSource : public ObservationSource {
 public:
  explicit SimObservationSource(const SiteGraph* site, std::string root = {}) : site_(site), files_(std::move(root)) {}
  std::optional<Image> load(const ObservationRef& ref) const override;

 private:
  const SiteGraph* site_;
  FileObservationSource files_;
};

// One precomputed DistanceOracle per task of a world; read-only after construction.
class OracleCache {
 public:
  explicit OracleCache(const SimWorld& world);
  const DistanceOracle& get(const SimTask& task) const;
  const SimWorld& world() const { return *world_; }

 private:
  const SimWorld* world_;
  std::map<std::string, DistanceOracle> oracles_;
};

}  // namespace webstar::sim
