#include "webstar/oracle.hpp"

#include <cctype>
#include <stdexcept>

namespace webstar::sim {

const SimTask& resolve_task(const SimWorld& world, const std::string& task_ref, const std::string& instruction) {
  if (!task_ref.empty()) {
    if (const auto* t = world.find_task(task_ref)) return *t;
  }
  if (const auto* t = world.find_by_instruction(instruction)) return *t;
  throw BackendError("no simulator task for '" + (task_ref.empty() ? instruction : task_ref) + "'", false);
}

namespace {

SimState state_of(const SiteGraph& site, const ObservationRef& ref) {
  const auto parsed = parse_observation_ref(ref);
  if (!parsed || parsed->first >= static_cast<int>(site.pages.size())) {
    throw BackendError("observation '" + ref + "' is not a state of this site", false);
  }
  SimState s;
  s.page = parsed->first;
  s.scroll = parsed->second;
  return s;
}

std::string scroll_phrase(const SiteGraph& site, const SimState& s) {
  const int k = s.scroll / site.scroll_step;
  if (k == 0) return "at the top";
  return "scrolled down " + std::to_string(k) + (k == 1 ? " screen" : " screens");
}

}  // namespace

GradeResult OracleGrader::grade(const GradeRequest& req) {
  const auto& task = resolve_task(world_, req.task_ref, req.instruction);
  const auto& oracle = cache_.get(task);
  const auto state = state_of(world_.site, req.current.observation);
  const int before = oracle.distance(state);
  const auto next = step(world_.site, state, req.proposed_action);
  const int score = oracle_grade(world_.site, oracle, state, req.proposed_action);

  GradeResult r;
  r.raw = "1. Latest Screenshot Analysis\nState " + observation_ref(state) + ", " + std::to_string(before) +
          " actions from the goal.\n4. Proposed Action Review\n" + serialize_action(req.proposed_action) +
          (req.proposed_action.kind == ActionKind::finished
               ? std::string(" answers the task")
               : " leads to " + observation_ref(next) + ", " + std::to_string(oracle.distance(next)) +
                     " actions from the goal") +
          ".\n8. Expected Value\nExpected value: " + std::to_string(score) + "\n";
  r.score = parse_grade(r.raw);
  r.stages = split_stages(r.raw);
  r.grader_id = id();
  return r;
}

bool OracleJudge::judge(const Trajectory& traj) {
  const auto it = traj.metadata.find("task_id");
  const auto& task = resolve_task(world_, it == traj.metadata.end() ? std::string() : it->second, traj.instruction);
  return oracle_judge(traj, task, opts_);
}

std::string TemplateThoughtBackend::generate(const ThoughtRequest& req) {
  const auto& site = world_.site;
  const auto& task = resolve_task(world_, req.task_ref, req.context.instruction);
  const auto state = state_of(site, req.annotated.observation);
  const auto& page = site.pages.at(state.page);
  const auto& target = site.pages.at(task.goal.target_page).title;
  std::string attr = task.goal.attribute;
  for (auto& c : attr) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  std::string situation = "I am on the " + page.title + " page " + scroll_phrase(site, state) + ".";
  std::string reasoning;
  if (req.context.target_index == 0) {
    reasoning = "The task asks for the " + attr + " of " + target +
                ", so I need to reach its product page from here and read the value there. ";
  }
  std::string instruction;
  const auto& a = req.action;
  switch (a.kind) {
    case ActionKind::click:
    case ActionKind::left_double:
    case ActionKind::right_single: {
      const auto hit = hit_test(site, state, a.points.at(0));
      if (hit && page.elements[*hit].kind == ElementKind::link) {
        const auto& label = page.elements[*hit].label;
        reasoning += "The " + label + " link is visible and following it moves me through the catalogue toward " +
                     target + ".";
        instruction = "Click the " + label + " link.";
      } else if (hit && page.elements[*hit].kind == ElementKind::textbox) {
        reasoning += "The search box could let me look the product up directly.";
        instruction = "Click the search box.";
      } else {
        reasoning += "I want to check whether this part of the page responds before moving on.";
        instruction = "Click the empty area at (" + std::to_string(a.points[0].x) + ", " +
                      std::to_string(a.points[0].y) + ").";
      }
      break;
    }
    case ActionKind::scroll: {
      const bool down = a.direction && *a.direction == ScrollDirection::down;
      reasoning += down ? "The information or link I need may be further down this page."
                        : "I want to look back at the upper part of this page.";
      instruction = std::string("Scroll ") + (a.direction ? std::string(to_string(*a.direction)) : "down") +
                    " on the page.";
      break;
    }
    case ActionKind::finished:
      reasoning += "The " + attr + " of " + target + " should be the value I can read on this page.";
      instruction = "Answer with " + a.text + " and finish.";
      break;
    case ActionKind::type:
      reasoning += "Entering text here could narrow down the results.";
      instruction = "Type the query into the focused box.";
      break;
    default:
      reasoning += "Nothing on the page needs to change before the next move.";
      instruction = "Perform the " + std::string(to_string(a.kind)) + " action.";
      break;
  }
  return situation + " " + reasoning + " " + instruction;
}

}  // namespace webstar::sim
