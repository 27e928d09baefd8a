#pragma once

#include <string>

#include "webstar/filter.hpp"
#include "webstar/grader.hpp"
#include "webstar/sim.hpp"
#include "webstar/thought.hpp"

// Simulator-backed implementations of the grader, judge and thought backends.
namespace webstar::sim {

// Task for a trajectory or request: task_ref when present, else the instruction.
const SimTask& resolve_task(const SimWorld& world, const std::string& task_ref, const std::string& instruction);

// Grades from distance-to-goal: 10 / 5 / 0. The response text ends with the
// same "Expected value" line a remote grader produces and is parsed the same way.
class OracleGrader : public GraderBackend {
 public:
  explicit OracleGrader(const SimWorld& world) : world_(world), cache_(world) {}
  std::string id() const override { return "oracle"; }
  GradeResult grade(const GradeRequest& req) override;

 private:
  const SimWorld& world_;
  OracleCache cache_;
};

class OracleJudge : public TrajectoryJudge {
 public:
  explicit OracleJudge(const SimWorld& world, JudgeOptions opts = {}) : world_(world), opts_(opts) {}
  std::string id() const override { return opts_.case_fold ? "oracle-casefold" : "oracle"; }
  bool judge(const Trajectory& traj) override;

 private:
  const SimWorld& world_;
  JudgeOptions opts_;
};

// Deterministic three-part thoughts written from the simulator state.
class TemplateThoughtBackend : public ThoughtBackend {
 public:
  explicit TemplateThoughtBackend(const SimWorld& world) : world_(world) {}
  std::string id() const override { return "template"; }
  std::string generate(const ThoughtRequest& req) override;

 private:
  const SimWorld& world_;
};

}  // namespace webstar::sim
