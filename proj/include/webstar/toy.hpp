#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "webstar/filter.hpp"
#include "webstar/sim.hpp"

// Count-based imitation policy over simulator states, and pass@k evaluation.
namespace webstar::toy {

class NonSimRecord : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "<task id>|p<page>|g<goal visible 0/1>|s<scroll index>"
std::string signature(const sim::SimWorld& world, const sim::SimTask& task, const sim::SimState& state);

struct ToyPolicy {
  // signature -> canonical action string -> count
  std::map<std::string, std::map<std::string, long>> table;
  bool honor_mask = true;
  std::size_t records_seen = 0;
  std::size_t records_used = 0;

  nlohmann::json to_json() const;
  static ToyPolicy from_json(const nlohmann::json& j);
  friend bool operator==(const ToyPolicy&, const ToyPolicy&) = default;
};

void save_policy(const ToyPolicy& p, const std::filesystem::path& path);
ToyPolicy load_policy(const std::filesystem::path& path);

// With honor_mask only loss-bearing records add counts. Throws NonSimRecord for
// records whose task or observation is not from `world`.
ToyPolicy train(std::span<const SftRecord> records, bool honor_mask, const sim::SimWorld& world);

struct RolloutOptions {
  int max_steps = kDefaultMaxSteps;
  // Scale of the per-rollout Gumbel perturbation added to counts; 0 = pure argmax.
  double tau = 0.1;
};

// argmax over count + tau * g(seed, signature, action); exact ties go to the
// canonically smallest action. Unseen signatures fall back to a seeded pick
// among the visible links and the two scrolls.
Action choose_action(const ToyPolicy& policy, const sim::SimWorld& world, const sim::SimTask& task,
                     const sim::SimState& state, std::uint64_t seed, double tau);

Trajectory rollout(const ToyPolicy& policy, const sim::SimWorld& world, const sim::SimTask& task, std::uint64_t seed,
                   const RolloutOptions& opts = {});

struct EvalReport {
  int k = 1;
  std::vector<std::string> task_ids;
  std::vector<std::vector<bool>> successes;  // [task][run]
  double pass1 = 0.0;  // mean over all runs
  double passk = 0.0;  // tasks with at least one success

  nlohmann::json to_json() const;
  std::string cell() const;  // "Pass@1 (Pass@k)" in percent
};

EvalReport summarize(std::vector<std::string> task_ids, std::vector<std::vector<bool>> successes);

std::uint64_t rollout_seed(std::uint64_t seed, const std::string& task_id, int run);

EvalReport evaluate(const ToyPolicy& policy, const sim::SimWorld& world, std::span<const sim::SimTask> tasks, int k,
                    std::uint64_t seed, const RolloutOptions& opts = {}, int parallelism = 1);

// e.g. "39.6 (52.3)"
std::string format_pass(double pass1, double passk);

struct TableRow {
  std::string method;
  std::size_t data = 0;
  EvalReport report;
};

// "Method | # data | Pass@1 (Pass@k)" table.
std::string comparison_table(std::span<const TableRow> rows);

}  // namespace webstar::toy
