#include "webstar/toy.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include "webstar/oracle.hpp"
#include "webstar/util.hpp"

namespace webstar::toy {

using nlohmann::json;

std::string signature(const sim::SimWorld& world, const sim::SimTask& task, const sim::SimState& state) {
  const bool goal = sim::goal_visible(world.site, state, task.goal);
  return task.id + "|p" + std::to_string(state.page) + "|g" + (goal ? "1" : "0") + "|s" +
         std::to_string(state.scroll / world.site.scroll_step);
}

json ToyPolicy::to_json() const {
  return {{"schema_version", "webstar-toy/1"},
          {"honor_mask", honor_mask},
          {"records_seen", records_seen},
          {"records_used", records_used},
          {"table", table}};
}

ToyPolicy ToyPolicy::from_json(const json& j) {
  if (j.value("schema_version", "") != "webstar-toy/1") {
    throw DatasetError(DatasetError::Kind::schema, 0, "not a webstar-toy/1 policy");
  }
  try {
    ToyPolicy p;
    p.honor_mask = j.at("honor_mask").get<bool>();
    p.records_seen = j.at("records_seen").get<std::size_t>();
    p.records_used = j.at("records_used").get<std::size_t>();
    p.table = j.at("table").get<std::map<std::string, std::map<std::string, long>>>();
    return p;
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::schema, 0, e.what());
  }
}

void save_policy(const ToyPolicy& p, const std::filesystem::path& path) {
  write_file(path.string(), dump_line(p.to_json()) + "\n");
}

ToyPolicy load_policy(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path.string()));
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::parse, 0, e.what());
  } catch (const std::runtime_error& e) {
    throw DatasetError(DatasetError::Kind::io, 0, e.what());
  }
  return ToyPolicy::from_json(j);
}

ToyPolicy train(std::span<const SftRecord> records, bool honor_mask, const sim::SimWorld& world) {
  ToyPolicy p;
  p.honor_mask = honor_mask;
  for (const auto& r : records) {
    ++p.records_seen;
    if (honor_mask && !r.loss) continue;
    const sim::SimTask* task = r.task_ref.empty() ? nullptr : world.find_task(r.task_ref);
    if (!task) task = world.find_by_instruction(r.context.instruction);
    if (!task) throw NonSimRecord("record " + r.trajectory_id + "#" + std::to_string(r.step_index) +
                                  " has no task in this world");
    if (r.context.images.empty()) throw NonSimRecord("record without an observation");
    const auto parsed = sim::parse_observation_ref(r.context.images.back());
    if (!parsed || parsed->first >= static_cast<int>(world.site.pages.size())) {
      throw NonSimRecord("observation '" + r.context.images.back() + "' is not a simulator state");
    }
    sim::SimState s;
    s.page = parsed->first;
    s.scroll = parsed->second;
    ++p.table[signature(world, *task, s)][serialize_action(r.target_action)];
    ++p.records_used;
  }
  return p;
}

Action choose_action(const ToyPolicy& policy, const sim::SimWorld& world, const sim::SimTask& task,
                     const sim::SimState& state, std::uint64_t seed, double tau) {
  const auto sig = signature(world, task, state);
  const auto it = policy.table.find(sig);
  if (it == policy.table.end() || it->second.empty()) {
    const auto options = sim::navigation_actions(world.site, state);
    return options[mix_seed(seed, hash_string(sig)) % options.size()];
  }
  const std::string* best = nullptr;
  Action best_action;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [text, count] : it->second) {
    double score = static_cast<double>(count);
    if (tau != 0.0) {
      Rng rng(mix_seed(seed, hash_string(sig + "#" + text)));
      score += tau * rng.gumbel();
    }
    const auto action = parse_action(text);
    if (!best || score > best_score || (score == best_score && canonical_less(action, best_action))) {
      best = &text;
      best_score = score;
      best_action = action;
    }
  }
  return best_action;
}

Trajectory rollout(const ToyPolicy& policy, const sim::SimWorld& world, const sim::SimTask& task, std::uint64_t seed,
                   const RolloutOptions& opts) {
  Trajectory traj;
  traj.id = task.id + "-toy";
  traj.instruction = task.instruction;
  traj.source = TrajectorySource::sim;
  traj.max_steps = opts.max_steps;
  traj.metadata["task_id"] = task.id;
  auto s = sim::initial_state(world.site);
  while (!traj.full() && !s.done) {
    Step st;
    st.observation = sim::observation_ref(s);
    st.action = choose_action(policy, world, task, s, seed, opts.tau);
    s = sim::step(world.site, s, st.action);
    traj.append(std::move(st));
  }
  traj.terminal = s.done ? Terminal::finished : Terminal::step_cap_reached;
  traj.success = sim::oracle_judge(traj, task);
  return traj;
}

json EvalReport::to_json() const {
  json tasks = json::array();
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    tasks.push_back({{"task_id", task_ids[i]}, {"successes", successes[i]}});
  }
  return {{"k", k}, {"pass@1", pass1}, {"pass@k", passk}, {"tasks", std::move(tasks)}};
}

std::string format_pass(double pass1, double passk) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.1f (%.1f)", 100.0 * pass1, 100.0 * passk);
  return buf;
}

std::string EvalReport::cell() const { return format_pass(pass1, passk); }

EvalReport summarize(std::vector<std::string> task_ids, std::vector<std::vector<bool>> successes) {
  EvalReport r;
  r.task_ids = std::move(task_ids);
  r.successes = std::move(successes);
  r.k = r.successes.empty() ? 1 : static_cast<int>(r.successes.front().size());
  std::size_t runs = 0;
  std::size_t wins = 0;
  std::size_t solved = 0;
  for (const auto& row : r.successes) {
    runs += row.size();
    const auto w = static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
    wins += w;
    solved += w > 0;
  }
  r.pass1 = runs ? static_cast<double>(wins) / static_cast<double>(runs) : 0.0;
  r.passk = r.successes.empty() ? 0.0 : static_cast<double>(solved) / static_cast<double>(r.successes.size());
  return r;
}

std::uint64_t rollout_seed(std::uint64_t seed, const std::string& task_id, int run) {
  return mix_seed(mix_seed(seed, hash_string(task_id)), static_cast<std::uint64_t>(run));
}

EvalReport evaluate(const ToyPolicy& policy, const sim::SimWorld& world, std::span<const sim::SimTask> tasks, int k,
                    std::uint64_t seed, const RolloutOptions& opts, int parallelism) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<std::string> ids;
  for (const auto& t : tasks) ids.push_back(t.id);
  std::vector<std::vector<bool>> wins(tasks.size(), std::vector<bool>(static_cast<std::size_t>(k), false));
  std::vector<char> flat(tasks.size() * static_cast<std::size_t>(k), 0);
  parallel_for(flat.size(), parallelism, [&](std::size_t i) {
    const auto& task = tasks[i / static_cast<std::size_t>(k)];
    const int run = static_cast<int>(i % static_cast<std::size_t>(k));
    flat[i] = rollout(policy, world, task, rollout_seed(seed, task.id, run), opts).success.value_or(false);
  });
  for (std::size_t i = 0; i < flat.size(); ++i) wins[i / k][i % k] = flat[i] != 0;
  auto r = summarize(std::move(ids), std::move(wins));
  r.k = k;
  return r;
}

std::string comparison_table(std::span<const TableRow> rows) {
  const int k = rows.empty() ? 4 : rows.front().report.k;
  std::vector<std::vector<std::string>> cells{{"Method", "# data", "Pass@1 (Pass@" + std::to_string(k) + ")"}};
  for (const auto& r : rows) cells.push_back({r.method, std::to_string(r.data), r.report.cell()});
  std::vector<std::size_t> width(3, 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 3; ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (i) out << " | ";
      out << row[i] << std::string(width[i] - row[i].size(), ' ');
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace webstar::toy
