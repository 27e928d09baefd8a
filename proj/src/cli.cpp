#include "webstar/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "webstar/filter.hpp"
#include "webstar/grader.hpp"
#include "webstar/oracle.hpp"
#include "webstar/sim.hpp"
#include "webstar/thought.hpp"
#include "webstar/toy.hpp"
#include "webstar/util.hpp"

namespace webstar::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class CliFailure : public std::runtime_error {
 public:
  CliFailure(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

// Options whose values are file names: manifests record basenames only.
const std::set<std::string> kPathOptions = {"in",         "out",       "world",      "dropped", "grades",
                                            "reference",  "out-dir",   "images-root", "policy"};
// Options that must not influence output bytes.
const std::set<std::string> kUnrecorded = {"parallelism", "config", "help"};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string env_name(const std::string& option) {
  std::string out = "WEBSTAR_";
  for (const char c : option) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::map<std::string, std::string> read_config(const std::string& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw CliFailure(kExitUsage, "cannot read config file " + path);
  std::map<std::string, std::string> global;
  std::map<std::string, std::string> scoped;
  std::string section;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CliFailure(kExitUsage, path + ":" + std::to_string(no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (section.empty()) global[key] = value;
    else if (section == command) scoped[key] = value;
  }
  for (auto& [k, v] : scoped) global[k] = v;
  return global;
}

bool truthy(const std::string& v) {
  std::string s;
  for (const char c : v) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s == "1" || s == "true" || s == "yes" || s == "on";
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& name) {
  const auto flag = "--" + name;
  return std::any_of(args.begin(), args.end(),
                      [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Appends env/config values for options the command line left unset.
std::vector<std::string> with_defaults_from_env_and_config(const std::vector<std::string>& args, CLI::App* sub,
                                                           const std::string& command) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) {
    if (const char* env = std::getenv("WEBSTAR_CONFIG")) config_path = env;
  }
  std::map<std::string, std::string> config;
  if (!config_path.empty()) config = read_config(config_path, command);

  std::vector<std::string> out = args;
  for (const auto* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config" || given_on_command_line(args, name)) continue;
    std::optional<std::string> value;
    if (const char* env = std::getenv(env_name(name).c_str())) value = env;
    else if (const auto it = config.find(name); it != config.end()) value = it->second;
    if (!value) continue;
    if (opt->get_type_size() == 0) {
      if (truthy(*value)) out.push_back("--" + name);
    } else {
      out.push_back("--" + name + "=" + *value);
    }
  }
  return out;
}

std::string basename_of(const std::string& path) { return fs::path(path).filename().string(); }

json settings_of(const CLI::App* sub) {
  json s = json::object();
  for (const auto* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (kUnrecorded.count(name)) continue;
    std::vector<std::string> values;
    if (opt->get_type_size() == 0) {
      values.push_back(opt->count() > 0 ? "true" : "false");
    } else if (opt->count() > 0) {
      values = opt->results();
    } else {
      values.push_back(opt->get_default_str());
    }
    if (kPathOptions.count(name)) {
      for (auto& v : values) {
        const auto eq = v.find('=');
        v = eq == std::string::npos ? basename_of(v) : v.substr(0, eq + 1) + basename_of(v.substr(eq + 1));
      }
    }
    std::string joined;
    for (std::size_t i = 0; i < values.size(); ++i) joined += (i ? "," : "") + values[i];
    s[name] = joined;
  }
  return s;
}

json file_entry(const fs::path& p) {
  return {{"name", p.filename().string()}, {"sha256", sha256_hex(read_file(p.string()))}};
}

void write_manifest(const fs::path& path, const std::string& command, const json& settings,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs, const json& counts) {
  json in = json::array();
  for (const auto& p : inputs) in.push_back(file_entry(p));
  json out = json::array();
  for (const auto& p : outputs) out.push_back(file_entry(p));
  const json m = {{"schema_version", "webstar-manifest/1"},
                  {"tool", "webstar"},
                  {"version", kToolVersion},
                  {"command", command},
                  {"settings", settings},
                  {"inputs", std::move(in)},
                  {"outputs", std::move(out)},
                  {"counts", counts}};
  write_file(path.string(), m.dump(2) + "\n");
}

fs::path manifest_for(const std::string& out) { return fs::path(out + ".manifest.json"); }

sim::SimWorld load_world_checked(const std::string& path) {
  if (path.empty()) throw CliFailure(kExitUsage, "--world is required here");
  try {
    return sim::load_world(path);
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::schema, 0, path + ": " + e.what());
  } catch (const ActionParseError& e) {
    throw DatasetError(DatasetError::Kind::schema, 0, path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw DatasetError(DatasetError::Kind::schema, 0, path + ": " + e.what());
  }
}

std::vector<sim::SimTask> task_subset(const sim::SimWorld& world, int n) {
  if (n < 0 || n > static_cast<int>(world.tasks.size())) {
    throw CliFailure(kExitUsage, "--tasks must be between 0 and " + std::to_string(world.tasks.size()));
  }
  const auto count = n == 0 ? world.tasks.size() : static_cast<std::size_t>(n);
  return {world.tasks.begin(), world.tasks.begin() + static_cast<std::ptrdiff_t>(count)};
}

std::string lines_of(const std::vector<json>& docs) {
  std::string out;
  for (const auto& d : docs) out += dump_line(d) + "\n";
  return out;
}

void write_trajectories(const std::vector<Trajectory>& trajs, const std::string& path) {
  write_jsonl(std::span<const Trajectory>(trajs), path);
}

fs::path write_failures(const std::string& out, const std::vector<StepFailure>& failures) {
  json arr = json::array();
  for (const auto& f : failures) arr.push_back({{"trajectory_id", f.trajectory_id}, {"step", f.step}, {"error", f.error}});
  const fs::path p(out + ".failures.json");
  write_file(p.string(), arr.dump(2) + "\n");
  return p;
}

struct Options {
  std::string config;
  std::string in, out, world, dropped, out_dir, grades, reference, images_root;
  std::string backend, judge = "oracle", mode = "correct_steps";
  std::string url = ChatConfig{}.url, model = ChatConfig{}.model;
  std::string counts;
  std::uint64_t seed = 0;
  int pages = 60, depth = 3, branching = 5, cross_links = 2;
  int tasks = 0, rollouts = 16, max_steps = kDefaultMaxSteps;
  double noise = 0.4, irreversible = 0.0, habit = 0.8;
  int window = 1, cutoff = kDefaultCutoff, parallelism = 1;
  int retries = 3, retry_delay_ms = 500, timeout = 120;
  bool force = false, case_fold = false, drop_masked = false, inline_images = false, ignore_mask = false;
  std::size_t size = 1000, budget = 0, sample = 0;
  std::vector<int> cutoffs{2, 4, 5, 6, 8};
  int k = 4, repeats = 5;
  double tau = 0.1;
  std::vector<std::string> policies;
};

RetryPolicy retry_of(const Options& o) { return {o.retries, o.retry_delay_ms, o.seed}; }

ChatConfig chat_of(const Options& o) {
  ChatConfig c;
  c.url = o.url;
  c.model = o.model;
  c.timeout_seconds = o.timeout;
  if (const char* key = std::getenv(kApiKeyEnv)) c.api_key = key;
  return c;
}

// Backends plus whatever they borrow, kept alive together.
struct GraderBundle {
  std::unique_ptr<sim::SimWorld> world;
  std::unique_ptr<ObservationSource> images;
  std::unique_ptr<ChatClient> client;
  std::unique_ptr<GraderBackend> grader;
  std::unique_ptr<ThoughtBackend> thinker;
};

GraderBundle make_bundle(Options o, bool thought) {
  GraderBundle b;
  if (o.backend.empty()) o.backend = thought ? "template" : "oracle";
  if (!o.world.empty()) b.world = std::make_unique<sim::SimWorld>(load_world_checked(o.world));
  const auto* site = b.world ? &b.world->site : nullptr;
  b.images = std::make_unique<sim::SimObservationSource>(site, o.images_root);
  if (o.backend == "remote") {
    b.client = std::make_unique<HttpChatClient>(chat_of(o));
    if (thought) b.thinker = std::make_unique<RemoteThoughtBackend>(*b.client, *b.images, "remote:" + o.model);
    else b.grader = std::make_unique<RemoteGrader>(*b.client, *b.images, "remote:" + o.model);
    return b;
  }
  const std::string local = thought ? "template" : "oracle";
  if (o.backend != local) {
    throw CliFailure(kExitUsage, "--backend must be " + local + " or remote, got '" + o.backend + "'");
  }
  if (!b.world) throw CliFailure(kExitUsage, "the " + local + " backend needs --world");
  if (thought) b.thinker = std::make_unique<sim::TemplateThoughtBackend>(*b.world);
  else b.grader = std::make_unique<sim::OracleGrader>(*b.world);
  return b;
}

int finish_with_failures(std::ostream& err, const std::string& out, const std::vector<StepFailure>& failures,
                         std::size_t attempted, std::size_t succeeded, std::vector<fs::path>& outputs) {
  if (failures.empty()) return kExitOk;
  const auto report = write_failures(out, failures);
  outputs.push_back(report);
  err << failures.size() << " of " << attempted << " steps failed; report: " << report.string() << "\n";
  return succeeded == 0 && attempted > 0 ? kExitBackend : kExitPartial;
}

// ---- subcommands ----

int cmd_gen_site(const Options& o, const CLI::App* sub, std::ostream& out) {
  sim::SiteParams p;
  p.pages = o.pages;
  p.depth = o.depth;
  p.branching = o.branching;
  p.cross_links = o.cross_links;
  const auto world = sim::generate_site(o.seed, p);
  sim::save_world(world, o.out);
  const json counts = {{"pages", world.site.pages.size()},
                       {"tasks", world.tasks.size()},
                       {"max_depth", world.site.max_depth()},
                       {"max_scroll_steps", world.site.max_scroll_steps()},
                       {"site_hash", world.site.hash()}};
  write_manifest(manifest_for(o.out), "gen-site", settings_of(sub), {}, {o.out}, counts);
  out << "site with " << world.site.pages.size() << " pages and " << world.tasks.size() << " tasks -> " << o.out
      << "\n";
  return kExitOk;
}

int cmd_collect(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto world = load_world_checked(o.world);
  const auto tasks = task_subset(world, o.tasks);
  sim::TeacherConfig cfg;
  cfg.noise = o.noise;
  cfg.irreversible_prob = o.irreversible;
  cfg.habit = o.habit;
  cfg.seed = o.seed;
  cfg.validate();
  if (o.rollouts < 1) throw CliFailure(kExitUsage, "--rollouts must be >= 1");
  const auto per = static_cast<std::size_t>(o.rollouts);
  std::vector<Trajectory> trajs(tasks.size() * per);
  parallel_for(trajs.size(), o.parallelism, [&](std::size_t i) {
    trajs[i] = sim::teacher_rollout(world, tasks[i / per], cfg, o.max_steps, static_cast<int>(i % per));
  });
  write_trajectories(trajs, o.out);
  std::size_t steps = 0;
  std::size_t correct = 0;
  for (const auto& t : trajs) {
    steps += t.steps.size();
    correct += t.metadata.at("teacher_outcome") == "correct";
  }
  const json counts = {{"trajectories", trajs.size()}, {"tasks", tasks.size()}, {"steps", steps},
                       {"teacher_correct", correct}};
  write_manifest(manifest_for(o.out), "collect", settings_of(sub), {o.world}, {o.out}, counts);
  out << trajs.size() << " trajectories (" << steps << " steps) -> " << o.out << "\n";
  return kExitOk;
}

int cmd_grade(const Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  const auto trajs = read_jsonl(o.in);
  auto bundle = make_bundle(o, false);
  GradeOptions go;
  go.window = o.window;
  go.parallelism = o.parallelism;
  go.retry = retry_of(o);
  const auto run = grade_corpus(trajs, *bundle.grader, go);
  write_trajectories(run.trajectories, o.out);
  std::vector<fs::path> inputs{o.in};
  if (!o.world.empty()) inputs.emplace_back(o.world);
  std::vector<fs::path> outputs{o.out};
  const auto graded = run.calls - run.failures.size();
  const int code = finish_with_failures(err, o.out, run.failures, run.calls, graded, outputs);
  const json counts = {{"trajectories", trajs.size()}, {"steps", run.calls}, {"graded", graded},
                       {"failed", run.failures.size()}, {"grader", bundle.grader->id()}};
  write_manifest(manifest_for(o.out), "grade", settings_of(sub), inputs, outputs, counts);
  out << "graded " << graded << "/" << run.calls << " steps -> " << o.out << "\n";
  return code;
}

int cmd_augment(const Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  const auto trajs = read_jsonl(o.in);
  auto bundle = make_bundle(o, true);
  AugmentOptions ao;
  ao.window = o.window;
  ao.parallelism = o.parallelism;
  ao.force = o.force;
  ao.retry = retry_of(o);
  const auto run = augment_corpus(trajs, *bundle.thinker, ao);
  write_trajectories(run.trajectories, o.out);
  std::vector<fs::path> inputs{o.in};
  if (!o.world.empty()) inputs.emplace_back(o.world);
  std::vector<fs::path> outputs{o.out};
  const auto attempted = run.generated + run.failures.size();
  const int code = finish_with_failures(err, o.out, run.failures, attempted, run.generated, outputs);
  const json counts = {{"trajectories", trajs.size()}, {"generated", run.generated}, {"skipped", run.skipped},
                       {"failed", run.failures.size()}, {"backend", bundle.thinker->id()}};
  write_manifest(manifest_for(o.out), "augment", settings_of(sub), inputs, outputs, counts);
  out << "generated " << run.generated << " thoughts, skipped " << run.skipped << " -> " << o.out << "\n";
  return code;
}

int cmd_filter(const Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  const auto trajs = read_jsonl(o.in);
  if (o.judge != "oracle") throw CliFailure(kExitUsage, "only the oracle judge is built in");
  const auto world = load_world_checked(o.world);
  sim::OracleJudge judge(world, sim::JudgeOptions{o.case_fold});
  const auto res = filter_trajectories(trajs, judge, o.parallelism);
  write_trajectories(res.kept, o.out);
  std::vector<fs::path> outputs{o.out};
  if (!o.dropped.empty()) {
    write_trajectories(res.dropped, o.dropped);
    outputs.emplace_back(o.dropped);
  }
  std::size_t steps = 0;
  std::size_t bearing = 0;
  bool graded = true;
  for (const auto& t : res.kept) {
    steps += t.steps.size();
    for (const auto& s : t.steps) {
      if (!s.grade) graded = false;
      else bearing += s.grade->score > o.cutoff;
    }
  }
  json counts = {{"input", trajs.size()},
                 {"kept", res.kept.size()},
                 {"dropped", res.dropped.size()},
                 {"judge_errors", res.errors.size()},
                 {"kept_steps", steps}};
  if (graded && steps) {
    counts["loss_bearing_steps"] = bearing;
    counts["step_retention"] = static_cast<double>(bearing) / static_cast<double>(steps);
  }
  const int code = finish_with_failures(err, o.out, res.errors, trajs.size(), res.kept.size() + res.dropped.size(),
                                        outputs);
  write_manifest(manifest_for(o.out), "filter", settings_of(sub), {o.in, o.world}, outputs, counts);
  out << "kept " << res.kept.size() << ", dropped " << res.dropped.size();
  if (counts.contains("step_retention")) {
    out << "; steps scoring > " << o.cutoff << ": " << bearing << "/" << steps;
  }
  out << "\n";
  return code;
}

int cmd_export_sft(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto trajs = read_jsonl(o.in);
  std::unique_ptr<sim::SimWorld> world;
  if (!o.world.empty()) world = std::make_unique<sim::SimWorld>(load_world_checked(o.world));
  sim::SimObservationSource images(world ? &world->site : nullptr, o.images_root);
  SftExportOptions eo;
  eo.window = o.window;
  eo.cutoff = o.cutoff;
  eo.mode = export_mode_from_string(o.mode);
  eo.drop_masked = o.drop_masked;
  eo.json.inline_images = o.inline_images;
  eo.json.images = &images;
  std::ostringstream buf;
  const auto sum = export_sft(trajs, eo, buf);
  write_file(o.out, buf.str());
  std::vector<fs::path> inputs{o.in};
  if (world) inputs.emplace_back(o.world);
  write_manifest(manifest_for(o.out), "export-sft", settings_of(sub), inputs, {o.out}, sum.to_json());
  out << sum.records << " records, " << sum.loss_bearing << " loss-bearing (" << o.mode << ") -> " << o.out << "\n";
  return kExitOk;
}

int cmd_export_reward(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto trajs = read_jsonl(o.in);
  const auto res = export_reward_dataset(trajs, o.size, o.seed, o.window);
  std::vector<json> docs;
  for (const auto& r : res.records) docs.push_back(to_json(r));
  write_file(o.out, lines_of(docs));
  const json counts = {{"records", res.records.size()},
                       {"positive", res.positive},
                       {"negative", res.negative},
                       {"pool_positive", res.pool_positive},
                       {"pool_negative", res.pool_negative},
                       {"class_boundary", "score > 5 vs score <= 5"},
                       {"deduplication", "none"}};
  write_manifest(manifest_for(o.out), "export-reward", settings_of(sub), {o.in}, {o.out}, counts);
  out << res.positive << " positive / " << res.negative << " negative -> " << o.out << "\n";
  return kExitOk;
}

int cmd_stats(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto trajs = read_jsonl(o.in);
  const auto st = score_stats(trajs);
  out << st.table();
  if (!o.out.empty()) {
    write_file(o.out, st.to_json().dump(2) + "\n");
    write_manifest(manifest_for(o.out), "stats", settings_of(sub), {o.in}, {o.out}, {{"graded", st.total}});
  }
  return kExitOk;
}

std::vector<std::string> record_lines(const std::vector<SftRecord>& recs) {
  std::vector<std::string> out;
  for (const auto& r : recs) out.push_back(dump_line(to_json(r)));
  return out;
}

int cmd_sweep(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto trajs = read_jsonl(o.in);
  std::optional<std::size_t> budget;
  if (o.budget > 0) budget = o.budget;
  const auto entries = cutoff_sweep(trajs, o.cutoffs, budget, o.seed, o.window);
  if (o.out_dir.empty()) throw CliFailure(kExitUsage, "--out-dir is required");
  fs::create_directories(o.out_dir);
  std::unique_ptr<sim::SimWorld> world;
  if (!o.world.empty()) world = std::make_unique<sim::SimWorld>(load_world_checked(o.world));

  std::vector<fs::path> outputs;
  std::vector<std::string> pass;
  json rows = json::array();
  for (const auto& e : entries) {
    const auto path = fs::path(o.out_dir) / ("sft_cutoff" + std::to_string(e.cutoff) + ".jsonl");
    std::string text;
    for (const auto& l : record_lines(e.records)) text += l + "\n";
    write_file(path.string(), text);
    outputs.push_back(path);
    json row = {{"cutoff", e.cutoff},
                {"total_steps", e.total_steps},
                {"available", e.available},
                {"retention", e.retention},
                {"selected", e.selected}};
    if (world) {
      const auto policy = toy::train(e.records, true, *world);
      toy::RolloutOptions ro;
      ro.max_steps = o.max_steps;
      ro.tau = o.tau;
      const auto tasks = task_subset(*world, o.tasks);
      const auto rep = toy::evaluate(policy, *world, tasks, o.k, o.seed, ro, o.parallelism);
      pass.push_back(rep.cell());
      row["pass@1"] = rep.pass1;
      row["pass@k"] = rep.passk;
      row["k"] = o.k;
    }
    rows.push_back(std::move(row));
  }
  const auto table = sweep_table(entries, pass);
  const auto summary = fs::path(o.out_dir) / "sweep.json";
  write_file(summary.string(), json{{"rows", rows}, {"table", table}}.dump(2) + "\n");
  outputs.push_back(summary);
  std::vector<fs::path> inputs{o.in};
  if (world) inputs.emplace_back(o.world);
  write_manifest(fs::path(o.out_dir) / "manifest.json", "sweep-cutoff", settings_of(sub), inputs, outputs,
                 {{"cutoffs", entries.size()}});
  out << table;
  return kExitOk;
}

int cmd_train(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto records = read_sft_jsonl(o.in);
  const auto world = load_world_checked(o.world);
  const auto policy = toy::train(records, !o.ignore_mask, world);
  toy::save_policy(policy, o.out);
  const json counts = {{"records_seen", policy.records_seen},
                       {"records_used", policy.records_used},
                       {"signatures", policy.table.size()}};
  write_manifest(manifest_for(o.out), "train-toy", settings_of(sub), {o.in, o.world}, {o.out}, counts);
  out << "trained on " << policy.records_used << "/" << policy.records_seen << " records -> " << o.out << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, const CLI::App* sub, std::ostream& out) {
  const auto world = load_world_checked(o.world);
  const auto tasks = task_subset(world, o.tasks);
  if (o.policies.empty()) throw CliFailure(kExitUsage, "at least one --policy is required");
  toy::RolloutOptions ro;
  ro.max_steps = o.max_steps;
  ro.tau = o.tau;
  std::vector<toy::TableRow> rows;
  std::vector<fs::path> inputs{o.world};
  for (const auto& spec : o.policies) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const std::string label = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const auto policy = toy::load_policy(path);
    inputs.emplace_back(path);
    rows.push_back({label, policy.records_used, toy::evaluate(policy, world, tasks, o.k, o.seed, ro, o.parallelism)});
  }
  const auto table = toy::comparison_table(rows);
  out << table;
  if (!o.out.empty()) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back({{"method", r.method}, {"data", r.data}, {"report", r.report.to_json()}});
    write_file(o.out, json{{"rows", arr}, {"table", table}}.dump(2) + "\n");
    write_manifest(manifest_for(o.out), "eval", settings_of(sub), inputs, {o.out}, {{"policies", rows.size()}});
  }
  return kExitOk;
}

int cmd_audit(const Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  const auto trajs = read_jsonl(o.in);
  auto bundle = make_bundle(o, false);
  std::vector<std::pair<std::size_t, int>> pool;
  for (std::size_t t = 0; t < trajs.size(); ++t) {
    for (int n = 0; n < static_cast<int>(trajs[t].steps.size()); ++n) pool.emplace_back(t, n);
  }
  std::vector<std::pair<std::size_t, int>> picked;
  if (o.sample > 0 && o.sample < pool.size()) {
    for (const auto i : sample_indices(pool.size(), o.sample, o.seed)) picked.push_back(pool[i]);
  } else {
    picked = pool;
  }
  std::vector<std::optional<ConsistencyReport>> reports(picked.size());
  std::vector<std::string> errors(picked.size());
  int workers = std::max(1, o.parallelism);
  if (bundle.grader->concurrency_limit() > 0) workers = std::min(workers, bundle.grader->concurrency_limit());
  parallel_for(picked.size(), workers, [&](std::size_t i) {
    try {
      const auto req = make_grade_request(trajs[picked[i].first], picked[i].second, o.window);
      reports[i] = consistency_audit(req, *bundle.grader, o.repeats);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::vector<ConsistencyReport> ok;
  std::vector<StepFailure> failures;
  json steps = json::array();
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const auto& traj = trajs[picked[i].first];
    if (!reports[i]) {
      failures.push_back({traj.id, picked[i].second, errors[i]});
      continue;
    }
    ok.push_back(*reports[i]);
    steps.push_back({{"trajectory_id", traj.id},
                     {"step", picked[i].second},
                     {"scores", reports[i]->scores},
                     {"range", reports[i]->range},
                     {"std", reports[i]->std},
                     {"cv", reports[i]->cv}});
  }
  const auto sum = summarize_consistency(ok);
  char line[160];
  std::snprintf(line, sizeof line, "steps %zu, repeats %d: mean range %.3f, median std %.3f, median cv %.3f\n",
                sum.steps, o.repeats, sum.mean_range, sum.median_std, sum.median_cv);
  out << line;
  std::vector<fs::path> outputs;
  int code = kExitOk;
  if (!o.out.empty()) {
    write_file(o.out, json{{"summary",
                            {{"steps", sum.steps},
                             {"mean_range", sum.mean_range},
                             {"median_std", sum.median_std},
                             {"median_cv", sum.median_cv}}},
                           {"steps", steps}}
                          .dump(2) + "\n");
    outputs.emplace_back(o.out);
    code = finish_with_failures(err, o.out, failures, picked.size(), ok.size(), outputs);
    write_manifest(manifest_for(o.out), "audit-consistency", settings_of(sub), {o.in}, outputs,
                   {{"steps", picked.size()}, {"failed", failures.size()}});
  } else if (!failures.empty()) {
    err << failures.size() << " steps failed\n";
    code = ok.empty() ? kExitBackend : kExitPartial;
  }
  return code;
}

std::vector<long> parse_counts(const std::string& s) {
  std::vector<long> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stol(trim(item), &used));
    } catch (const std::exception&) {
      throw CliFailure(kExitUsage, "--counts expects four integers tt,tf,ft,ff");
    }
  }
  if (v.size() != 4) throw CliFailure(kExitUsage, "--counts expects four integers tt,tf,ft,ff");
  return v;
}

int cmd_agreement(const Options& o, const CLI::App* sub, std::ostream& out) {
  AgreementReport rep;
  std::vector<fs::path> inputs;
  if (!o.counts.empty()) {
    const auto c = parse_counts(o.counts);
    rep = agreement_from_counts(c[0], c[1], c[2], c[3], o.cutoff);
  } else {
    if (o.grades.empty() || o.reference.empty()) {
      throw CliFailure(kExitUsage, "give --counts, or both --grades and --reference");
    }
    const auto graded = read_jsonl(o.grades);
    const auto reference = read_jsonl(o.reference);
    std::map<std::pair<std::string, int>, int> ref;
    for (const auto& t : reference) {
      for (const auto& s : t.steps) {
        if (s.grade) ref[{t.id, s.index}] = s.grade->score;
      }
    }
    std::vector<int> g;
    std::vector<int> r;
    for (const auto& t : graded) {
      for (const auto& s : t.steps) {
        if (!s.grade) continue;
        const auto it = ref.find({t.id, s.index});
        if (it == ref.end()) {
          throw LengthMismatch("reference has no grade for " + t.id + " step " + std::to_string(s.index));
        }
        g.push_back(s.grade->score);
        r.push_back(it->second);
      }
    }
    if (g.size() != ref.size()) throw LengthMismatch("reference has steps the grades file lacks");
    rep = agreement_report(g, r, o.cutoff);
    inputs = {o.grades, o.reference};
  }
  out << rep.table();
  if (!o.out.empty()) {
    const json j = {{"cutoff", rep.cutoff}, {"tt", rep.tt}, {"tf", rep.tf}, {"ft", rep.ft},
                    {"ff", rep.ff},         {"total", rep.total()}, {"agreement", rep.agreement()}};
    write_file(o.out, j.dump(2) + "\n");
    write_manifest(manifest_for(o.out), "agreement", settings_of(sub), inputs, {o.out}, j);
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "key = value config file");
  sub->add_option("--parallelism", o.parallelism, "worker threads")->check(CLI::PositiveNumber);
}

void add_backend(CLI::App* sub, Options& o, const std::string& local) {
  sub->add_option("--backend", o.backend, local + " or remote")->default_str(local);
  sub->add_option("--url", o.url, "chat-completions endpoint (remote backend)");
  sub->add_option("--model", o.model, "model name (remote backend)");
  sub->add_option("--timeout", o.timeout, "request timeout in seconds");
  sub->add_option("--retries", o.retries, "attempts per step")->check(CLI::PositiveNumber);
  sub->add_option("--retry-delay-ms", o.retry_delay_ms, "base backoff delay");
  sub->add_option("--images-root", o.images_root, "directory for relative observation paths");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"webstar: step-level filtering pipeline for computer-use agent rollouts", "webstar"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* gen = app.add_subcommand("gen-site", "generate a simulated website and its tasks");
  add_common(gen, o);
  gen->add_option("--seed", o.seed);
  gen->add_option("--pages", o.pages);
  gen->add_option("--depth", o.depth);
  gen->add_option("--branching", o.branching);
  gen->add_option("--cross-links", o.cross_links);
  gen->add_option("--out", o.out)->required();

  auto* collect = app.add_subcommand("collect", "roll out the noisy teacher");
  add_common(collect, o);
  collect->add_option("--world", o.world)->required();
  collect->add_option("--tasks", o.tasks, "first N tasks, 0 = all");
  collect->add_option("--rollouts", o.rollouts);
  collect->add_option("--noise", o.noise);
  collect->add_option("--irreversible", o.irreversible);
  collect->add_option("--habit", o.habit);
  collect->add_option("--seed", o.seed);
  collect->add_option("--max-steps", o.max_steps);
  collect->add_option("--out", o.out)->required();

  auto* grade = app.add_subcommand("grade", "grade every step");
  add_common(grade, o);
  add_backend(grade, o, "oracle");
  grade->add_option("--in", o.in)->required();
  grade->add_option("--out", o.out)->required();
  grade->add_option("--world", o.world);
  grade->add_option("--window", o.window)->check(CLI::PositiveNumber);
  grade->add_option("--seed", o.seed, "retry jitter seed");

  auto* augment = app.add_subcommand("augment", "write three-part thoughts before each action");
  add_common(augment, o);
  add_backend(augment, o, "template");
  augment->add_option("--in", o.in)->required();
  augment->add_option("--out", o.out)->required();
  augment->add_option("--world", o.world);
  augment->add_option("--window", o.window)->check(CLI::PositiveNumber);
  augment->add_option("--seed", o.seed, "retry jitter seed");
  augment->add_flag("--force", o.force, "regenerate existing thoughts");

  auto* filter = app.add_subcommand("filter", "keep trajectories judged successful");
  add_common(filter, o);
  filter->add_option("--in", o.in)->required();
  filter->add_option("--out", o.out)->required();
  filter->add_option("--dropped", o.dropped);
  filter->add_option("--world", o.world)->required();
  filter->add_option("--judge", o.judge);
  filter->add_option("--cutoff", o.cutoff, "reported step retention uses score > cutoff");
  filter->add_flag("--case-fold", o.case_fold);

  auto* sft = app.add_subcommand("export-sft", "write masked SFT records (webstar-sft/1)");
  add_common(sft, o);
  sft->add_option("--in", o.in)->required();
  sft->add_option("--out", o.out)->required();
  sft->add_option("--window", o.window)->check(CLI::PositiveNumber);
  sft->add_option("--cutoff", o.cutoff);
  sft->add_option("--mode", o.mode)->check(CLI::IsMember({"all_steps", "correct_steps"}));
  sft->add_flag("--drop-masked", o.drop_masked);
  sft->add_flag("--inline-images", o.inline_images);
  sft->add_option("--world", o.world, "renders sim observations for --inline-images");
  sft->add_option("--images-root", o.images_root);

  auto* reward = app.add_subcommand("export-reward", "write a balanced reward dataset (webscore/1)");
  add_common(reward, o);
  reward->add_option("--in", o.in)->required();
  reward->add_option("--out", o.out)->required();
  reward->add_option("--size", o.size);
  reward->add_option("--seed", o.seed);
  reward->add_option("--window", o.window)->check(CLI::PositiveNumber);

  auto* stats = app.add_subcommand("stats", "score histogram, cdf and retention");
  add_common(stats, o);
  stats->add_option("--in", o.in)->required();
  stats->add_option("--out", o.out);

  auto* sweep = app.add_subcommand("sweep-cutoff", "cutoff ablation with an optional fixed budget");
  add_common(sweep, o);
  sweep->add_option("--in", o.in)->required();
  sweep->add_option("--out-dir", o.out_dir)->required();
  sweep->add_option("--cutoffs", o.cutoffs)->delimiter(',');
  sweep->add_option("--budget", o.budget, "loss-bearing records per cutoff, 0 = no budget");
  sweep->add_option("--seed", o.seed);
  sweep->add_option("--window", o.window)->check(CLI::PositiveNumber);
  sweep->add_option("--world", o.world, "train and evaluate a toy policy per cutoff");
  sweep->add_option("--tasks", o.tasks);
  sweep->add_option("--k", o.k)->check(CLI::PositiveNumber);
  sweep->add_option("--tau", o.tau);
  sweep->add_option("--max-steps", o.max_steps);

  auto* train = app.add_subcommand("train-toy", "fit the count-based policy");
  add_common(train, o);
  train->add_option("--in", o.in)->required();
  train->add_option("--world", o.world)->required();
  train->add_option("--out", o.out)->required();
  train->add_flag("--ignore-mask", o.ignore_mask, "count loss=false records too");

  auto* eval = app.add_subcommand("eval", "pass@1 / pass@k of toy policies");
  add_common(eval, o);
  eval->add_option("--world", o.world)->required();
  eval->add_option("--policy", o.policies, "LABEL=PATH, repeatable");
  eval->add_option("--tasks", o.tasks);
  eval->add_option("--k", o.k)->check(CLI::PositiveNumber);
  eval->add_option("--seed", o.seed);
  eval->add_option("--tau", o.tau);
  eval->add_option("--max-steps", o.max_steps);
  eval->add_option("--out", o.out);

  auto* audit = app.add_subcommand("audit-consistency", "repeat grading and report score spread");
  add_common(audit, o);
  add_backend(audit, o, "oracle");
  audit->add_option("--in", o.in)->required();
  audit->add_option("--world", o.world);
  audit->add_option("--repeats", o.repeats)->check(CLI::Range(2, 1000));
  audit->add_option("--sample", o.sample, "steps to audit, 0 = all");
  audit->add_option("--seed", o.seed);
  audit->add_option("--window", o.window)->check(CLI::PositiveNumber);
  audit->add_option("--out", o.out);

  auto* agree = app.add_subcommand("agreement", "binary agreement against reference grades");
  add_common(agree, o);
  agree->add_option("--grades", o.grades);
  agree->add_option("--reference", o.reference);
  agree->add_option("--counts", o.counts, "tt,tf,ft,ff");
  agree->add_option("--cutoff", o.cutoff, "both >= cutoff or both < cutoff");
  agree->add_option("--out", o.out);

  try {
    std::vector<std::string> full = args;
    if (!args.empty()) {
      for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
        if (sub->get_name() == args.front()) full = with_defaults_from_env_and_config(args, sub, args.front());
      }
    }
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);

    if (gen->parsed()) return cmd_gen_site(o, gen, out);
    if (collect->parsed()) return cmd_collect(o, collect, out);
    if (grade->parsed()) return cmd_grade(o, grade, out, err);
    if (augment->parsed()) return cmd_augment(o, augment, out, err);
    if (filter->parsed()) return cmd_filter(o, filter, out, err);
    if (sft->parsed()) return cmd_export_sft(o, sft, out);
    if (reward->parsed()) return cmd_export_reward(o, reward, out);
    if (stats->parsed()) return cmd_stats(o, stats, out);
    if (sweep->parsed()) return cmd_sweep(o, sweep, out);
    if (train->parsed()) return cmd_train(o, train, out);
    if (eval->parsed()) return cmd_eval(o, eval, out);
    if (audit->parsed()) return cmd_audit(o, audit, out, err);
    if (agree->parsed()) return cmd_agreement(o, agree, out);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const CliFailure& e) {
    err << "error: " << e.what() << "\n";
    return e.code();
  } catch (const DatasetError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InsufficientClass& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const BudgetUnreachable& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const UngradedStep& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const toy::NonSimRecord& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const LengthMismatch& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace webstar::cli
