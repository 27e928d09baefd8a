// Acceptance report: one PASS/FAIL line per criterion.
//
//   webstar_acceptance [--work DIR] [--known-infeasible N[,N...]]
//
// Exit status is 0 when every criterion passes except those listed as known
// infeasible, which are still measured and printed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "webstar/action.hpp"
#include "webstar/cli.hpp"
#include "webstar/filter.hpp"
#include "webstar/grader.hpp"
#include "webstar/oracle.hpp"
#include "webstar/prompts.hpp"
#include "webstar/sim.hpp"
#include "webstar/thought.hpp"
#include "webstar/toy.hpp"
#include "webstar/util.hpp"

namespace fs = std::filesystem;
using namespace webstar;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Shared simulator pipeline.

struct Corpus {
  sim::SimWorld world;
  std::vector<Trajectory> graded;
  std::vector<Trajectory> kept;
  double seconds = 0.0;
};

Corpus collect_and_grade(std::uint64_t seed, int rollouts, double noise) {
  const auto t0 = std::chrono::steady_clock::now();
  Corpus c;
  c.world = sim::generate_site(seed);
  const sim::TeacherConfig cfg{noise, 0.0, 0.8, seed};
  const auto per = static_cast<std::size_t>(rollouts);
  std::vector<Trajectory> raw(c.world.tasks.size() * per);
  parallel_for(raw.size(), workers(), [&](std::size_t i) {
    raw[i] = sim::teacher_rollout(c.world, c.world.tasks[i / per], cfg, kDefaultMaxSteps, static_cast<int>(i % per));
  });
  sim::OracleGrader grader(c.world);
  GradeOptions go;
  go.parallelism = workers();
  auto run = grade_corpus(raw, grader, go);
  c.graded = std::move(run.trajectories);
  sim::OracleJudge judge(c.world);
  c.kept = filter_trajectories(c.graded, judge, workers()).kept;
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

std::vector<SftRecord> records(std::span<const Trajectory> trajs, ExportMode mode, int cutoff = 5) {
  std::vector<SftRecord> out;
  for (const auto& t : trajs) {
    for (auto& r : build_sft_records(t, 1, cutoff, mode)) out.push_back(std::move(r));
  }
  return out;
}

std::size_t loss_bearing(std::span<const SftRecord> recs) {
  std::size_t n = 0;
  for (const auto& r : recs) n += r.loss;
  return n;
}

std::map<std::uint64_t, Corpus>& corpora() {
  static std::map<std::uint64_t, Corpus> cache;
  return cache;
}

const Corpus& corpus(std::uint64_t seed) {
  auto& cache = corpora();
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, collect_and_grade(seed, 16, 0.4)).first;
  return it->second;
}

// Criteria.

Outcome less_is_more() {
  Outcome o{true, ""};
  for (const std::uint64_t seed : {1, 2, 3}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& c = corpus(seed);
    const auto base_recs = records(c.kept, ExportMode::all_steps);
    const auto filt_recs = records(c.kept, ExportMode::correct_steps);
    const auto base = toy::train(base_recs, true, c.world);
    const auto filt = toy::train(filt_recs, true, c.world);
    const auto rb = toy::evaluate(base, c.world, c.world.tasks, 4, seed, {}, workers());
    const auto rf = toy::evaluate(filt, c.world, c.world.tasks, 4, seed, {}, workers());
    const double secs =
        c.seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double margin = 100.0 * (rf.pass1 - rb.pass1);
    const auto nb = loss_bearing(base_recs);
    const auto nf = loss_bearing(filt_recs);
    const bool ok = c.world.tasks.size() >= 50 && margin >= 5.0 && nf < nb && secs < 60.0;
    o.pass = o.pass && ok;
    o.detail += "seed " + std::to_string(seed) + ": all-steps " + rb.cell() + " on " + std::to_string(nb) +
                " records, filtered " + rf.cell() + " on " + std::to_string(nf) + ", margin " +
                fmt("%.1f", margin) + " pts, " + fmt("%.1f", secs) + " s; ";
  }
  return o;
}

Outcome sub_half_regime() {
  std::size_t steps = 0;
  std::size_t tens = 0;
  for (const std::uint64_t seed : {1, 2, 3}) {
    for (const auto& t : corpus(seed).kept) {
      for (const auto& s : t.steps) {
        tens += s.grade->score == 10;
        ++steps;
      }
    }
    if (steps >= 10000) break;
  }
  const double p = static_cast<double>(tens) / static_cast<double>(steps);
  const double bound = 0.5 + 3.0 * std::sqrt(0.25 / static_cast<double>(steps));
  return {steps >= 10000 && p < bound, "score-10 fraction in successful trajectories " + fmt("%.4f", p) + " over " +
                                           std::to_string(steps) + " steps, bound " + fmt("%.4f", bound)};
}

Outcome cutoff_sweep_harness() {
  const auto& c = corpus(1);
  const std::vector<int> cutoffs{2, 4, 5, 6, 8};
  const auto free = cutoff_sweep(c.graded, cutoffs, std::nullopt, 1);
  std::size_t budget = free.front().available;
  for (const auto& e : free) budget = std::min(budget, e.available);
  const auto entries = cutoff_sweep(c.graded, cutoffs, budget, 1);
  bool monotone = true;
  for (std::size_t i = 1; i < entries.size(); ++i) monotone &= entries[i].retention <= entries[i - 1].retention;
  bool budgeted = true;
  std::vector<std::string> pass;
  for (const auto& e : entries) {
    budgeted &= e.selected == budget && loss_bearing(e.records) == budget;
    if (e.cutoff == 5) {
      const auto policy = toy::train(e.records, true, c.world);
      pass.push_back(toy::evaluate(policy, c.world, c.world.tasks, 4, 1, {}, workers()).cell());
    } else {
      pass.emplace_back("-");
    }
  }
  const auto table = sweep_table(entries, pass);
  const std::regex cell(R"(\d+\.\d \(\d+\.\d\))");
  const bool formatted = table.rfind("Cutoff", 0) == 0 && table.find("Pass@1 (Pass@4)") != std::string::npos &&
                         std::regex_match(pass[2], cell);
  std::string flat = table;
  for (auto& ch : flat) {
    if (ch == '\n') ch = ';';
  }
  return {monotone && budgeted && formatted, "budget " + std::to_string(budget) + ", table: " + flat};
}

Outcome mask_semantics() {
  Trajectory t;
  t.id = "m";
  for (const int s : {10, 3, 7, 5, 0, 8}) t.append(Step{.action = Action::wait(), .grade = Grade{s, "", "g"}});
  const bool example = compute_mask(t, 5) == std::vector<bool>{true, false, true, false, false, true};
  int mismatches = 0;
  for (int s = 0; s <= 10; ++s) {
    for (int c = 0; c <= 10; ++c) {
      Trajectory one;
      one.append(Step{.action = Action::wait(), .grade = Grade{s, "", "g"}});
      mismatches += compute_mask(one, c)[0] != (s > c);
    }
  }
  return {example && mismatches == 0,
          std::string("[10,3,7,5,0,8] -> ") + (example ? "[1,0,1,0,0,1]" : "wrong") + ", " +
              std::to_string(mismatches) + " mismatches over 121 pairs"};
}

Outcome agreement() {
  const auto r = agreement_from_counts(36, 16, 11, 37);
  return {r.agreement() == 0.73, "counts 36,16,11,37 give agreement " + fmt("%.2f", r.agreement()) +
                                     (r.agreement() == 0.73 ? " (exact)" : " (inexact)")};
}

class BlankSource : public ObservationSource {
 public:
  std::optional<Image> load(const ObservationRef&) const override { return Image(64, 48); }
};

Outcome prompt_conformance() {
  const std::string dir = WEBSTAR_FIXTURES;
  const auto grading = read_file(dir + "/grading_prompt.txt");
  const auto thought = read_file(dir + "/thought_prompt.txt");
  Trajectory t;
  t.id = "p";
  t.instruction = "Find the price";
  t.append(Step{.observation = "a.png", .action = Action::click(3, 4)});
  t.append(Step{.observation = "b.png", .action = Action::finished("7 USD")});
  const BlankSource src;
  const auto gconv = build_grading_prompt(make_grade_request(t, 1, 2), src);
  const auto tconv = build_thought_prompt(make_thought_request(t, 1, 2), src);
  const bool bytes = gconv[0].parts[0].text == grading && tconv[0].parts[0].text == thought &&
                     std::string(kGradingPrompt) == grading && std::string(kThoughtPrompt) == thought;

  const auto kind_of = [](const std::string& raw) -> std::optional<GradeParseError::Kind> {
    try {
      parse_grade(raw);
    } catch (const GradeParseError& e) {
      return e.kind();
    }
    return std::nullopt;
  };
  const bool valid = parse_grade("8. Expected Value\nExpected value: 7\n") == 7;
  const bool missing = kind_of("no verdict") == GradeParseError::Kind::no_score_line;
  const bool range = kind_of("Expected value: 11") == GradeParseError::Kind::out_of_range;
  const bool conflict =
      kind_of("Expected value: 3\nExpected value: 8") == GradeParseError::Kind::multiple_conflicting;
  return {bytes && valid && missing && range && conflict,
          std::string("fixtures ") + (bytes ? "byte-identical" : "differ") + ", parse cases valid/missing/11/conflicting " +
              (valid ? "ok" : "bad") + "/" + (missing ? "ok" : "bad") + "/" + (range ? "ok" : "bad") + "/" +
              (conflict ? "ok" : "bad")};
}

class SequenceGrader : public GraderBackend {
 public:
  explicit SequenceGrader(std::vector<int> seq) : seq_(std::move(seq)) {}
  std::string id() const override { return "sequence"; }
  GradeResult grade(const GradeRequest&) override {
    GradeResult r;
    r.raw = "Expected value: " + std::to_string(seq_[next_++ % seq_.size()]);
    r.score = parse_grade(r.raw);
    return r;
  }

 private:
  std::vector<int> seq_;
  std::size_t next_ = 0;
};

Outcome consistency() {
  const auto& c = corpus(1);
  sim::OracleGrader oracle(c.world);
  double worst = 0.0;
  std::size_t audited = 0;
  for (std::size_t i = 0; i < c.graded.size() && audited < 200; i += 7) {
    const auto& t = c.graded[i];
    for (int n = 0; n < static_cast<int>(t.steps.size()); n += 3) {
      worst = std::max(worst, consistency_audit(make_grade_request(t, n, 1), oracle, 5).std);
      ++audited;
    }
  }
  SequenceGrader seq({6, 6, 7, 6, 7});
  const auto r = consistency_audit(make_grade_request(c.graded[0], 0, 1), seq, 5);
  const double err = std::abs(r.std - 0.5477225575051661);
  return {worst == 0.0 && err < 1e-9, "oracle max std " + fmt("%g", worst) + " over " + std::to_string(audited) +
                                          " steps, sequence std " + fmt("%.12f", r.std)};
}

Outcome balanced_export() {
  const auto& c = corpus(1);
  const auto a = export_reward_dataset(c.graded, 1000, 42);
  const auto b = export_reward_dataset(c.graded, 1000, 42);
  std::size_t pos = 0;
  for (const auto& r : a.records) pos += r.score > 5;
  bool same = a.records.size() == b.records.size();
  for (std::size_t i = 0; same && i < a.records.size(); ++i) same = to_json(a.records[i]) == to_json(b.records[i]);
  return {a.records.size() == 1000 && pos == 500 && same,
          std::to_string(pos) + "/" + std::to_string(a.records.size() - pos) + " from a pool of " +
              std::to_string(a.pool_positive) + "+" + std::to_string(a.pool_negative) +
              (same ? ", reproducible" : ", NOT reproducible")};
}

Action random_action(std::mt19937_64& rng) {
  const auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  const auto coord = [&] { return pick(4000); };
  const auto payload = [&] {
    static const std::string alphabet = "abcXYZ 019,.()\\\n+é";
    std::string s;
    const int n = pick(12);
    for (int i = 0; i < n; ++i) s += alphabet[static_cast<std::size_t>(pick(static_cast<int>(alphabet.size())))];
    return s;
  };
  switch (pick(9)) {
    case 0: return Action::click(coord(), coord());
    case 1: return Action::left_double(coord(), coord());
    case 2: return Action::right_single(coord(), coord());
    case 3: return Action::drag(coord(), coord(), coord(), coord());
    case 4: {
      std::optional<int> px;
      if (pick(2)) px = 1 + pick(2000);
      return Action::scroll(coord(), coord(), static_cast<ScrollDirection>(pick(4)), px);
    }
    case 5: return Action::type(payload());
    case 6: {
      std::vector<std::string> keys;
      for (int i = 0, n = 1 + pick(3); i < n; ++i) keys.push_back(std::string(1, static_cast<char>('A' + pick(26))));
      return Action::hotkey(keys);
    }
    case 7: return Action::wait();
    default: return Action::finished(payload());
  }
}

Outcome dsl_fuzz() {
  std::mt19937_64 rng(2024);
  int round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_action(rng);
    const auto text = serialize_action(a);
    round_trip_failures += !(parse_action(text) == a && serialize_action(parse_action(text)) == text);
  }
  int crashes = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string bytes(static_cast<std::size_t>(rng() % 64), '\0');
    for (auto& ch : bytes) ch = static_cast<char>(rng() & 0xff);
    if (i % 2) bytes = "click(" + bytes;
    try {
      parse_action(bytes);
    } catch (const ActionParseError&) {
    } catch (...) {
      ++crashes;
    }
  }
  return {round_trip_failures == 0 && crashes == 0,
          std::to_string(round_trip_failures) + " round-trip failures in 10000, " + std::to_string(crashes) +
              " non-parse errors in 10000 random inputs"};
}

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = sha256_hex(read_file(e.path().string()));
  }
  return out;
}

bool run_pipeline(const fs::path& dir, int parallelism) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  const auto par = std::to_string(parallelism);
  const std::vector<std::vector<std::string>> steps{
      {"gen-site", "--seed", "5", "--pages", "30", "--out", p("world.json")},
      {"collect", "--world", p("world.json"), "--rollouts", "8", "--seed", "5", "--out", p("raw.jsonl")},
      {"grade", "--world", p("world.json"), "--in", p("raw.jsonl"), "--out", p("graded.jsonl"), "--window", "2"},
      {"filter", "--world", p("world.json"), "--in", p("graded.jsonl"), "--out", p("kept.jsonl"), "--dropped",
       p("dropped.jsonl")},
      {"augment", "--world", p("world.json"), "--in", p("kept.jsonl"), "--out", p("thoughts.jsonl")},
      {"export-sft", "--in", p("thoughts.jsonl"), "--out", p("sft.jsonl")},
      {"export-sft", "--in", p("thoughts.jsonl"), "--out", p("sft_all.jsonl"), "--mode", "all_steps"},
      {"export-reward", "--in", p("graded.jsonl"), "--out", p("reward.jsonl"), "--size", "200", "--seed", "5"},
      {"stats", "--in", p("graded.jsonl"), "--out", p("stats.json")},
      {"sweep-cutoff", "--in", p("graded.jsonl"), "--out-dir", p("sweep"), "--budget", "100", "--world",
       p("world.json")},
      {"train-toy", "--world", p("world.json"), "--in", p("sft.jsonl"), "--out", p("filtered.policy.json")},
      {"train-toy", "--world", p("world.json"), "--in", p("sft_all.jsonl"), "--out", p("all.policy.json")},
      {"eval", "--world", p("world.json"), "--policy", "All steps=" + p("all.policy.json"), "--policy",
       "Filtered=" + p("filtered.policy.json"), "--out", p("eval.json")},
      {"audit-consistency", "--world", p("world.json"), "--in", p("graded.jsonl"), "--sample", "30", "--out",
       p("audit.json")},
  };
  for (auto args : steps) {
    args.push_back("--parallelism");
    args.push_back(par);
    std::ostringstream out;
    std::ostringstream err;
    if (cli::run_cli(args, out, err) != cli::kExitOk) {
      std::cerr << args[0] << " failed: " << err.str();
      return false;
    }
  }
  return true;
}

fs::path g_work = fs::temp_directory_path() / "webstar_acceptance";

Outcome determinism() {
  std::vector<std::map<std::string, std::string>> trees;
  for (const int par : {1, 4, 8}) {
    for (int rerun = 0; rerun < (par == 1 ? 2 : 1); ++rerun) {
      const auto dir = g_work / ("p" + std::to_string(par) + "_" + std::to_string(rerun));
      if (!run_pipeline(dir, par)) return {false, "pipeline failed at parallelism " + std::to_string(par)};
      trees.push_back(tree_hashes(dir));
    }
  }
  bool same = true;
  for (const auto& t : trees) same &= t == trees.front();
  std::size_t manifests = 0;
  for (const auto& [name, hash] : trees.front()) manifests += name.find("manifest") != std::string::npos;
  return {same && manifests > 0, std::to_string(trees.front().size()) + " files (" + std::to_string(manifests) +
                                     " manifests) " + (same ? "identical" : "DIFFER") +
                                     " across parallelism 1, 1 (rerun), 4, 8"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> infeasible;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--known-infeasible" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string n; std::getline(list, n, ',');) infeasible.insert(std::stoi(n));
    } else {
      std::cerr << "usage: webstar_acceptance [--work DIR] [--known-infeasible N[,N...]]\n";
      return 1;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"less-is-more", less_is_more},
      {"sub-half correctness", sub_half_regime},
      {"cutoff sweep", cutoff_sweep_harness},
      {"mask semantics", mask_semantics},
      {"agreement", agreement},
      {"prompt conformance", prompt_conformance},
      {"consistency audit", consistency},
      {"balanced reward export", balanced_export},
      {"DSL fuzz", dsl_fuzz},
      {"determinism", determinism},
  };
  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << o.detail << (!o.pass && infeasible.count(n) ? " (known infeasible)" : "") << std::endl;
    if (!o.pass && !infeasible.count(n)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
