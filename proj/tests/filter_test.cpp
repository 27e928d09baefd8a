#include "webstar/filter.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "webstar/thought.hpp"
#include "webstar/util.hpp"

namespace webstar {
namespace {

Trajectory graded(const std::string& id, const std::vector<int>& scores) {
  Trajectory t;
  t.id = id;
  t.instruction = "Find the opening hours";
  t.metadata["task_id"] = "task-" + id;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Step s;
    s.observation = id + "/" + std::to_string(i) + ".png";
    s.action = Action::click(static_cast<int>(i), 1);
    s.grade = Grade{scores[i], "", "g"};
    s.thought = split_thought("Page " + std::to_string(i) + " is open. It has a link. Click it.");
    t.append(std::move(s));
  }
  return t;
}

std::vector<Trajectory> random_corpus(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<Trajectory> out;
  for (int i = 0; i < n; ++i) {
    std::vector<int> scores(1 + rng() % 12);
    for (auto& s : scores) s = static_cast<int>(rng() % 11);
    out.push_back(graded("t" + std::to_string(i), scores));
  }
  return out;
}

TEST(Mask, WorkedExample) {
  const auto t = graded("a", {10, 3, 7, 5, 0, 8});
  EXPECT_EQ(compute_mask(t, 5), (std::vector<bool>{true, false, true, false, false, true}));
}

TEST(Mask, ExhaustiveStrictComparison) {
  for (int score = 0; score <= 10; ++score) {
    for (int cutoff = 0; cutoff <= 10; ++cutoff) {
      EXPECT_EQ(compute_mask(graded("a", {score}), cutoff)[0], score > cutoff) << score << " " << cutoff;
    }
  }
}

TEST(Mask, UngradedStepThrows) {
  auto t = graded("a", {9, 9, 9});
  t.steps[1].grade.reset();
  try {
    compute_mask(t);
    FAIL();
  } catch (const UngradedStep& e) {
    EXPECT_EQ(e.trajectory_id(), "a");
    EXPECT_EQ(e.index(), 1);
  }
  EXPECT_THROW(build_sft_records(t, 1, 5, ExportMode::correct_steps), UngradedStep);
  EXPECT_NO_THROW(build_sft_records(t, 1, 5, ExportMode::all_steps));
}

TEST(Sft, ContextKeepsMaskedSteps) {
  const auto t = graded("a", {10, 3, 7, 5, 0, 8});
  const auto recs = build_sft_records(t, 2, 5, ExportMode::correct_steps);
  ASSERT_EQ(recs.size(), 6u);
  for (int n = 0; n < 6; ++n) {
    EXPECT_EQ(recs[n].loss, t.steps[n].grade->score > 5);
    EXPECT_EQ(recs[n].context, make_context(t, n, 2));
    EXPECT_EQ(recs[n].target_action, t.steps[n].action);
    EXPECT_EQ(recs[n].task_ref, "task-a");
  }
  // The masked step 1 still appears in the history of step 2.
  EXPECT_EQ(recs[2].context.history[1].action, t.steps[1].action);
  for (const auto& r : build_sft_records(t, 2, 5, ExportMode::all_steps)) EXPECT_TRUE(r.loss);
}

TEST(Sft, JsonRoundTrip) {
  const auto corpus = random_corpus(3, 20);
  std::ostringstream out;
  SftExportOptions opts;
  opts.window = 3;
  const auto sum = export_sft(corpus, opts, out);
  const auto path = std::filesystem::temp_directory_path() / "webstar_filter_sft.jsonl";
  std::ofstream(path) << out.str();
  const auto back = read_sft_jsonl(path);
  std::vector<SftRecord> expected;
  for (const auto& t : corpus) {
    for (auto& r : build_sft_records(t, 3, 5, ExportMode::correct_steps)) expected.push_back(std::move(r));
  }
  EXPECT_EQ(back, expected);
  EXPECT_EQ(sum.records, expected.size());
}

TEST(Sft, LossOnlyOnTargetTurn) {
  const auto j = to_json(build_sft_records(graded("a", {2, 9}), 1, 5, ExportMode::correct_steps)[1]);
  const auto& msgs = j["messages"];
  for (std::size_t i = 0; i + 1 < msgs.size(); ++i) EXPECT_FALSE(msgs[i]["loss"].get<bool>());
  EXPECT_TRUE(msgs.back()["loss"].get<bool>());
  EXPECT_EQ(msgs.back()["role"], "assistant");
}

TEST(Sft, ModeCountsMatchOracle) {
  const auto corpus = random_corpus(11, 40);
  std::size_t steps = 0;
  std::size_t good = 0;
  for (const auto& t : corpus) {
    for (const auto& s : t.steps) {
      ++steps;
      good += s.grade->score > 5;
    }
  }
  std::ostringstream a;
  std::ostringstream b;
  SftExportOptions all;
  all.mode = ExportMode::all_steps;
  const auto sa = export_sft(corpus, all, a);
  EXPECT_EQ(sa.loss_bearing, steps);
  EXPECT_EQ(sa.records, steps);
  SftExportOptions correct;
  correct.drop_masked = true;
  const auto sc = export_sft(corpus, correct, b);
  EXPECT_EQ(sc.loss_bearing, good);
  EXPECT_EQ(sc.records, good);
  EXPECT_EQ(sc.masked, steps - good);
  EXPECT_EQ(sc.correct_steps, good);
  EXPECT_EQ(sc.all_steps, steps);
}

TEST(Sft, InlineImagesNeedSource) {
  const auto rec = build_sft_records(graded("a", {9}), 1, 5, ExportMode::all_steps)[0];
  SftJsonOptions opts;
  opts.inline_images = true;
  EXPECT_THROW(to_json(rec, opts), std::invalid_argument);
}

TEST(Reward, BalancedAndReproducible) {
  const auto corpus = random_corpus(5, 400);
  const auto a = export_reward_dataset(corpus, 1000, 17);
  EXPECT_EQ(a.records.size(), 1000u);
  std::size_t pos = 0;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& r : a.records) {
    pos += r.positive;
    EXPECT_EQ(r.positive, r.score > 5);
    EXPECT_TRUE(seen.emplace(r.trajectory_id, r.step_index).second);
  }
  EXPECT_EQ(pos, 500u);
  const auto b = export_reward_dataset(corpus, 1000, 17);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(to_json(a.records[i]), to_json(b.records[i]));
  const auto c = export_reward_dataset(corpus, 1000, 18);
  bool differs = false;
  for (std::size_t i = 0; i < c.records.size(); ++i) differs |= to_json(a.records[i]) != to_json(c.records[i]);
  EXPECT_TRUE(differs);
}

TEST(Reward, OddSizeFavoursPositives) {
  const auto r = export_reward_dataset(random_corpus(5, 50), 7, 1);
  EXPECT_EQ(r.positive, 4u);
  EXPECT_EQ(r.negative, 3u);
}

TEST(Reward, BoundaryIndependentOfCutoff) {
  const auto r = export_reward_dataset(std::vector<Trajectory>{graded("a", {5, 6})}, 2, 1);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_FALSE(r.records[0].positive);
  EXPECT_TRUE(r.records[1].positive);
}

TEST(Reward, InsufficientClass) {
  const std::vector<Trajectory> corpus{graded("a", {9, 9, 9, 1})};
  try {
    export_reward_dataset(corpus, 4, 1);
    FAIL();
  } catch (const InsufficientClass& e) {
    EXPECT_FALSE(e.positive());
    EXPECT_EQ(e.available(), 1u);
    EXPECT_EQ(e.needed(), 2u);
  }
}

TEST(Reward, ImagesFollowGradingWindow) {
  const auto r = export_reward_dataset(std::vector<Trajectory>{graded("a", {9, 1, 9, 1})}, 4, 1, 2);
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.images.size(), rec.step_index == 0 ? 1u : 2u);
    EXPECT_EQ(rec.images.back().observation, "a/" + std::to_string(rec.step_index) + ".png");
    EXPECT_EQ(rec.history.size(), static_cast<std::size_t>(rec.step_index));
  }
}

TEST(SampleIndices, DistinctSortedSeeded) {
  for (std::size_t k = 0; k <= 30; ++k) {
    const auto s = sample_indices(30, k, 9);
    EXPECT_EQ(s.size(), k);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), k);
    EXPECT_EQ(s, sample_indices(30, k, 9));
  }
}

TEST(Sweep, RetentionMonotoneAndBudgeted) {
  const auto corpus = random_corpus(21, 200);
  const std::vector<int> cutoffs{2, 4, 5, 6, 8};
  const auto free = cutoff_sweep(corpus, cutoffs, std::nullopt, 1);
  for (std::size_t i = 1; i < free.size(); ++i) EXPECT_LE(free[i].retention, free[i - 1].retention);
  const std::size_t budget = free.back().available;
  const auto fixed = cutoff_sweep(corpus, cutoffs, budget, 1);
  for (const auto& e : fixed) {
    EXPECT_EQ(e.selected, budget);
    std::size_t loss = 0;
    for (const auto& r : e.records) {
      loss += r.loss;
      if (r.loss) EXPECT_GT(*r.score, e.cutoff);
    }
    EXPECT_EQ(loss, budget);
  }
  EXPECT_THROW(cutoff_sweep(corpus, cutoffs, free.back().available + 1, 1), BudgetUnreachable);
  const auto table = sweep_table(fixed, std::vector<std::string>{"1", "2", "3", "4", "5"});
  EXPECT_EQ(table.rfind("Cutoff", 0), 0u);
  EXPECT_NE(table.find("Pass@1 (Pass@4)"), std::string::npos);
}

TEST(Stats, HistogramAndRetention) {
  const std::vector<Trajectory> corpus{graded("a", {10, 3, 7, 5, 0, 8}), graded("b", {6, 6})};
  const auto st = score_stats(corpus);
  EXPECT_EQ(st.total, 8u);
  EXPECT_EQ(st.histogram[6], 2u);
  EXPECT_DOUBLE_EQ(st.retention[5], 5.0 / 8.0);
  EXPECT_DOUBLE_EQ(st.cdf[10], 1.0);
  for (int c = 0; c <= 10; ++c) EXPECT_DOUBLE_EQ(st.cdf[c] + st.retention[c], 1.0);
  ASSERT_EQ(st.per_trajectory.size(), 2u);
  EXPECT_DOUBLE_EQ(st.per_trajectory[0].second, 0.5);
  EXPECT_DOUBLE_EQ(st.per_trajectory[1].second, 1.0);
}

class ParityJudge : public TrajectoryJudge {
 public:
  std::string id() const override { return "parity"; }
  bool judge(const Trajectory& t) override {
    if (t.steps.size() == 3) throw BackendError("judge down", false);
    return t.steps.size() % 2 == 0;
  }
};

TEST(Filter, KeptDroppedAndErrors) {
  const auto corpus = random_corpus(8, 60);
  ParityJudge judge;
  const auto one = filter_trajectories(corpus, judge, 1);
  const auto many = filter_trajectories(corpus, judge, 8);
  EXPECT_EQ(one.kept, many.kept);
  EXPECT_EQ(one.dropped, many.dropped);
  EXPECT_EQ(one.kept.size() + one.dropped.size() + one.errors.size(), corpus.size());
  for (const auto& t : one.kept) EXPECT_EQ(t.success, true);
  for (const auto& t : one.dropped) EXPECT_EQ(t.success, false);
  for (const auto& e : one.errors) EXPECT_EQ(e.step, -1);
}

}  // namespace
}  // namespace webstar
