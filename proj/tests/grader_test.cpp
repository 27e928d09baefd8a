#include "webstar/grader.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <sstream>

#include "webstar/prompts.hpp"
#include "webstar/util.hpp"

namespace webstar {
namespace {

class BlankSource : public ObservationSource {
 public:
  std::optional<Image> load(const ObservationRef& ref) const override {
    if (ref.rfind("missing", 0) == 0) return std::nullopt;
    return Image(320, 240);
  }
};

Trajectory sample(const std::string& id, int steps) {
  Trajectory t;
  t.id = id;
  t.instruction = "Find the rating of Lamp";
  for (int i = 0; i < steps; ++i) {
    Step s;
    s.observation = id + "/" + std::to_string(i) + ".png";
    s.action = i % 3 == 2 ? Action::type("lamp") : Action::click(10 + i, 20 + i);
    t.append(std::move(s));
  }
  return t;
}

// Score is a pure function of the request.
class HashGrader : public GraderBackend {
 public:
  std::string id() const override { return "hash"; }
  GradeResult grade(const GradeRequest& req) override {
    ++calls;
    const int score = static_cast<int>(mix_seed(hash_string(req.trajectory_id), req.step_index) % 11);
    return {score, {}, "Expected value: " + std::to_string(score), "hash"};
  }
  std::atomic<int> calls{0};
};

// Fails every attempt for one step index.
class FaultyGrader : public HashGrader {
 public:
  explicit FaultyGrader(int bad_step) : bad_(bad_step) {}
  GradeResult grade(const GradeRequest& req) override {
    if (req.step_index == bad_) {
      ++failures;
      throw BackendError("injected failure", true);
    }
    return HashGrader::grade(req);
  }
  std::atomic<int> failures{0};

 private:
  int bad_;
};

class SequenceGrader : public GraderBackend {
 public:
  explicit SequenceGrader(std::vector<int> seq) : seq_(std::move(seq)) {}
  std::string id() const override { return "sequence"; }
  GradeResult grade(const GradeRequest&) override {
    const int s = seq_[i_++ % seq_.size()];
    return {s, {}, "Expected value: " + std::to_string(s), "sequence"};
  }

 private:
  std::vector<int> seq_;
  std::size_t i_ = 0;
};

// Throws scripted errors before succeeding.
class FlakyGrader : public GraderBackend {
 public:
  enum class Mode { retryable, fatal, no_score };
  FlakyGrader(Mode mode, int failures) : mode_(mode), failures_(failures) {}
  std::string id() const override { return "flaky"; }
  GradeResult grade(const GradeRequest&) override {
    ++calls;
    if (calls <= failures_) {
      if (mode_ == Mode::retryable) throw BackendError("503", true);
      if (mode_ == Mode::fatal) throw BackendError("401", false);
      parse_grade("analysis without a score");
    }
    return {4, {}, "Expected value: 4", "flaky"};
  }
  int calls = 0;

 private:
  Mode mode_;
  int failures_;
};

GradeParseError::Kind parse_error(const std::string& raw) {
  try {
    parse_grade(raw);
  } catch (const GradeParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for: " << raw;
  return GradeParseError::Kind::no_score_line;
}

TEST(GradingPrompt, TemplateMatchesFixture) {
  EXPECT_EQ(std::string(kGradingPrompt), read_file(WEBSTAR_FIXTURES "/grading_prompt.txt"));
  const auto req = make_grade_request(sample("a", 4), 3, 2);
  const auto conv = build_grading_prompt(req, BlankSource());
  ASSERT_EQ(conv.size(), 2u);
  EXPECT_EQ(conv[0].role, "system");
  ASSERT_EQ(conv[0].parts.size(), 1u);
  EXPECT_EQ(conv[0].parts[0].text, read_file(WEBSTAR_FIXTURES "/grading_prompt.txt"));
}

TEST(GradingPrompt, ExactlyOneScoreLine) {
  const auto text = std::string(kGradingPrompt);
  std::istringstream in(text);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) count += line.rfind("Expected value: <int>", 0) == 0;
  EXPECT_EQ(count, 1);
  EXPECT_NE(text.find("1. "), std::string::npos);
  EXPECT_NE(text.find("8. "), std::string::npos);
}

TEST(GradingPrompt, FirstStepHasOnlyLatestAndZoom) {
  const auto req = make_grade_request(sample("a", 3), 0, 3);
  EXPECT_TRUE(req.history.empty());
  EXPECT_TRUE(req.prior_images.empty());
  const auto conv = build_grading_prompt(req, BlankSource());
  EXPECT_EQ(count_images(conv), 2u);
  const auto user = joined_text(conv, "user");
  EXPECT_NE(user.find("PRIOR_ACTIONS: none"), std::string::npos);
  EXPECT_NE(user.find("ZOOMED_IN"), std::string::npos);
}

TEST(GradingPrompt, WindowOneWithHistory) {
  const auto t = sample("a", 4);
  const auto conv = build_grading_prompt(make_grade_request(t, 3, 1), BlankSource());
  EXPECT_EQ(count_images(conv), 2u);
  const auto user = joined_text(conv, "user");
  for (int k = 0; k < 3; ++k) {
    EXPECT_NE(user.find("Step " + std::to_string(k) + ": " + serialize_action(t.steps[k].action)), std::string::npos);
  }
}

TEST(GradingPrompt, AttachmentCountFollowsWindowingRule) {
  const auto t = sample("a", 6);
  for (int n = 0; n < 6; ++n) {
    for (int w = 1; w <= 7; ++w) {
      const auto req = make_grade_request(t, n, w);
      const std::size_t prior = static_cast<std::size_t>(std::min(w, n + 1) - 1);
      const std::size_t zoom = t.steps[n].action.target() ? 1 : 0;
      EXPECT_EQ(count_images(build_grading_prompt(req, BlankSource())), prior + 1 + zoom) << n << " " << w;
      for (std::size_t i = 0; i < req.prior_images.size(); ++i) {
        EXPECT_EQ(req.prior_images[i].step, n - static_cast<int>(prior) + static_cast<int>(i));
        EXPECT_EQ(req.prior_images[i].image.variant, ImageVariant::annotated);
      }
    }
  }
}

TEST(GradingPrompt, SectionOrder) {
  const auto conv = build_grading_prompt(make_grade_request(sample("a", 3), 1, 2), BlankSource());
  const auto& parts = conv[1].parts;
  std::vector<std::string> labels;
  for (const auto& p : parts) labels.push_back(p.kind == ContentPart::Kind::image ? "<img>" : p.text.substr(0, 12));
  const std::vector<std::string> expected{"USER_TASK: F", "PRIOR_ACTION", "PRIOR_SCREEN", "<img>",
                                          "LATEST_SCREE", "<img>",        "ZOOMED_IN (c", "<img>",
                                          "PROPOSED_NEX"};
  EXPECT_EQ(labels, expected);
}

TEST(GradingPrompt, MissingImage) {
  auto t = sample("a", 2);
  t.steps[1].observation = "missing.png";
  EXPECT_THROW(build_grading_prompt(make_grade_request(t, 1, 1), BlankSource()), MissingImage);
}

TEST(GradingPrompt, Deterministic) {
  const auto req = make_grade_request(sample("a", 4), 2, 3);
  EXPECT_EQ(build_grading_prompt(req, BlankSource()), build_grading_prompt(req, BlankSource()));
}

TEST(ParseGrade, Valid) {
  EXPECT_EQ(parse_grade("...analysis...\nExpected value: 7"), 7);
  EXPECT_EQ(parse_grade("Expected value: 0"), 0);
  EXPECT_EQ(parse_grade("Expected value: 10\n"), 10);
  EXPECT_EQ(parse_grade("  Expected value:   3  \r\n"), 3);
  EXPECT_EQ(parse_grade("**Expected value: 6**"), 6);
  EXPECT_EQ(parse_grade("Expected value: 5\nmore\nExpected value: 5"), 5);
}

TEST(ParseGrade, Errors) {
  using K = GradeParseError::Kind;
  EXPECT_EQ(parse_error("no score here"), K::no_score_line);
  EXPECT_EQ(parse_error("Expected value: seven"), K::no_score_line);
  EXPECT_EQ(parse_error("The `Expected value: <int>` line is missing."), K::no_score_line);
  EXPECT_EQ(parse_error("Expected value: 11"), K::out_of_range);
  EXPECT_EQ(parse_error("Expected value: -1"), K::out_of_range);
  EXPECT_EQ(parse_error("Expected value: 99999999999999999999"), K::out_of_range);
  EXPECT_EQ(parse_error("Expected value: 3\nExpected value: 8"), K::multiple_conflicting);
}

TEST(ParseGrade, NeverSilentDefault) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    std::string raw = "Expected value: ";
    raw += std::to_string(static_cast<int>(rng() % 30) - 10);
    if (rng() % 2) raw += "\nExpected value: " + std::to_string(static_cast<int>(rng() % 12));
    try {
      const int v = parse_grade(raw);
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 10);
    } catch (const GradeParseError&) {
    }
  }
}

TEST(SplitStages, NumberedSections) {
  const auto stages = split_stages(
      "1. Task\nfind lamp\n   1. nested stays\n2. Progress\nhalf\n8. Expected Value\nExpected value: 6\n");
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_NE(stages.at("1").find("nested stays"), std::string::npos);
  EXPECT_NE(stages.at("8").find("Expected value: 6"), std::string::npos);
}

TEST(GradeCorpus, DeterministicAndComplete) {
  const auto t = sample("six", 6);
  HashGrader g;
  const auto a = grade_trajectory(t, g, {});
  const auto b = grade_trajectory(t, g, {});
  EXPECT_TRUE(a.failures.empty());
  EXPECT_EQ(a.calls, 6u);
  for (const auto& s : a.trajectories[0].steps) EXPECT_TRUE(s.grade.has_value());
  EXPECT_EQ(a.trajectories, b.trajectories);
  // Inputs are untouched.
  for (const auto& s : t.steps) EXPECT_FALSE(s.grade.has_value());
}

TEST(GradeCorpus, FaultInjectionGivesPartialFailure) {
  const auto t = sample("six", 6);
  FaultyGrader g(3);
  GradeOptions opts;
  opts.retry = RetryPolicy{3, 0, 0};
  const auto run = grade_trajectory(t, g, opts);
  ASSERT_EQ(run.failures.size(), 1u);
  EXPECT_EQ(run.failures[0].step, 3);
  EXPECT_EQ(run.failures[0].trajectory_id, "six");
  EXPECT_EQ(g.failures, 3);
  int graded = 0;
  for (const auto& s : run.trajectories[0].steps) graded += s.grade.has_value();
  EXPECT_EQ(graded, 5);
  EXPECT_TRUE(run.trajectories[0].steps[3].grade_error.has_value());
}

TEST(GradeCorpus, ParallelismInvariance) {
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 12; ++i) trajs.push_back(sample("t" + std::to_string(i), 1 + i % 7));
  FaultyGrader g(4);
  GradeOptions opts;
  opts.retry = RetryPolicy{2, 0, 0};
  opts.window = 2;
  const auto one = grade_corpus(trajs, g, opts);
  for (const int p : {2, 4, 8}) {
    opts.parallelism = p;
    const auto many = grade_corpus(trajs, g, opts);
    EXPECT_EQ(many.trajectories, one.trajectories) << p;
    ASSERT_EQ(many.failures.size(), one.failures.size());
    for (std::size_t i = 0; i < one.failures.size(); ++i) {
      EXPECT_EQ(many.failures[i].trajectory_id, one.failures[i].trajectory_id);
      EXPECT_EQ(many.failures[i].step, one.failures[i].step);
    }
  }
}

TEST(Retry, RetryableThenSuccess) {
  FlakyGrader g(FlakyGrader::Mode::retryable, 2);
  const auto req = make_grade_request(sample("a", 1), 0, 1);
  EXPECT_EQ(grade_with_retry(g, req, {3, 0, 0}, 1).score, 4);
  EXPECT_EQ(g.calls, 3);
}

TEST(Retry, BudgetExhausted) {
  FlakyGrader g(FlakyGrader::Mode::retryable, 5);
  const auto req = make_grade_request(sample("a", 1), 0, 1);
  EXPECT_THROW(grade_with_retry(g, req, {3, 0, 0}, 1), BackendError);
  EXPECT_EQ(g.calls, 3);
}

TEST(Retry, FatalNotRetried) {
  FlakyGrader g(FlakyGrader::Mode::fatal, 1);
  const auto req = make_grade_request(sample("a", 1), 0, 1);
  EXPECT_THROW(grade_with_retry(g, req, {3, 0, 0}, 1), BackendError);
  EXPECT_EQ(g.calls, 1);
}

TEST(Retry, MissingScoreLineRetriedThenError) {
  FlakyGrader ok(FlakyGrader::Mode::no_score, 1);
  const auto req = make_grade_request(sample("a", 1), 0, 1);
  EXPECT_EQ(grade_with_retry(ok, req, {3, 0, 0}, 1).score, 4);
  FlakyGrader bad(FlakyGrader::Mode::no_score, 9);
  try {
    grade_with_retry(bad, req, {3, 0, 0}, 1);
    FAIL();
  } catch (const GradeParseError& e) {
    EXPECT_EQ(e.kind(), GradeParseError::Kind::no_score_line);
  }
  EXPECT_EQ(bad.calls, 3);
}

TEST(Consistency, DeterministicBackendHasZeroSpread) {
  HashGrader g;
  const auto r = consistency_audit(make_grade_request(sample("a", 3), 2, 1), g, 5);
  EXPECT_EQ(r.scores.size(), 5u);
  EXPECT_EQ(r.range, 0.0);
  EXPECT_EQ(r.std, 0.0);
  EXPECT_EQ(r.cv, 0.0);
}

TEST(Consistency, FixedSequenceClosedForm) {
  SequenceGrader g({6, 6, 7, 6, 7});
  const auto r = consistency_audit(make_grade_request(sample("a", 1), 0, 1), g, 5);
  // mean 6.4, squared deviations 3*0.16 + 2*0.36 = 1.2, sample variance 0.3
  EXPECT_NEAR(r.mean, 6.4, 1e-12);
  EXPECT_EQ(r.range, 1.0);
  EXPECT_NEAR(r.std, std::sqrt(0.3), 1e-12);
  EXPECT_NEAR(r.std, 0.5477, 1e-4);
  EXPECT_NEAR(r.cv, std::sqrt(0.3) / 6.4, 1e-12);
}

TEST(Consistency, NeedsTwoRepeats) {
  HashGrader g;
  EXPECT_THROW(consistency_audit(make_grade_request(sample("a", 1), 0, 1), g, 1), std::invalid_argument);
  const std::vector<int> one{5};
  EXPECT_THROW(consistency_from_scores(one), std::invalid_argument);
}

TEST(Consistency, Summary) {
  const std::vector<int> a{6, 6, 7, 6, 7}, b{5, 5, 5, 5, 5}, c{0, 10, 5, 5, 5};
  const std::vector<ConsistencyReport> reports{consistency_from_scores(a), consistency_from_scores(b),
                                               consistency_from_scores(c)};
  const auto s = summarize_consistency(reports);
  EXPECT_EQ(s.steps, 3u);
  EXPECT_NEAR(s.mean_range, (1.0 + 0.0 + 10.0) / 3.0, 1e-12);
  EXPECT_NEAR(s.median_std, std::sqrt(0.3), 1e-12);
}

TEST(Agreement, ReferenceConfusionCounts) {
  const auto r = agreement_from_counts(36, 16, 11, 37);
  EXPECT_EQ(r.total(), 100);
  EXPECT_DOUBLE_EQ(r.agreement(), 0.73);
  EXPECT_NE(r.table().find("0.73"), std::string::npos);
}

TEST(Agreement, FromScoresUsesInclusiveCutoff) {
  const std::vector<int> grades{5, 4, 10, 0, 6};
  const std::vector<int> ref{5, 5, 2, 3, 9};
  const auto r = agreement_report(grades, ref, 5);
  EXPECT_EQ(r.tt, 2);  // (5,5) and (6,9)
  EXPECT_EQ(r.tf, 1);  // reference 5, grader 4
  EXPECT_EQ(r.ft, 1);  // reference 2, grader 10
  EXPECT_EQ(r.ff, 1);
}

TEST(Agreement, Extremes) {
  const std::vector<int> same{0, 3, 5, 7, 10};
  const auto r = agreement_report(same, same);
  EXPECT_DOUBLE_EQ(r.agreement(), 1.0);
  EXPECT_EQ(r.tf + r.ft, 0);
  const std::vector<int> tens(8, 10), zeros(8, 0);
  EXPECT_DOUBLE_EQ(agreement_report(tens, zeros, 5).agreement(), 0.0);
}

TEST(Agreement, LengthMismatch) {
  const std::vector<int> a{1, 2}, b{1};
  EXPECT_THROW(agreement_report(a, b), LengthMismatch);
}

}  // namespace
}  // namespace webstar
