#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "webstar/action.hpp"
#include "webstar/chat.hpp"
#include "webstar/trajectory.hpp"

namespace webstar {

struct PriorScreenshot {
  int step = 0;
  ImageRef image;
  friend bool operator==(const PriorScreenshot&, const PriorScreenshot&) = default;
};

struct GradeRequest {
  std::string instruction;
  std::vector<Action> history;                 // every earlier action, oldest first
  std::vector<PriorScreenshot> prior_images;   // annotated screenshots of the last w-1 steps
  ImageRef current;                            // annotated latest screenshot
  std::optional<ImageRef> zoom;                // absent for actions without a target point
  Action proposed_action;
  int step_index = 0;
  std::string trajectory_id;
  std::string task_ref;  // trajectory metadata "task_id", empty if unknown

  friend bool operator==(const GradeRequest&, const GradeRequest&) = default;
};

// Request for step n with a window of w screenshots (the current one included).
GradeRequest make_grade_request(const Trajectory& traj, int n, int window);

struct GradeResult {
  int score = 0;
  std::map<std::string, std::string> stages;  // "1".."8" -> analysis text
  std::string raw;
  std::string grader_id;
};

class GradeParseError : public std::runtime_error {
 public:
  enum class Kind { no_score_line, out_of_range, multiple_conflicting };
  GradeParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Score from the "Expected value: <int>" line(s) of a grader response.
int parse_grade(std::string_view raw);
// Best-effort split of a response into its numbered protocol sections.
std::map<std::string, std::string> split_stages(std::string_view raw);

// System message: the grading template verbatim. User message: task, action
// history, windowed screenshots, latest annotated screenshot, zoom, proposal.
Conversation build_grading_prompt(const GradeRequest& req, const ObservationSource& images);

class GraderBackend {
 public:
  virtual ~GraderBackend() = default;
  virtual std::string id() const = 0;
  virtual GradeResult grade(const GradeRequest& req) = 0;
  // Maximum concurrent grade() calls; 0 means unlimited.
  virtual int concurrency_limit() const { return 0; }
};

class RemoteGrader : public GraderBackend {
 public:
  RemoteGrader(ChatClient& client, const ObservationSource& images, std::string id)
      : client_(client), images_(images), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  GradeResult grade(const GradeRequest& req) override;

 private:
  ChatClient& client_;
  const ObservationSource& images_;
  std::string id_;
};

struct GradeOptions {
  int window = 1;
  int parallelism = 1;
  RetryPolicy retry;
};

struct StepFailure {
  std::string trajectory_id;
  int step = 0;
  std::string error;
};

// Graded copies of the inputs. Failed steps keep no grade, carry grade_error,
// and are listed in `failures`; a non-empty list is a partial failure.
struct GradeRun {
  std::vector<Trajectory> trajectories;
  std::vector<StepFailure> failures;
  std::size_t calls = 0;
};

GradeRun grade_corpus(std::span<const Trajectory> trajs, GraderBackend& backend, const GradeOptions& opts);
GradeRun grade_trajectory(const Trajectory& traj, GraderBackend& backend, const GradeOptions& opts);

// Calls backend.grade with the retry policy. Retries retryable BackendErrors
// and missing score lines; rethrows the last error.
GradeResult grade_with_retry(GraderBackend& backend, const GradeRequest& req, const RetryPolicy& retry,
                             std::uint64_t key);

struct ConsistencyReport {
  std::vector<int> scores;
  double mean = 0.0;
  double range = 0.0;
  double std = 0.0;  // sample standard deviation
  double cv = 0.0;   // std / mean; 0 when both are 0
};

ConsistencyReport consistency_from_scores(std::span<const int> scores);
ConsistencyReport consistency_audit(const GradeRequest& req, GraderBackend& backend, int repeats);

struct ConsistencySummary {
  std::size_t steps = 0;
  double mean_range = 0.0;
  double median_std = 0.0;
  double median_cv = 0.0;
};

ConsistencySummary summarize_consistency(std::span<const ConsistencyReport> reports);

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Rows are the reference labels, columns the grader: tt = both >= cutoff,
// tf = reference >= cutoff but grader below, ft the converse, ff both below.
struct AgreementReport {
  int cutoff = 5;
  long tt = 0, tf = 0, ft = 0, ff = 0;

  long total() const { return tt + tf + ft + ff; }
  double agreement() const;
  std::string table() const;
};

AgreementReport agreement_report(std::span<const int> grades, std::span<const int> reference, int cutoff = 5);
AgreementReport agreement_from_counts(long tt, long tf, long ft, long ff, int cutoff = 5);

}  // namespace webstar
