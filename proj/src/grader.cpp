#include "webstar/grader.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "webstar/prompts.hpp"
#include "webstar/util.hpp"

namespace webstar {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return lines;
}

std::string strip_markup(std::string_view line) {
  std::string out;
  for (const char c : line) {
    if (c != '*' && c != '`') out += c;
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ContentPart image_part(const ObservationSource& images, const ImageRef& ref) {
  return ContentPart::make_image(encode_png(resolve_image(images, ref)), ref.describe());
}

}  // namespace

GradeRequest make_grade_request(const Trajectory& traj, int n, int window) {
  if (n < 0 || n >= static_cast<int>(traj.steps.size())) {
    throw std::out_of_range("step " + std::to_string(n) + " outside trajectory '" + traj.id + "'");
  }
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  const auto overlay = [](const Step& s, ImageVariant v) {
    ImageRef r{s.observation, v, s.action, s.annotated_observation};
    return r;
  };
  GradeRequest req;
  req.instruction = traj.instruction;
  req.step_index = n;
  req.trajectory_id = traj.id;
  if (const auto it = traj.metadata.find("task_id"); it != traj.metadata.end()) req.task_ref = it->second;
  for (int k = 0; k < n; ++k) req.history.push_back(traj.steps[k].action);
  for (int k = std::max(0, n - window + 1); k < n; ++k) {
    req.prior_images.push_back({k, overlay(traj.steps[k], ImageVariant::annotated)});
  }
  const auto& step = traj.steps[n];
  req.current = overlay(step, ImageVariant::annotated);
  if (step.action.target()) req.zoom = overlay(step, ImageVariant::zoom);
  req.proposed_action = step.action;
  return req;
}

int parse_grade(std::string_view raw) {
  static const std::regex kLine(R"(^\s*Expected value:\s*(-?\d+)\s*$)");
  std::vector<long long> values;
  for (const auto line : split_lines(raw)) {
    const auto clean = strip_markup(line);
    std::smatch m;
    if (!std::regex_match(clean, m, kLine)) continue;
    const auto digits = m[1].str();
    const bool negative = digits.front() == '-';
    const auto magnitude = digits.substr(negative ? 1 : 0);
    const auto trimmed = magnitude.find_first_not_of('0');
    const bool huge = trimmed != std::string::npos && magnitude.size() - trimmed > 6;
    const long long v = huge ? (negative ? -1000000 : 1000000) : std::stoll(digits);
    values.push_back(v);
  }
  if (values.empty()) throw GradeParseError(GradeParseError::Kind::no_score_line, "no 'Expected value: <int>' line");
  const std::set<long long> distinct(values.begin(), values.end());
  if (distinct.size() > 1) {
    throw GradeParseError(GradeParseError::Kind::multiple_conflicting,
                          std::to_string(distinct.size()) + " different 'Expected value' lines");
  }
  const auto v = values.back();
  if (v < 0 || v > 10) {
    throw GradeParseError(GradeParseError::Kind::out_of_range, "score " + std::to_string(v) + " outside 0..10");
  }
  return static_cast<int>(v);
}

std::map<std::string, std::string> split_stages(std::string_view raw) {
  static const std::regex kHeader(R"(^\s*#*\s*([1-8])\.\s*(.*)$)");
  std::map<std::string, std::string> stages;
  std::string current;
  for (const auto line : split_lines(raw)) {
    const auto clean = strip_markup(line);
    std::smatch m;
    // Indented sub-items ("   a.", "1." inside a list) only start a stage at column 0.
    if (!line.empty() && line.front() != ' ' && std::regex_match(clean, m, kHeader)) {
      current = m[1].str();
      if (stages.count(current)) stages[current] += "\n";
      stages[current] += std::string(line);
      continue;
    }
    if (current.empty()) continue;
    stages[current] += "\n" + std::string(line);
  }
  return stages;
}

Conversation build_grading_prompt(const GradeRequest& req, const ObservationSource& images) {
  Message system{"system", {ContentPart::make_text(std::string(kGradingPrompt))}};
  Message user{"user", {}};
  user.parts.push_back(ContentPart::make_text("USER_TASK: " + req.instruction));
  std::string prior = "PRIOR_ACTIONS:";
  if (req.history.empty()) prior += " none";
  for (std::size_t k = 0; k < req.history.size(); ++k) {
    prior += "\nStep " + std::to_string(k) + ": " + serialize_action(req.history[k]);
  }
  user.parts.push_back(ContentPart::make_text(prior));
  for (const auto& p : req.prior_images) {
    user.parts.push_back(ContentPart::make_text("PRIOR_SCREENSHOT (step " + std::to_string(p.step) + "):"));
    user.parts.push_back(image_part(images, p.image));
  }
  user.parts.push_back(ContentPart::make_text("LATEST_SCREENSHOT (annotated with the proposed action):"));
  user.parts.push_back(image_part(images, req.current));
  if (req.zoom) {
    user.parts.push_back(ContentPart::make_text("ZOOMED_IN (centered on the action target):"));
    user.parts.push_back(image_part(images, *req.zoom));
  }
  user.parts.push_back(
      ContentPart::make_text("PROPOSED_NEXT_ASSISTANT_ACTION: " + serialize_action(req.proposed_action)));
  return {std::move(system), std::move(user)};
}

GradeResult RemoteGrader::grade(const GradeRequest& req) {
  const auto conv = build_grading_prompt(req, images_);
  GradeResult r;
  r.raw = client_.complete(conv);
  r.score = parse_grade(r.raw);
  r.stages = split_stages(r.raw);
  r.grader_id = id_;
  return r;
}

GradeResult grade_with_retry(GraderBackend& backend, const GradeRequest& req, const RetryPolicy& retry,
                             std::uint64_t key) {
  const int attempts = std::max(1, retry.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      return backend.grade(req);
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= attempts) throw;
    } catch (const GradeParseError& e) {
      if (e.kind() != GradeParseError::Kind::no_score_line || attempt >= attempts) throw;
    }
    backoff_sleep(retry, attempt, key);
  }
}

GradeRun grade_corpus(std::span<const Trajectory> trajs, GraderBackend& backend, const GradeOptions& opts) {
  struct Job {
    std::size_t traj;
    int step;
  };
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < trajs.size(); ++t) {
    for (int n = 0; n < static_cast<int>(trajs[t].steps.size()); ++n) jobs.push_back({t, n});
  }
  std::vector<std::optional<GradeResult>> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  int workers = std::max(1, opts.parallelism);
  if (backend.concurrency_limit() > 0) workers = std::min(workers, backend.concurrency_limit());

  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& traj = trajs[job.traj];
    try {
      const auto req = make_grade_request(traj, job.step, opts.window);
      results[i] = grade_with_retry(backend, req, opts.retry, mix_seed(hash_string(traj.id), job.step));
    } catch (const std::exception& e) {
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "unknown error";
    }
  });

  GradeRun run;
  run.trajectories.assign(trajs.begin(), trajs.end());
  run.calls = jobs.size();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& step = run.trajectories[jobs[i].traj].steps[jobs[i].step];
    if (results[i]) {
      step.grade = Grade{results[i]->score, results[i]->raw, results[i]->grader_id};
      step.grade_error.reset();
    } else {
      step.grade.reset();
      step.grade_error = errors[i];
      run.failures.push_back({run.trajectories[jobs[i].traj].id, jobs[i].step, errors[i]});
    }
  }
  return run;
}

GradeRun grade_trajectory(const Trajectory& traj, GraderBackend& backend, const GradeOptions& opts) {
  return grade_corpus(std::span<const Trajectory>(&traj, 1), backend, opts);
}

ConsistencyReport consistency_from_scores(std::span<const int> scores) {
  if (scores.size() < 2) throw std::invalid_argument("consistency needs at least 2 scores");
  ConsistencyReport r;
  r.scores.assign(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  r.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  r.range = *hi - *lo;
  double ss = 0.0;
  for (const int s : scores) ss += (s - r.mean) * (s - r.mean);
  r.std = std::sqrt(ss / (n - 1.0));
  if (r.std == 0.0) {
    r.cv = 0.0;
  } else {
    r.cv = r.mean == 0.0 ? std::numeric_limits<double>::infinity() : r.std / r.mean;
  }
  return r;
}

ConsistencyReport consistency_audit(const GradeRequest& req, GraderBackend& backend, int repeats) {
  if (repeats < 2) throw std::invalid_argument("repeats must be >= 2");
  std::vector<int> scores;
  for (int i = 0; i < repeats; ++i) scores.push_back(backend.grade(req).score);
  return consistency_from_scores(scores);
}

ConsistencySummary summarize_consistency(std::span<const ConsistencyReport> reports) {
  ConsistencySummary s;
  s.steps = reports.size();
  if (reports.empty()) return s;
  std::vector<double> stds;
  std::vector<double> cvs;
  double range_sum = 0.0;
  for (const auto& r : reports) {
    range_sum += r.range;
    stds.push_back(r.std);
    cvs.push_back(r.cv);
  }
  s.mean_range = range_sum / static_cast<double>(reports.size());
  s.median_std = median(stds);
  s.median_cv = median(cvs);
  return s;
}

double AgreementReport::agreement() const {
  const auto n = total();
  return n ? static_cast<double>(tt + ff) / static_cast<double>(n) : 0.0;
}

std::string AgreementReport::table() const {
  std::ostringstream out;
  const auto c = std::to_string(cutoff);
  out << "                 grader >= " << c << "  grader < " << c << "\n";
  out << "reference >= " << c << "   " << tt << "          " << tf << "\n";
  out << "reference < " << c << "    " << ft << "          " << ff << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "agreement %.4f over %ld steps\n", agreement(), total());
  out << buf;
  return out.str();
}

AgreementReport agreement_report(std::span<const int> grades, std::span<const int> reference, int cutoff) {
  if (grades.size() != reference.size()) {
    throw LengthMismatch("grades and reference differ in length: " + std::to_string(grades.size()) + " vs " +
                         std::to_string(reference.size()));
  }
  AgreementReport r;
  r.cutoff = cutoff;
  for (std::size_t i = 0; i < grades.size(); ++i) {
    const bool g = grades[i] >= cutoff;
    const bool ref = reference[i] >= cutoff;
    if (ref && g) ++r.tt;
    else if (ref && !g) ++r.tf;
    else if (!ref && g) ++r.ft;
    else ++r.ff;
  }
  return r;
}

AgreementReport agreement_from_counts(long tt, long tf, long ft, long ff, int cutoff) {
  if (tt < 0 || tf < 0 || ft < 0 || ff < 0) throw std::invalid_argument("confusion counts must be non-negative");
  AgreementReport r;
  r.cutoff = cutoff;
  r.tt = tt;
  r.tf = tf;
  r.ft = ft;
  r.ff = ff;
  return r;
}

}  // namespace webstar
