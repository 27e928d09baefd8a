#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "webstar/chat.hpp"
#include "webstar/grader.hpp"
#include "webstar/trajectory.hpp"

namespace webstar {

inline constexpr const char* kSftSchema = "webstar-sft/1";
inline constexpr const char* kRewardSchema = "webscore/1";
inline constexpr int kDefaultCutoff = 5;
// WebSCORE classes: score > 5 versus score <= 5, independent of the filter cutoff.
inline constexpr int kRewardClassBoundary = 5;

class TrajectoryJudge {
 public:
  virtual ~TrajectoryJudge() = default;
  virtual std::string id() const = 0;
  virtual bool judge(const Trajectory& traj) = 0;
};

struct FilterResult {
  std::vector<Trajectory> kept;     // success = true
  std::vector<Trajectory> dropped;  // success = false
  std::vector<StepFailure> errors;  // judge failures (step = -1); in neither list
};

FilterResult filter_trajectories(std::span<const Trajectory> trajs, TrajectoryJudge& judge, int parallelism = 1);

class UngradedStep : public std::runtime_error {
 public:
  UngradedStep(std::string trajectory_id, int index)
      : std::runtime_error("step " + std::to_string(index) + " of '" + trajectory_id + "' has no grade"),
        trajectory_id_(std::move(trajectory_id)),
        index_(index) {}
  const std::string& trajectory_id() const { return trajectory_id_; }
  int index() const { return index_; }

 private:
  std::string trajectory_id_;
  int index_;
};

// mask[n] = score[n] > cutoff. Throws UngradedStep.
std::vector<bool> compute_mask(const Trajectory& traj, int cutoff = kDefaultCutoff);

enum class ExportMode { all_steps, correct_steps };
std::string_view to_string(ExportMode m);
ExportMode export_mode_from_string(std::string_view s);

struct SftRecord {
  ContextWindow context;
  std::optional<Thought> target_thought;
  Action target_action;
  bool loss = true;
  std::optional<int> score;
  std::string trajectory_id;
  int step_index = 0;
  std::string task_ref;

  friend bool operator==(const SftRecord&, const SftRecord&) = default;
};

// One record per step; context keeps every earlier step whatever its mask.
// all_steps: loss everywhere. correct_steps: loss = mask (throws UngradedStep).
std::vector<SftRecord> build_sft_records(const Trajectory& traj, int window, int cutoff, ExportMode mode);

struct SftJsonOptions {
  bool inline_images = false;
  const ObservationSource* images = nullptr;  // required for inline_images
};

nlohmann::json to_json(const SftRecord& rec, const SftJsonOptions& opts = {});
SftRecord sft_record_from_json(const nlohmann::json& j);
std::vector<SftRecord> read_sft_jsonl(const std::filesystem::path& path);

struct SftExportOptions {
  int window = 1;
  int cutoff = kDefaultCutoff;
  ExportMode mode = ExportMode::correct_steps;
  bool drop_masked = false;
  SftJsonOptions json;
};

struct SftExportSummary {
  std::size_t trajectories = 0;
  std::size_t records = 0;        // lines written
  std::size_t loss_bearing = 0;   // written records with loss = true
  std::size_t masked = 0;         // loss = false records, written or dropped
  std::size_t all_steps = 0;      // loss-bearing count under all_steps
  std::optional<std::size_t> correct_steps;  // sum of masks; absent if anything is ungraded

  nlohmann::json to_json() const;
};

SftExportSummary export_sft(std::span<const Trajectory> trajs, const SftExportOptions& opts, std::ostream& out);

struct RewardRecord {
  std::string trajectory_id;
  int step_index = 0;
  std::string instruction;
  std::vector<Action> history;
  std::vector<ImageRef> images;  // prior annotated screenshots then the current one
  Action action;
  int score = 0;
  bool positive = false;  // score > kRewardClassBoundary
};

nlohmann::json to_json(const RewardRecord& r);

class InsufficientClass : public std::runtime_error {
 public:
  InsufficientClass(bool positive, std::size_t available, std::size_t needed)
      : std::runtime_error(std::string(positive ? "positive (>5)" : "non-positive (<=5)") + " class has " +
                           std::to_string(available) + " steps, need " + std::to_string(needed)),
        positive_(positive),
        available_(available),
        needed_(needed) {}
  bool positive() const { return positive_; }
  std::size_t available() const { return available_; }
  std::size_t needed() const { return needed_; }

 private:
  bool positive_;
  std::size_t available_;
  std::size_t needed_;
};

struct RewardExport {
  std::vector<RewardRecord> records;  // pool order
  std::size_t pool_positive = 0;
  std::size_t pool_negative = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::uint64_t seed = 0;
};

// ceil(N/2) positives and floor(N/2) negatives, sampled without replacement.
// Ungraded steps are not in the pool.
RewardExport export_reward_dataset(std::span<const Trajectory> trajs, std::size_t size, std::uint64_t seed,
                                   int window = 1);

struct ScoreStats {
  std::array<std::size_t, 11> histogram{};
  std::size_t total = 0;
  std::size_t ungraded = 0;
  std::array<double, 11> cdf{};        // P(score <= s)
  std::array<double, 11> retention{};  // P(score > c)
  std::vector<std::pair<std::string, double>> per_trajectory;  // fraction of steps > 5

  nlohmann::json to_json() const;
  std::string table() const;
};

ScoreStats score_stats(std::span<const Trajectory> trajs);

class BudgetUnreachable : public std::runtime_error {
 public:
  BudgetUnreachable(int cutoff, std::size_t available)
      : std::runtime_error("cutoff " + std::to_string(cutoff) + " leaves " + std::to_string(available) +
                           " loss-bearing steps, below the budget"),
        cutoff_(cutoff),
        available_(available) {}
  int cutoff() const { return cutoff_; }
  std::size_t available() const { return available_; }

 private:
  int cutoff_;
  std::size_t available_;
};

struct SweepEntry {
  int cutoff = 0;
  std::size_t total_steps = 0;
  std::size_t available = 0;  // loss-bearing before subsampling
  double retention = 0.0;     // available / total_steps
  std::size_t selected = 0;   // loss-bearing after subsampling
  std::vector<SftRecord> records;
};

// Per cutoff: correct_steps records, then (with a budget) all but `budget`
// loss-bearing records flipped to loss = false by a seeded draw.
std::vector<SweepEntry> cutoff_sweep(std::span<const Trajectory> trajs, std::span<const int> cutoffs,
                                     std::optional<std::size_t> budget, std::uint64_t seed, int window = 1);

// "Cutoff | 2 | 4 | ..." table; `pass` adds a "Pass@1 (Pass@4)" row when given.
std::string sweep_table(std::span<const SweepEntry> entries, std::span<const std::string> pass = {});

// Seeded choice of `k` distinct indices from [0, n), returned sorted.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace webstar
