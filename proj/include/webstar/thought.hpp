#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "webstar/chat.hpp"
#include "webstar/grader.hpp"
#include "webstar/trajectory.hpp"

namespace webstar {

struct ThoughtRequest {
  ContextWindow context;
  Action action;
  ImageRef annotated;  // current screenshot with the action overlay
  std::string trajectory_id;
  std::string task_ref;
};

// Request for step n; prior thoughts in the context come from `traj` as it is.
ThoughtRequest make_thought_request(const Trajectory& traj, int n, int window);

// Parameters of the current action as shown to the thought model.
nlohmann::json action_dictionary(const Action& action);

// System message: the thought template verbatim. User message: task, previous
// thoughts and actions, earlier screenshots, annotated current screenshot,
// action dictionary, and the first-step / final-answer notes when they apply.
Conversation build_thought_prompt(const ThoughtRequest& req, const ObservationSource& images);

inline constexpr std::string_view kFirstStepNote =
    "This is the first step: provide a brief overview of the task and decompose it into smaller steps.";
inline constexpr std::string_view kFinishedNote =
    "For final answer, the action is \"finished\". The agent will finish the task after this step, so do not plan "
    "for any further steps or actions.";

class EmptyGeneration : public std::runtime_error {
 public:
  EmptyGeneration() : std::runtime_error("thought backend returned empty text") {}
};

// Sentences of a paragraph; terminators are . ! ? followed by whitespace or end.
std::vector<std::string> split_sentences(std::string_view text);
// Last sentence -> instruction, first -> situation, the rest -> reasoning.
// Missing components are listed in Thought::missing. Throws EmptyGeneration.
Thought split_thought(std::string_view raw);

class ThoughtBackend {
 public:
  virtual ~ThoughtBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string generate(const ThoughtRequest& req) = 0;
  virtual int concurrency_limit() const { return 0; }
};

class RemoteThoughtBackend : public ThoughtBackend {
 public:
  RemoteThoughtBackend(ChatClient& client, const ObservationSource& images, std::string id)
      : client_(client), images_(images), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string generate(const ThoughtRequest& req) override;

 private:
  ChatClient& client_;
  const ObservationSource& images_;
  std::string id_;
};

Thought augment_step(const ThoughtRequest& req, ThoughtBackend& backend, const RetryPolicy& retry = {});

struct AugmentOptions {
  int window = 1;
  int parallelism = 1;
  bool force = false;
  RetryPolicy retry;
};

struct AugmentRun {
  std::vector<Trajectory> trajectories;
  std::vector<StepFailure> failures;
  std::size_t generated = 0;
  std::size_t skipped = 0;
};

// Steps run in order within a trajectory so each prompt sees the thoughts
// written for earlier steps; trajectories run in parallel. A failed step keeps
// no thought and later steps still run.
AugmentRun augment_corpus(std::span<const Trajectory> trajs, ThoughtBackend& backend, const AugmentOptions& opts);
AugmentRun augment_trajectory(const Trajectory& traj, ThoughtBackend& backend, const AugmentOptions& opts);

}  // namespace webstar
