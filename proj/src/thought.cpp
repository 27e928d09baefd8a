#include "webstar/thought.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

#include "webstar/prompts.hpp"
#include "webstar/util.hpp"

namespace webstar {

using nlohmann::json;

ThoughtRequest make_thought_request(const Trajectory& traj, int n, int window) {
  ThoughtRequest req;
  req.context = make_context(traj, n, window);
  const auto& step = traj.steps.at(n);
  req.action = step.action;
  req.annotated = ImageRef{step.observation, ImageVariant::annotated, step.action, step.annotated_observation};
  req.trajectory_id = traj.id;
  if (const auto it = traj.metadata.find("task_id"); it != traj.metadata.end()) req.task_ref = it->second;
  return req;
}

json action_dictionary(const Action& action) {
  json d = {{"action", to_string(action.kind)}};
  if (!action.points.empty()) d["coordinate"] = {action.points[0].x, action.points[0].y};
  if (action.points.size() > 1) d["end_coordinate"] = {action.points[1].x, action.points[1].y};
  if (action.direction) d["direction"] = to_string(*action.direction);
  if (action.scroll_pixels) d["pixels"] = *action.scroll_pixels;
  if (has_text_payload(action.kind)) d["text"] = action.text;
  if (!action.keys.empty()) d["keys"] = action.keys;
  return d;
}

Conversation build_thought_prompt(const ThoughtRequest& req, const ObservationSource& images) {
  const auto& ctx = req.context;
  Message system{"system", {ContentPart::make_text(std::string(kThoughtPrompt))}};
  Message user{"user", {}};
  user.parts.push_back(ContentPart::make_text("USER_TASK: " + ctx.instruction));
  std::string prev = "PREVIOUS_STEPS:";
  if (ctx.history.empty()) prev += " none";
  for (std::size_t k = 0; k < ctx.history.size(); ++k) {
    const auto& h = ctx.history[k];
    prev += "\nStep " + std::to_string(k) + ":";
    if (h.thought) prev += "\n  Thought: " + h.thought->raw;
    prev += "\n  Action: " + serialize_action(h.action);
  }
  user.parts.push_back(ContentPart::make_text(prev));
  // Earlier screenshots of the window, raw; the last window entry is the current step.
  const int first = ctx.target_index - static_cast<int>(ctx.images.size()) + 1;
  for (std::size_t i = 0; i + 1 < ctx.images.size(); ++i) {
    user.parts.push_back(
        ContentPart::make_text("PREVIOUS_SCREENSHOT (step " + std::to_string(first + static_cast<int>(i)) + "):"));
    const ImageRef ref{ctx.images[i], ImageVariant::raw, std::nullopt, std::nullopt};
    user.parts.push_back(ContentPart::make_image(encode_png(resolve_image(images, ref)), ref.describe()));
  }
  user.parts.push_back(ContentPart::make_text("CURRENT_SCREENSHOT (annotated with the current action):"));
  user.parts.push_back(ContentPart::make_image(encode_png(resolve_image(images, req.annotated)), req.annotated.describe()));
  user.parts.push_back(ContentPart::make_text("CURRENT_ACTION: " + action_dictionary(req.action).dump()));
  if (ctx.target_index == 0) user.parts.push_back(ContentPart::make_text(std::string(kFirstStepNote)));
  if (req.action.kind == ActionKind::finished) {
    user.parts.push_back(ContentPart::make_text(std::string(kFinishedNote) + " The final answer is: " + req.action.text));
  }
  return {std::move(system), std::move(user)};
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    const auto b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      const auto e = cur.find_last_not_of(" \t\r\n");
      out.push_back(cur.substr(b, e - b + 1));
    }
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur += text[i];
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      // Absorb closing quotes/brackets and repeated terminators.
      while (i + 1 < text.size() && std::strchr(".!?\"')]", text[i + 1])) cur += text[++i];
      if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) flush();
    }
  }
  flush();
  return out;
}

Thought split_thought(std::string_view raw) {
  const auto sentences = split_sentences(raw);
  if (sentences.empty()) throw EmptyGeneration();
  Thought t;
  t.raw = std::string(raw);
  const auto n = sentences.size();
  t.situation = sentences.front();
  if (n >= 2) t.instruction = sentences.back();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!t.reasoning.empty()) t.reasoning += " ";
    t.reasoning += sentences[i];
  }
  if (t.reasoning.empty()) t.missing.push_back("reasoning");
  if (t.instruction.empty()) t.missing.push_back("instruction");
  return t;
}

std::string RemoteThoughtBackend::generate(const ThoughtRequest& req) {
  return client_.complete(build_thought_prompt(req, images_));
}

namespace {

Thought augment_keyed(const ThoughtRequest& req, ThoughtBackend& backend, const RetryPolicy& retry,
                      std::uint64_t key) {
  const int attempts = std::max(1, retry.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      return split_thought(backend.generate(req));
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= attempts) throw;
    } catch (const EmptyGeneration&) {
      if (attempt >= attempts) throw;
    }
    backoff_sleep(retry, attempt, key);
  }
}

}  // namespace

Thought augment_step(const ThoughtRequest& req, ThoughtBackend& backend, const RetryPolicy& retry) {
  return augment_keyed(req, backend, retry, mix_seed(hash_string(req.trajectory_id), req.context.target_index));
}

AugmentRun augment_corpus(std::span<const Trajectory> trajs, ThoughtBackend& backend, const AugmentOptions& opts) {
  AugmentRun run;
  run.trajectories.assign(trajs.begin(), trajs.end());
  std::vector<std::vector<StepFailure>> failures(trajs.size());
  std::vector<std::size_t> generated(trajs.size(), 0);
  std::vector<std::size_t> skipped(trajs.size(), 0);
  int workers = std::max(1, opts.parallelism);
  if (backend.concurrency_limit() > 0) workers = std::min(workers, backend.concurrency_limit());

  parallel_for(trajs.size(), workers, [&](std::size_t t) {
    auto& traj = run.trajectories[t];
    for (int n = 0; n < static_cast<int>(traj.steps.size()); ++n) {
      auto& step = traj.steps[n];
      if (step.thought && !opts.force) {
        ++skipped[t];
        continue;
      }
      try {
        const auto req = make_thought_request(traj, n, opts.window);
        step.thought = augment_step(req, backend, opts.retry);
        step.metadata.erase("thought_error");
        ++generated[t];
      } catch (const std::exception& e) {
        step.thought.reset();
        step.metadata["thought_error"] = e.what();
        failures[t].push_back({traj.id, n, e.what()});
      }
    }
  });
  for (std::size_t t = 0; t < trajs.size(); ++t) {
    run.failures.insert(run.failures.end(), failures[t].begin(), failures[t].end());
    run.generated += generated[t];
    run.skipped += skipped[t];
  }
  return run;
}

AugmentRun augment_trajectory(const Trajectory& traj, ThoughtBackend& backend, const AugmentOptions& opts) {
  return augment_corpus(std::span<const Trajectory>(&traj, 1), backend, opts);
}

}  // namespace webstar
