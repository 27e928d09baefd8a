#pragma once

#include <cstdint>
#include <memory>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "webstar/action.hpp"
#include "webstar/image.hpp"
#include "webstar/trajectory.hpp"

namespace webstar {

// Raised by backends. Retryable errors (transport failures, 429/5xx, missing
// score lines) are retried by the orchestrators; the rest fail the step at once.
class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, bool retryable) : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

class MissingImage : public std::runtime_error {
 public:
  explicit MissingImage(const std::string& ref) : std::runtime_error("missing image: " + ref), ref_(ref) {}
  const std::string& ref() const { return ref_; }

 private:
  std::string ref_;
};

enum class ImageVariant { raw, annotated, zoom };

// A screenshot as seen by a prompt: an observation, optionally overlaid with
// the action taken from it or zoomed in on that action's target.
struct ImageRef {
  ObservationRef observation;
  ImageVariant variant = ImageVariant::raw;
  std::optional<Action> action;
  // Pre-rendered annotated screenshot (ingested rollouts); replaces drawing the overlay.
  std::optional<std::string> rendered_path;

  std::string describe() const;
  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

// Produces raw observation pixels. nullopt means the image is unavailable.
class ObservationSource {
 public:
  virtual ~ObservationSource() = default;
  virtual std::optional<Image> load(const ObservationRef& ref) const = 0;
};

// Loads PNG files, resolving relative paths against `root`.
class FileObservationSource : public ObservationSource {
 public:
  explicit FileObservationSource(std::string root = {}) : root_(std::move(root)) {}
  std::optional<Image> load(const ObservationRef& ref) const override;

 private:
  std::string root_;
};

// Applies the annotation/zoom conventions on top of an ObservationSource.
// Throws MissingImage when the source has nothing for the reference.
Image resolve_image(const ObservationSource& source, const ImageRef& ref);

struct ContentPart {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string text;
  std::vector<std::uint8_t> png;
  std::string image_ref;  // ImageRef::describe() of the attached image

  static ContentPart make_text(std::string t);
  static ContentPart make_image(std::vector<std::uint8_t> png, std::string ref);
  friend bool operator==(const ContentPart&, const ContentPart&) = default;
};

struct Message {
  std::string role;
  std::vector<ContentPart> parts;
  friend bool operator==(const Message&, const Message&) = default;
};

using Conversation = std::vector<Message>;

std::size_t count_images(const Conversation& conv);
// Concatenated text of every part of the given role, parts separated by "\n".
std::string joined_text(const Conversation& conv, const std::string& role);

// OpenAI-compatible chat-completions request body.
nlohmann::json to_chat_request(const Conversation& conv, const std::string& model, std::optional<int> max_tokens);

struct ChatConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "o4-mini";
  std::string api_key;
  int timeout_seconds = 120;
  std::optional<int> max_tokens;
};

inline constexpr const char* kApiKeyEnv = "WEBSTAR_API_KEY";

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the assistant text of the first choice.
  virtual std::string complete(const Conversation& conv) = 0;
};

// HTTP client for chat-completions endpoints. Safe for concurrent calls.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ChatConfig cfg);
  std::string complete(const Conversation& conv) override;
  const ChatConfig& config() const { return cfg_; }

 private:
  ChatConfig cfg_;
  std::string scheme_host_;
  std::string path_;
};

struct RetryPolicy {
  int attempts = 3;
  int base_delay_ms = 500;
  std::uint64_t jitter_seed = 0;
};

// Sleep before retry number `attempt` (1-based): base * 2^(attempt-1) scaled by
// a jitter factor in [0.5, 1.5) drawn from (jitter_seed, key, attempt).
void backoff_sleep(const RetryPolicy& policy, int attempt, std::uint64_t key);

}  // namespace webstar
