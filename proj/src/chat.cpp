#include "httplib.h"

#include "webstar/chat.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <thread>

#include "webstar/annotate.hpp"
#include "webstar/util.hpp"

namespace webstar {

using nlohmann::json;

std::string ImageRef::describe() const {
  std::string out = observation;
  switch (variant) {
    case ImageVariant::raw: break;
    case ImageVariant::annotated: out += " [annotated"; break;
    case ImageVariant::zoom: out += " [zoom"; break;
  }
  if (variant != ImageVariant::raw) out += (action ? " " + serialize_action(*action) : std::string()) + "]";
  return out;
}

std::optional<Image> FileObservationSource::load(const ObservationRef& ref) const {
  std::filesystem::path p(ref);
  if (p.is_relative() && !root_.empty()) p = std::filesystem::path(root_) / p;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(p, ec)) return std::nullopt;
  return read_png(p);
}

Image resolve_image(const ObservationSource& source, const ImageRef& ref) {
  if (ref.variant != ImageVariant::raw && !ref.action) {
    throw std::invalid_argument("annotated image reference without an action");
  }
  Image annotated;
  if (ref.rendered_path && ref.variant != ImageVariant::raw) {
    auto img = FileObservationSource().load(*ref.rendered_path);
    if (!img) throw MissingImage(*ref.rendered_path);
    annotated = std::move(*img);
  } else {
    auto raw = source.load(ref.observation);
    if (!raw) throw MissingImage(ref.observation);
    if (ref.variant == ImageVariant::raw) return *raw;
    annotated = annotate(*raw, *ref.action);
  }
  if (ref.variant == ImageVariant::annotated) return annotated;
  const auto target = ref.action->target();
  if (!target) throw std::invalid_argument("zoom requested for an action without a target point");
  return zoom_crop(annotated, *target, 2.0, 400);
}

ContentPart ContentPart::make_text(std::string t) {
  ContentPart p;
  p.kind = Kind::text;
  p.text = std::move(t);
  return p;
}

ContentPart ContentPart::make_image(std::vector<std::uint8_t> png, std::string ref) {
  ContentPart p;
  p.kind = Kind::image;
  p.png = std::move(png);
  p.image_ref = std::move(ref);
  return p;
}

std::size_t count_images(const Conversation& conv) {
  std::size_t n = 0;
  for (const auto& m : conv) {
    for (const auto& p : m.parts) n += p.kind == ContentPart::Kind::image;
  }
  return n;
}

std::string joined_text(const Conversation& conv, const std::string& role) {
  std::string out;
  bool first = true;
  for (const auto& m : conv) {
    if (m.role != role) continue;
    for (const auto& p : m.parts) {
      if (p.kind != ContentPart::Kind::text) continue;
      if (!first) out += "\n";
      out += p.text;
      first = false;
    }
  }
  return out;
}

json to_chat_request(const Conversation& conv, const std::string& model, std::optional<int> max_tokens) {
  json messages = json::array();
  for (const auto& m : conv) {
    json content = json::array();
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(p.png)}}}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  json body = {{"model", model}, {"messages", std::move(messages)}};
  if (max_tokens) body["max_completion_tokens"] = *max_tokens;
  return body;
}

HttpChatClient::HttpChatClient(ChatConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme_end = cfg_.url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("chat url needs a scheme: " + cfg_.url);
  const auto path_start = cfg_.url.find('/', scheme_end + 3);
  scheme_host_ = cfg_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
}

std::string HttpChatClient::complete(const Conversation& conv) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(cfg_.timeout_seconds, 0);
  client.set_read_timeout(cfg_.timeout_seconds, 0);
  client.set_write_timeout(cfg_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  const auto body = to_chat_request(conv, cfg_.model, cfg_.max_tokens).dump();
  const auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw BackendError("transport error: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500) {
    throw BackendError("HTTP " + std::to_string(res->status) + " from " + cfg_.url, true);
  }
  if (res->status != 200) {
    throw BackendError("HTTP " + std::to_string(res->status) + " from " + cfg_.url + ": " + res->body.substr(0, 200),
                       false);
  }
  try {
    const auto j = json::parse(res->body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string out;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") out += part.at("text").get<std::string>();
    }
    return out;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed chat response: ") + e.what(), true);
  }
}

void backoff_sleep(const RetryPolicy& policy, int attempt, std::uint64_t key) {
  if (policy.base_delay_ms <= 0) return;
  Rng rng(mix_seed(mix_seed(policy.jitter_seed, key), static_cast<std::uint64_t>(attempt)));
  const double ms = policy.base_delay_ms * std::pow(2.0, attempt - 1) * (0.5 + rng.uniform());
  std::this_thread::sleep_for(std::chrono::microseconds(static_cast<std::int64_t>(ms * 1000.0)));
}

}  // namespace webstar
