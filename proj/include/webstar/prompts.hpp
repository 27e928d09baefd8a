#pragma once

#include <string_view>

namespace webstar {

// System prompts sent verbatim to grading and thought backends.
extern const std::string_view kGradingPrompt;
extern const std::string_view kThoughtPrompt;

}  // namespace webstar
