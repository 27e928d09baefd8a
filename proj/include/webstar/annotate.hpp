#pragma once

#include <string>

#include "webstar/action.hpp"
#include "webstar/image.hpp"

namespace webstar {

struct AnnotationStyle {
  int dot_radius = 8;
  Rgba dot_color = colors::kRed;
  Rgba label_color = colors::kGreen;
  Rgba label_text_color = colors::kWhite;
  int arrow_length = 60;
  int arrow_thickness = 3;
  int font_size = 16;  // pixel height of a label glyph; multiples of 8 render crisp
  int label_padding = 4;
};

// Area covered by the top-left action-kind label for this style.
Rect label_region(const Action& action, const AnnotationStyle& style = {});

// Returns a copy of `image` with the action overlay drawn on it:
//  - action-kind label at the top-left (every kind),
//  - red disk at the target point (click, left_double, right_single, scroll, drag start),
//  - red arrow along the scroll direction, or from drag start to drag end,
//  - small green label at the drag start point.
// Throws std::out_of_range if any action point lies outside the image.
Image annotate(const Image& image, const Action& action, const AnnotationStyle& style = {});

// Square crop of side out_size/factor around `center`, clamped to stay inside
// the image, upscaled to out_size x out_size with nearest-neighbour sampling.
Image zoom_crop(const Image& image, Point center, double factor, int out_size);

inline constexpr double kDefaultZoomFactor = 2.0;
inline constexpr int kDefaultZoomSize = 400;

// Sidecar names for an observation image: "<obs>.annotated.png" / "<obs>.zoom.png".
std::string annotated_sidecar(const std::string& observation);
std::string zoom_sidecar(const std::string& observation);

}  // namespace webstar
