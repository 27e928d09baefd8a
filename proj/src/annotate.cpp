#include "webstar/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace webstar {

namespace {

int glyph_scale(const AnnotationStyle& style) { return std::max(1, style.font_size / kGlyphHeight); }

Point offset(Point p, ScrollDirection dir, int length) {
  switch (dir) {
    case ScrollDirection::up: return {p.x, p.y - length};
    case ScrollDirection::down: return {p.x, p.y + length};
    case ScrollDirection::left: return {p.x - length, p.y};
    case ScrollDirection::right: return {p.x + length, p.y};
  }
  return p;
}

}  // namespace

Rect label_region(const Action& action, const AnnotationStyle& style) {
  const int scale = glyph_scale(style);
  const auto text = to_string(action.kind);
  return {0, 0, text_width(text, scale) + 2 * style.label_padding,
          kGlyphHeight * scale + 2 * style.label_padding};
}

Image annotate(const Image& image, const Action& action, const AnnotationStyle& style) {
  if (image.empty()) throw std::invalid_argument("cannot annotate an empty image");
  if (style.dot_radius <= 0) throw std::invalid_argument("dot_radius must be positive");
  for (const auto& p : action.points) {
    if (!image.in_bounds(p.x, p.y)) {
      throw std::out_of_range("action point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                              ") outside " + std::to_string(image.width()) + "x" +
                              std::to_string(image.height()) + " image");
    }
  }

  Image out = image;
  const int scale = glyph_scale(style);
  const Rect label = label_region(action, style);
  fill_rect(out, label, style.label_color);
  draw_text(out, {style.label_padding, style.label_padding}, to_string(action.kind), style.label_text_color, scale);

  switch (action.kind) {
    case ActionKind::click:
    case ActionKind::left_double:
    case ActionKind::right_single:
      fill_disk(out, action.points[0], style.dot_radius, style.dot_color);
      break;
    case ActionKind::scroll: {
      const auto origin = action.points[0];
      const auto tip = offset(origin, action.direction.value_or(ScrollDirection::down), style.arrow_length);
      draw_arrow(out, origin, tip, style.dot_color, style.arrow_thickness, style.arrow_length / 4);
      fill_disk(out, origin, style.dot_radius, style.dot_color);
      break;
    }
    case ActionKind::drag: {
      const auto start = action.points[0];
      const auto end = action.points[1];
      draw_arrow(out, start, end, style.dot_color, style.arrow_thickness, style.arrow_length / 4);
      fill_disk(out, start, style.dot_radius, style.dot_color);
      // Start-point tag sits up and to the right of the disk so the disk stays visible.
      const int tag = style.dot_radius;
      fill_rect(out, {start.x + style.dot_radius + 2, start.y - style.dot_radius - 2 - tag, 2 * tag, tag},
                style.label_color);
      break;
    }
    default:
      break;
  }
  return out;
}

Image zoom_crop(const Image& image, Point center, double factor, int out_size) {
  if (!image.in_bounds(center.x, center.y)) throw std::out_of_range("zoom center outside image");
  if (!(factor > 0.0)) throw std::invalid_argument("zoom factor must be positive");
  if (out_size <= 0) throw std::invalid_argument("zoom output size must be positive");

  const int side = std::max(1, static_cast<int>(std::lround(out_size / factor)));
  const auto origin = [&](int c, int extent) {
    if (side >= extent) return 0;
    return std::clamp(c - side / 2, 0, extent - side);
  };
  const int x0 = origin(center.x, image.width());
  const int y0 = origin(center.y, image.height());

  Image out(out_size, out_size);
  for (int j = 0; j < out_size; ++j) {
    const int sy = std::min(image.height() - 1, y0 + static_cast<int>(std::floor(j / factor)));
    for (int i = 0; i < out_size; ++i) {
      const int sx = std::min(image.width() - 1, x0 + static_cast<int>(std::floor(i / factor)));
      out.set(i, j, image.at(sx, sy));
    }
  }
  return out;
}

namespace {
std::string stem_of(const std::string& obs) {
  constexpr std::string_view kExt = ".png";
  if (obs.size() > kExt.size() && obs.compare(obs.size() - kExt.size(), kExt.size(), kExt) == 0) {
    return obs.substr(0, obs.size() - kExt.size());
  }
  return obs;
}
}  // namespace

std::string annotated_sidecar(const std::string& observation) { return stem_of(observation) + ".annotated.png"; }
std::string zoom_sidecar(const std::string& observation) { return stem_of(observation) + ".zoom.png"; }

}  // namespace webstar
