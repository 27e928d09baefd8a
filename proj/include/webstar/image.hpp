#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "webstar/action.hpp"

namespace webstar {

struct Rgba {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  std::uint8_t a = 255;
  friend bool operator==(const Rgba&, const Rgba&) = default;
};

namespace colors {
inline constexpr Rgba kWhite{255, 255, 255, 255};
inline constexpr Rgba kBlack{0, 0, 0, 255};
inline constexpr Rgba kRed{255, 0, 0, 255};
inline constexpr Rgba kGreen{0, 200, 0, 255};
}  // namespace colors

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool contains(int px, int py) const { return px >= x && py >= y && px < x + width && py < y + height; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// 8-bit RGBA raster, row-major, top-left origin.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgba fill = colors::kWhite);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  Rgba at(int x, int y) const;
  void set(int x, int y, Rgba c);
  // Writes only when (x,y) is inside the image.
  void plot(int x, int y, Rgba c) {
    if (in_bounds(x, y)) set(x, y, c);
  }

  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Drawing primitives. All clip to the image.
void fill_rect(Image& img, const Rect& r, Rgba c);
void stroke_rect(Image& img, const Rect& r, Rgba c, int thickness = 1);
void fill_disk(Image& img, Point center, int radius, Rgba c);
void draw_line(Image& img, Point from, Point to, Rgba c, int thickness = 1);
// Line from `from` to `to` with a two-stroke head at `to`.
void draw_arrow(Image& img, Point from, Point to, Rgba c, int thickness, int head_length);

// Fixed 5x8 bitmap font, 6 px advance at scale 1. Non-ASCII bytes draw '?'.
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 8;
inline constexpr int kGlyphAdvance = 6;
int text_width(std::string_view text, int scale);
void draw_text(Image& img, Point top_left, std::string_view text, Rgba c, int scale);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> data);
void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace webstar
