#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace webstar {

enum class ActionKind {
  click,
  left_double,
  right_single,
  drag,
  scroll,
  type,
  hotkey,
  wait,
  finished,
};

enum class ScrollDirection { up, down, left, right };

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Viewport {
  int width = 0;
  int height = 0;

  Viewport() = default;
  Viewport(int w, int h);
  friend bool operator==(const Viewport&, const Viewport&) = default;
};

// One member of the GUI action space. Build through the factory functions;
// they enforce the arity/payload invariants that serialize_action relies on.
struct Action {
  ActionKind kind = ActionKind::wait;
  std::vector<Point> points;                 // 0, 1 or 2 depending on kind
  std::optional<ScrollDirection> direction;  // scroll only
  std::optional<int> scroll_pixels;          // scroll magnitude, when known
  std::string text;                          // type / finished payload
  std::vector<std::string> keys;             // hotkey chord, Title-case

  static Action click(int x, int y);
  static Action left_double(int x, int y);
  static Action right_single(int x, int y);
  static Action drag(int x1, int y1, int x2, int y2);
  static Action scroll(int x, int y, ScrollDirection dir,
                       std::optional<int> pixels = std::nullopt);
  static Action type(std::string text);
  static Action hotkey(std::vector<std::string> keys);
  static Action wait();
  static Action finished(std::string answer);

  // The single target point for pointer actions (drag: start point).
  std::optional<Point> target() const;

  friend bool operator==(const Action&, const Action&) = default;
};

class ActionParseError : public std::runtime_error {
 public:
  enum class Kind { unknown_kind, arity, coord, bad_direction, syntax };

  ActionParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(ActionKind kind);
std::string_view to_string(ScrollDirection dir);
std::optional<ActionKind> action_kind_from_string(std::string_view name);
std::optional<ScrollDirection> scroll_direction_from_string(std::string_view name);

// Number of coordinate points an action of this kind carries.
int point_arity(ActionKind kind);
bool has_text_payload(ActionKind kind);

// Title-cases a key name ("ctrl" -> "Ctrl"). Throws ActionParseError(arity)
// for empty names and ActionParseError(syntax) for characters outside
// [A-Za-z0-9_].
std::string canonical_key_name(std::string_view key);

Action parse_action(std::string_view text);
std::string serialize_action(const Action& action);

// Canonical form of any parseable string: serialize(parse(text)).
std::string canonicalize_action(std::string_view text);

enum class Axis { x, y, both };

struct BoundsViolation {
  int point_index = 0;  // 0 = start/only point, 1 = drag endpoint
  Axis axis = Axis::x;
  Point point;
  friend bool operator==(const BoundsViolation&, const BoundsViolation&) = default;
};

// Half-open bounds [0,width) x [0,height). Empty result means ok.
std::vector<BoundsViolation> validate_action(const Action& action, const Viewport& viewport);

std::string describe(const BoundsViolation& v);

// Orders actions by kind, then by canonical text. Used for deterministic
// tie breaking.
bool canonical_less(const Action& a, const Action& b);

}  // namespace webstar
