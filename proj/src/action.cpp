#include "webstar/action.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <climits>
#include <cstdlib>

namespace webstar {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "click", "left_double", "right_single", "drag",    "scroll",
    "type",  "hotkey",      "wait",         "finished",
};

constexpr std::array<std::string_view, 4> kDirectionNames = {"up", "down", "left", "right"};

[[noreturn]] void fail(ActionParseError::Kind kind, const std::string& what) {
  throw ActionParseError(kind, what);
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Signed decimal integer with no surrounding junk.
std::optional<long long> parse_int(std::string_view s) {
  if (s.empty() || s.size() > 12) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

int parse_coord(std::string_view raw) {
  const auto s = trim(raw);
  const auto v = parse_int(s);
  if (!v) fail(ActionParseError::Kind::coord, "coordinate is not an integer: '" + std::string(s) + "'");
  if (*v < 0) fail(ActionParseError::Kind::coord, "negative coordinate: " + std::string(s));
  if (*v > INT_MAX) fail(ActionParseError::Kind::coord, "coordinate out of range: " + std::string(s));
  return static_cast<int>(*v);
}

std::vector<std::string_view> split_args(std::string_view body) {
  std::vector<std::string_view> args;
  if (trim(body).empty()) return args;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i == body.size() || body[i] == ',') {
      args.push_back(trim(body.substr(start, i - start)));
      start = i + 1;
    }
  }
  return args;
}

void expect_args(std::string_view name, const std::vector<std::string_view>& args, std::size_t n) {
  if (args.size() != n) {
    fail(ActionParseError::Kind::arity, std::string(name) + " expects " + std::to_string(n) +
                                            " argument(s), got " + std::to_string(args.size()));
  }
}

void check_point(Point p) {
  if (p.x < 0 || p.y < 0) throw std::invalid_argument("action coordinates must be non-negative");
}

std::string escape_payload(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case ')': out += "\\)"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Viewport::Viewport(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("viewport dimensions must be positive");
}

Action Action::click(int x, int y) {
  Action a;
  a.kind = ActionKind::click;
  a.points = {{x, y}};
  check_point(a.points[0]);
  return a;
}

Action Action::left_double(int x, int y) {
  Action a = click(x, y);
  a.kind = ActionKind::left_double;
  return a;
}

Action Action::right_single(int x, int y) {
  Action a = click(x, y);
  a.kind = ActionKind::right_single;
  return a;
}

Action Action::drag(int x1, int y1, int x2, int y2) {
  Action a;
  a.kind = ActionKind::drag;
  a.points = {{x1, y1}, {x2, y2}};
  check_point(a.points[0]);
  check_point(a.points[1]);
  return a;
}

Action Action::scroll(int x, int y, ScrollDirection dir, std::optional<int> pixels) {
  Action a;
  a.kind = ActionKind::scroll;
  a.points = {{x, y}};
  check_point(a.points[0]);
  a.direction = dir;
  if (pixels && *pixels < 0) throw std::invalid_argument("scroll magnitude must be non-negative");
  a.scroll_pixels = pixels;
  return a;
}

Action Action::type(std::string text) {
  Action a;
  a.kind = ActionKind::type;
  a.text = std::move(text);
  return a;
}

Action Action::hotkey(std::vector<std::string> keys) {
  if (keys.empty()) throw std::invalid_argument("hotkey needs at least one key");
  Action a;
  a.kind = ActionKind::hotkey;
  for (const auto& k : keys) a.keys.push_back(canonical_key_name(k));
  return a;
}

Action Action::wait() { return Action{}; }

Action Action::finished(std::string answer) {
  Action a;
  a.kind = ActionKind::finished;
  a.text = std::move(answer);
  return a;
}

std::optional<Point> Action::target() const {
  if (points.empty()) return std::nullopt;
  return points.front();
}

std::string_view to_string(ActionKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::string_view to_string(ScrollDirection dir) {
  return kDirectionNames[static_cast<std::size_t>(dir)];
}

std::optional<ActionKind> action_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<ActionKind>(i);
  }
  // Appendix-dialect spellings used by some teacher rollouts.
  if (name == "keypress") return ActionKind::hotkey;
  if (name == "final_answer") return ActionKind::finished;
  return std::nullopt;
}

std::optional<ScrollDirection> scroll_direction_from_string(std::string_view name) {
  const auto l = lower(name);
  for (std::size_t i = 0; i < kDirectionNames.size(); ++i) {
    if (kDirectionNames[i] == l) return static_cast<ScrollDirection>(i);
  }
  return std::nullopt;
}

int point_arity(ActionKind kind) {
  switch (kind) {
    case ActionKind::click:
    case ActionKind::left_double:
    case ActionKind::right_single:
    case ActionKind::scroll:
      return 1;
    case ActionKind::drag:
      return 2;
    default:
      return 0;
  }
}

bool has_text_payload(ActionKind kind) {
  return kind == ActionKind::type || kind == ActionKind::finished;
}

std::string canonical_key_name(std::string_view key) {
  const auto k = trim(key);
  if (k.empty()) fail(ActionParseError::Kind::arity, "empty key name in hotkey chord");
  std::string out;
  out.reserve(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const auto c = static_cast<unsigned char>(k[i]);
    if (!std::isalnum(c) && c != '_') {
      fail(ActionParseError::Kind::syntax, "invalid character in key name: '" + std::string(k) + "'");
    }
    out += static_cast<char>(i == 0 ? std::toupper(c) : std::tolower(c));
  }
  return out;
}

Action parse_action(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size() && is_space(text[pos])) ++pos;
  const std::size_t name_begin = pos;
  while (pos < text.size() &&
         (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
    ++pos;
  }
  const auto name = text.substr(name_begin, pos - name_begin);
  if (name.empty()) fail(ActionParseError::Kind::syntax, "expected an action name");
  const auto kind = action_kind_from_string(name);
  if (!kind) fail(ActionParseError::Kind::unknown_kind, "unknown action '" + std::string(name) + "'");

  while (pos < text.size() && is_space(text[pos])) ++pos;
  if (pos >= text.size() || text[pos] != '(') {
    fail(ActionParseError::Kind::syntax, "expected '(' after " + std::string(name));
  }
  ++pos;

  Action action;
  action.kind = *kind;

  if (has_text_payload(*kind)) {
    std::string payload;
    bool closed = false;
    while (pos < text.size()) {
      const char c = text[pos++];
      if (c == '\\') {
        if (pos >= text.size()) fail(ActionParseError::Kind::syntax, "dangling escape");
        const char e = text[pos++];
        if (e == '\\' || e == ')') {
          payload += e;
        } else if (e == 'n') {
          payload += '\n';
        } else {
          fail(ActionParseError::Kind::syntax, std::string("unknown escape \\") + e);
        }
      } else if (c == ')') {
        closed = true;
        break;
      } else {
        payload += c;
      }
    }
    if (!closed) fail(ActionParseError::Kind::syntax, "missing ')'");
    action.text = std::move(payload);
  } else {
    const auto close = text.find(')', pos);
    if (close == std::string_view::npos) fail(ActionParseError::Kind::syntax, "missing ')'");
    const auto args = split_args(text.substr(pos, close - pos));
    pos = close + 1;

    switch (*kind) {
      case ActionKind::click:
      case ActionKind::left_double:
      case ActionKind::right_single:
        expect_args(name, args, 2);
        action.points = {{parse_coord(args[0]), parse_coord(args[1])}};
        break;
      case ActionKind::drag:
        expect_args(name, args, 4);
        action.points = {{parse_coord(args[0]), parse_coord(args[1])},
                         {parse_coord(args[2]), parse_coord(args[3])}};
        break;
      case ActionKind::scroll: {
        if (args.size() != 3 && args.size() != 4) {
          fail(ActionParseError::Kind::arity,
               "scroll expects 3 or 4 arguments, got " + std::to_string(args.size()));
        }
        action.points = {{parse_coord(args[0]), parse_coord(args[1])}};
        const auto numeric = parse_int(args[2]);
        if (args.size() == 4 && numeric) {
          // scroll(x, y, scroll_x, scroll_y): dominant component wins, ties go vertical.
          const auto sy = parse_int(args[3]);
          if (!sy) fail(ActionParseError::Kind::coord, "scroll amount is not an integer");
          const long long sx = *numeric;
          const long long ax = std::llabs(sx);
          const long long ay = std::llabs(*sy);
          if (ax == 0 && ay == 0) fail(ActionParseError::Kind::bad_direction, "zero scroll amount");
          if (std::max(ax, ay) > INT_MAX) fail(ActionParseError::Kind::coord, "scroll amount out of range");
          if (ay >= ax) {
            action.direction = *sy > 0 ? ScrollDirection::down : ScrollDirection::up;
            action.scroll_pixels = static_cast<int>(ay);
          } else {
            action.direction = sx > 0 ? ScrollDirection::right : ScrollDirection::left;
            action.scroll_pixels = static_cast<int>(ax);
          }
        } else {
          const auto dir = scroll_direction_from_string(args[2]);
          if (!dir) fail(ActionParseError::Kind::bad_direction, "bad scroll direction '" + std::string(args[2]) + "'");
          action.direction = dir;
          if (args.size() == 4) action.scroll_pixels = parse_coord(args[3]);
        }
        break;
      }
      case ActionKind::hotkey: {
        expect_args(name, args, 1);
        std::string_view chord = args[0];
        std::size_t start = 0;
        for (std::size_t i = 0; i <= chord.size(); ++i) {
          if (i == chord.size() || chord[i] == '+') {
            action.keys.push_back(canonical_key_name(chord.substr(start, i - start)));
            start = i + 1;
          }
        }
        break;
      }
      case ActionKind::wait:
        expect_args(name, args, 0);
        break;
      default:
        break;
    }
  }

  while (pos < text.size() && is_space(text[pos])) ++pos;
  if (pos != text.size()) fail(ActionParseError::Kind::syntax, "trailing characters after action");
  return action;
}

std::string serialize_action(const Action& a) {
  std::string out(to_string(a.kind));
  out += '(';
  const auto pt = [&](const Point& p) { return std::to_string(p.x) + "," + std::to_string(p.y); };
  switch (a.kind) {
    case ActionKind::click:
    case ActionKind::left_double:
    case ActionKind::right_single:
      out += pt(a.points.at(0));
      break;
    case ActionKind::drag:
      out += pt(a.points.at(0)) + "," + pt(a.points.at(1));
      break;
    case ActionKind::scroll:
      out += pt(a.points.at(0));
      out += ',';
      out += to_string(a.direction.value_or(ScrollDirection::down));
      if (a.scroll_pixels) out += "," + std::to_string(*a.scroll_pixels);
      break;
    case ActionKind::type:
    case ActionKind::finished:
      out += escape_payload(a.text);
      break;
    case ActionKind::hotkey:
      for (std::size_t i = 0; i < a.keys.size(); ++i) {
        if (i) out += '+';
        out += a.keys[i];
      }
      break;
    case ActionKind::wait:
      break;
  }
  out += ')';
  return out;
}

std::string canonicalize_action(std::string_view text) { return serialize_action(parse_action(text)); }

std::vector<BoundsViolation> validate_action(const Action& action, const Viewport& viewport) {
  std::vector<BoundsViolation> out;
  for (std::size_t i = 0; i < action.points.size(); ++i) {
    const auto& p = action.points[i];
    const bool bad_x = p.x < 0 || p.x >= viewport.width;
    const bool bad_y = p.y < 0 || p.y >= viewport.height;
    if (!bad_x && !bad_y) continue;
    out.push_back({static_cast<int>(i), bad_x && bad_y ? Axis::both : (bad_x ? Axis::x : Axis::y), p});
  }
  return out;
}

std::string describe(const BoundsViolation& v) {
  const char* axis = v.axis == Axis::x ? "x" : (v.axis == Axis::y ? "y" : "x,y");
  return std::string("OutOfBounds(") + (v.point_index == 0 ? "point" : "endpoint") + " " + axis +
         " at " + std::to_string(v.point.x) + "," + std::to_string(v.point.y) + ")";
}

bool canonical_less(const Action& a, const Action& b) {
  if (a.kind != b.kind) return a.kind < b.kind;
  return serialize_action(a) < serialize_action(b);
}

}  // namespace webstar
