#include "webstar/sim.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

#include "webstar/util.hpp"

namespace webstar::sim {

using nlohmann::json;

namespace {

constexpr int kBodyTop = 100;
constexpr int kRowPitch = 70;
constexpr int kRowHeight = 40;
constexpr int kLinkWidth = 560;
constexpr int kTextWidth = 800;
constexpr int kLeftMargin = 40;
constexpr int kBottomMargin = 20;
constexpr int kTextScale = 2;

constexpr Rgba kHeaderFill{236, 238, 242, 255};
constexpr Rgba kLinkColor{30, 90, 200, 255};
constexpr Rgba kTextColor{20, 20, 20, 255};
constexpr Rgba kBoxColor{150, 150, 150, 255};

constexpr std::array<const char*, 20> kAdjectives = {
    "Blue",   "Copper", "Quiet",  "Rapid", "Golden", "Silver", "Crimson", "Velvet", "Hollow", "Bright",
    "Frosty", "Amber",  "Lunar",  "Misty", "Rustic", "Cobalt", "Sunny",   "Polar",  "Ivory",  "Maple"};
constexpr std::array<const char*, 20> kNouns = {
    "Kettle", "Lantern", "Backpack", "Teapot",  "Compass", "Blender", "Notebook", "Umbrella", "Skillet", "Helmet",
    "Guitar", "Scarf",   "Toaster",  "Monitor", "Bicycle", "Blanket", "Camera",   "Jacket",   "Candle",  "Drone"};
constexpr std::array<const char*, 8> kFiller = {
    "Free shipping on orders over 50 USD", "Customers also viewed these items", "Seasonal sale ends soon",
    "Read our buying guide before you order", "Ships within two business days", "Gift wrapping available",
    "Sign up for our newsletter", "Compare similar products below"};

struct Attribute {
  const char* label;
  const char* noun;
};
constexpr std::array<Attribute, 3> kAttributes = {{{"Price", "price"}, {"Rating", "rating"}, {"Stock", "stock level"}}};

std::string fact_value(const Attribute& a, Rng& rng) {
  const std::string label = a.label;
  if (label == "Price") return std::to_string(5 + rng.index(496)) + " USD";
  if (label == "Rating") {
    const auto tenths = 10 + rng.index(41);
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + " stars";
  }
  return std::to_string(rng.index(900)) + " units";
}

int quantised_scroll_height(int content_bottom, const Viewport& vp, int step) {
  const int overflow = std::max(0, content_bottom + kBottomMargin - vp.height);
  const int steps = (overflow + step - 1) / step;
  return vp.height + steps * step;
}

std::string_view kind_name(ElementKind k) {
  switch (k) {
    case ElementKind::link: return "link";
    case ElementKind::button: return "button";
    case ElementKind::textbox: return "textbox";
    case ElementKind::text: return "text";
  }
  return "text";
}

ElementKind kind_from(const std::string& s) {
  if (s == "link") return ElementKind::link;
  if (s == "button") return ElementKind::button;
  if (s == "textbox") return ElementKind::textbox;
  if (s == "text") return ElementKind::text;
  throw std::runtime_error("unknown element kind '" + s + "'");
}

const Element* fact_element(const SiteGraph& site, const SimGoal& goal) {
  const auto& page = site.pages.at(goal.target_page);
  for (const auto& e : page.elements) {
    if (e.kind == ElementKind::text && e.value && *e.value == goal.fact &&
        e.label.rfind(goal.attribute + ":", 0) == 0) {
      return &e;
    }
  }
  return nullptr;
}

int scroll_by(const SiteGraph& site, const SimState& s, const Action& a) {
  if (!a.direction || *a.direction == ScrollDirection::left || *a.direction == ScrollDirection::right) {
    return s.scroll;
  }
  int steps = 1;
  if (a.scroll_pixels) {
    steps = std::max(1, static_cast<int>(std::lround(static_cast<double>(*a.scroll_pixels) / site.scroll_step)));
  }
  const int delta = (*a.direction == ScrollDirection::down ? 1 : -1) * steps * site.scroll_step;
  return std::clamp(s.scroll + delta, 0, site.max_scroll(s.page));
}

std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

int SiteGraph::max_depth() const {
  int d = 0;
  for (const auto& p : pages) d = std::max(d, p.depth);
  return d;
}

int SiteGraph::max_scroll_steps() const {
  int k = 0;
  for (const auto& p : pages) k = std::max(k, (p.scroll_height - viewport.height) / scroll_step);
  return k;
}

std::string SiteGraph::hash() const {
  SimWorld w;
  w.site = *this;
  return sha256_hex(dump_line(to_json(w)["site"]));
}

const SimTask* SimWorld::find_task(const std::string& id) const {
  for (const auto& t : tasks) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

const SimTask& SimWorld::task(const std::string& id) const {
  if (const auto* t = find_task(id)) return *t;
  throw std::out_of_range("unknown sim task '" + id + "'");
}

const SimTask* SimWorld::find_by_instruction(const std::string& instruction) const {
  for (const auto& t : tasks) {
    if (t.instruction == instruction) return &t;
  }
  return nullptr;
}

int optimal_path_bound(int depth, int max_scroll_steps) {
  return depth * (max_scroll_steps + 1) + max_scroll_steps + 1;
}

SimWorld generate_site(std::uint64_t seed, const SiteParams& params) {
  if (params.pages < 2 || params.depth < 1 || params.branching < 2 || params.cross_links < 0) {
    throw std::invalid_argument("site params: need pages >= 2, depth >= 1, branching >= 2, cross_links >= 0");
  }
  Rng rng(mix_seed(seed, 0x5173));
  SimWorld world;
  auto& site = world.site;
  site.seed = seed;
  site.viewport = params.viewport;
  site.scroll_step = params.viewport.height / 2;

  std::vector<std::string> names;
  for (const auto* a : kAdjectives) {
    for (const auto* n : kNouns) names.push_back(std::string(a) + " " + n);
  }
  for (std::size_t i = names.size(); i > 1; --i) std::swap(names[i - 1], names[rng.index(i)]);
  if (static_cast<std::size_t>(params.pages) > names.size() + 1) {
    throw std::invalid_argument("site params: too many pages for the title vocabulary");
  }

  // Tree skeleton, breadth first.
  std::vector<int> parent{-1};
  std::vector<int> depth{0};
  std::vector<std::vector<int>> children(1);
  std::deque<int> queue{0};
  while (!queue.empty() && static_cast<int>(parent.size()) < params.pages) {
    const int p = queue.front();
    queue.pop_front();
    if (depth[p] >= params.depth) continue;
    const int k = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(params.branching - 1)));
    for (int c = 0; c < k && static_cast<int>(parent.size()) < params.pages; ++c) {
      const int id = static_cast<int>(parent.size());
      parent.push_back(p);
      depth.push_back(depth[p] + 1);
      children.emplace_back();
      children[p].push_back(id);
      queue.push_back(id);
    }
  }
  // Narrow draws can exhaust the depth budget early; top up under random shallow parents.
  while (static_cast<int>(parent.size()) < params.pages) {
    std::vector<int> open;
    for (int i = 0; i < static_cast<int>(parent.size()); ++i) {
      if (depth[i] < params.depth) open.push_back(i);
    }
    const int p = open[rng.index(open.size())];
    const int id = static_cast<int>(parent.size());
    parent.push_back(p);
    depth.push_back(depth[p] + 1);
    children.emplace_back();
    children[p].push_back(id);
  }
  const int n = static_cast<int>(parent.size());

  std::vector<std::string> titles(n);
  titles[0] = "Home";
  for (int i = 1; i < n; ++i) titles[i] = names[i - 1];

  std::vector<std::vector<int>> cross(n);
  for (int i = 1; i < n && n > 2; ++i) {
    const int c = static_cast<int>(rng.index(static_cast<std::size_t>(params.cross_links + 1)));
    for (int j = 0; j < c; ++j) {
      const int t = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(n - 1)));
      if (t == i || std::find(cross[i].begin(), cross[i].end(), t) != cross[i].end() ||
          std::find(children[i].begin(), children[i].end(), t) != children[i].end()) {
        continue;
      }
      cross[i].push_back(t);
    }
  }

  for (int i = 0; i < n; ++i) {
    Page page;
    page.id = i;
    page.title = titles[i];
    page.depth = depth[i];
    page.elements.push_back({ElementKind::link, {20, 15, 100, 30}, "Home", std::nullopt, 0});
    page.elements.push_back({ElementKind::text, {160, 15, 600, 30}, titles[i], std::nullopt, std::nullopt});
    page.elements.push_back({ElementKind::textbox, {900, 15, 320, 30}, "Search", std::nullopt, std::nullopt});

    int row = 0;
    const auto row_rect = [&](int width) { return Rect{kLeftMargin, kBodyTop + kRowPitch * row++, width, kRowHeight}; };
    const int filler = static_cast<int>(rng.index(4));
    for (int f = 0; f < filler; ++f) {
      page.elements.push_back(
          {ElementKind::text, row_rect(kTextWidth), kFiller[rng.index(kFiller.size())], std::nullopt, std::nullopt});
    }
    for (const int c : children[i]) page.elements.push_back({ElementKind::link, row_rect(kLinkWidth), titles[c], std::nullopt, c});
    for (const int c : cross[i]) {
      page.elements.push_back({ElementKind::link, row_rect(kLinkWidth), "See also: " + titles[c], std::nullopt, c});
    }
    if (i != 0) {
      for (const auto& attr : kAttributes) {
        const auto value = fact_value(attr, rng);
        page.elements.push_back(
            {ElementKind::text, row_rect(kTextWidth), std::string(attr.label) + ": " + value, value, std::nullopt});
      }
    }
    page.scroll_height = quantised_scroll_height(kBodyTop + kRowPitch * row, site.viewport, site.scroll_step);
    site.pages.push_back(std::move(page));
  }

  std::vector<int> order;
  for (int i = 1; i < n; ++i) order.push_back(i);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  for (const int p : order) {
    const auto& attr = kAttributes[rng.index(kAttributes.size())];
    SimTask task;
    char id[16];
    std::snprintf(id, sizeof id, "t%03d", p);
    task.id = id;
    task.instruction = std::string("What is the ") + attr.noun + " of " + titles[p] + "?";
    task.goal.target_page = p;
    task.goal.attribute = attr.label;
    for (const auto& e : site.pages[p].elements) {
      if (e.value && e.label.rfind(std::string(attr.label) + ":", 0) == 0) task.goal.fact = *e.value;
    }
    task.seed = mix_seed(seed, static_cast<std::uint64_t>(p));
    task.optimal_path = plan_optimal_path(site, task.goal);
    world.tasks.push_back(std::move(task));
  }
  return world;
}

json to_json(const SimWorld& world) {
  const auto& site = world.site;
  json pages = json::array();
  for (const auto& p : site.pages) {
    json elems = json::array();
    for (const auto& e : p.elements) {
      json je = {{"kind", kind_name(e.kind)},
                 {"bbox", {e.bbox.x, e.bbox.y, e.bbox.width, e.bbox.height}},
                 {"label", e.label}};
      if (e.value) je["value"] = *e.value;
      if (e.target) je["target"] = *e.target;
      elems.push_back(std::move(je));
    }
    pages.push_back({{"id", p.id},
                     {"title", p.title},
                     {"depth", p.depth},
                     {"scroll_height", p.scroll_height},
                     {"elements", std::move(elems)}});
  }
  json tasks = json::array();
  for (const auto& t : world.tasks) {
    json path = json::array();
    for (const auto& a : t.optimal_path) path.push_back(serialize_action(a));
    tasks.push_back({{"id", t.id},
                     {"instruction", t.instruction},
                     {"goal", {{"target_page", t.goal.target_page}, {"attribute", t.goal.attribute}, {"fact", t.goal.fact}}},
                     {"optimal_path", std::move(path)},
                     {"seed", t.seed}});
  }
  return {{"schema_version", "webstar-site/1"},
          {"site",
           {{"seed", site.seed},
            {"viewport", {site.viewport.width, site.viewport.height}},
            {"scroll_step", site.scroll_step},
            {"home", site.home},
            {"pages", std::move(pages)}}},
          {"tasks", std::move(tasks)}};
}

SimWorld world_from_json(const json& j) {
  if (j.value("schema_version", "") != "webstar-site/1") throw std::runtime_error("not a webstar-site/1 document");
  SimWorld w;
  const auto& s = j.at("site");
  w.site.seed = s.at("seed").get<std::uint64_t>();
  w.site.viewport = Viewport(s.at("viewport").at(0).get<int>(), s.at("viewport").at(1).get<int>());
  w.site.scroll_step = s.at("scroll_step").get<int>();
  w.site.home = s.at("home").get<int>();
  for (const auto& jp : s.at("pages")) {
    Page p;
    p.id = jp.at("id").get<int>();
    p.title = jp.at("title").get<std::string>();
    p.depth = jp.at("depth").get<int>();
    p.scroll_height = jp.at("scroll_height").get<int>();
    for (const auto& je : jp.at("elements")) {
      Element e;
      e.kind = kind_from(je.at("kind").get<std::string>());
      const auto& b = je.at("bbox");
      e.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      e.label = je.at("label").get<std::string>();
      if (je.contains("value")) e.value = je.at("value").get<std::string>();
      if (je.contains("target")) e.target = je.at("target").get<int>();
      p.elements.push_back(std::move(e));
    }
    w.site.pages.push_back(std::move(p));
  }
  for (const auto& jt : j.at("tasks")) {
    SimTask t;
    t.id = jt.at("id").get<std::string>();
    t.instruction = jt.at("instruction").get<std::string>();
    t.goal.target_page = jt.at("goal").at("target_page").get<int>();
    t.goal.attribute = jt.at("goal").at("attribute").get<std::string>();
    t.goal.fact = jt.at("goal").at("fact").get<std::string>();
    for (const auto& a : jt.at("optimal_path")) t.optimal_path.push_back(parse_action(a.get<std::string>()));
    t.seed = jt.at("seed").get<std::uint64_t>();
    w.tasks.push_back(std::move(t));
  }
  for (const auto& p : w.site.pages) {
    for (const auto& e : p.elements) {
      if (e.target && (*e.target < 0 || *e.target >= static_cast<int>(w.site.pages.size()))) {
        throw std::runtime_error("link target outside the page list");
      }
    }
  }
  return w;
}

void save_world(const SimWorld& world, const std::string& path) { write_file(path, dump_line(to_json(world)) + "\n"); }

SimWorld load_world(const std::string& path) { return world_from_json(json::parse(read_file(path))); }

SimState initial_state(const SiteGraph& site) {
  SimState s;
  s.page = site.home;
  return s;
}

ObservationRef observation_ref(const SimState& state) {
  return "sim:p" + std::to_string(state.page) + "/s" + std::to_string(state.scroll);
}

std::optional<std::pair<int, int>> parse_observation_ref(const ObservationRef& ref) {
  int page = 0;
  int scroll = 0;
  char tail = 0;
  if (ref.rfind("sim:p", 0) != 0) return std::nullopt;
  if (std::sscanf(ref.c_str(), "sim:p%d/s%d%c", &page, &scroll, &tail) != 2) return std::nullopt;
  if (page < 0 || scroll < 0) return std::nullopt;
  return std::make_pair(page, scroll);
}

bool element_visible(const SiteGraph& site, const SimState& state, const Element& e) {
  return e.bbox.y >= state.scroll && e.bbox.y + e.bbox.height <= state.scroll + site.viewport.height;
}

std::optional<int> hit_test(const SiteGraph& site, const SimState& state, Point p) {
  if (p.x < 0 || p.y < 0 || p.x >= site.viewport.width || p.y >= site.viewport.height) return std::nullopt;
  const auto& page = site.pages.at(state.page);
  for (std::size_t i = 0; i < page.elements.size(); ++i) {
    if (page.elements[i].bbox.contains(p.x, p.y + state.scroll)) return static_cast<int>(i);
  }
  return std::nullopt;
}

Point to_viewport(const SimState& state, Point page_point) { return {page_point.x, page_point.y - state.scroll}; }

SimState step(const SiteGraph& site, const SimState& state, const Action& action) {
  SimState next = state;
  ++next.steps;
  if (state.done) return next;
  switch (action.kind) {
    case ActionKind::click:
    case ActionKind::left_double: {
      const auto hit = hit_test(site, state, action.points.at(0));
      if (!hit) break;
      const auto& e = site.pages.at(state.page).elements[*hit];
      if (e.kind == ElementKind::link && e.target) {
        next.page = *e.target;
        next.scroll = 0;
        next.focused.reset();
        next.typed.clear();
      } else if (e.kind == ElementKind::textbox) {
        next.focused = *hit;
      }
      break;
    }
    case ActionKind::scroll:
      next.scroll = scroll_by(site, state, action);
      break;
    case ActionKind::type:
      if (next.focused) next.typed[*next.focused] += action.text;
      break;
    case ActionKind::finished:
      next.done = true;
      next.answer = action.text;
      break;
    default:
      break;
  }
  return next;
}

Image render(const SiteGraph& site, const SimState& state) {
  Image img(site.viewport.width, site.viewport.height, colors::kWhite);
  const auto& page = site.pages.at(state.page);
  fill_rect(img, {0, -state.scroll, site.viewport.width, 60}, kHeaderFill);
  for (std::size_t i = 0; i < page.elements.size(); ++i) {
    const auto& e = page.elements[i];
    const Rect r{e.bbox.x, e.bbox.y - state.scroll, e.bbox.width, e.bbox.height};
    if (r.y + r.height <= 0 || r.y >= site.viewport.height) continue;
    const Point text_at{r.x + 8, r.y + (r.height - kGlyphHeight * kTextScale) / 2};
    switch (e.kind) {
      case ElementKind::link:
        stroke_rect(img, r, kLinkColor, 2);
        draw_text(img, text_at, e.label, kLinkColor, kTextScale);
        break;
      case ElementKind::button:
        fill_rect(img, r, kLinkColor);
        draw_text(img, text_at, e.label, colors::kWhite, kTextScale);
        break;
      case ElementKind::textbox: {
        stroke_rect(img, r, kBoxColor, 1);
        const auto it = state.typed.find(static_cast<int>(i));
        draw_text(img, text_at, it != state.typed.end() ? it->second : e.label, kBoxColor, kTextScale);
        break;
      }
      case ElementKind::text:
        draw_text(img, text_at, e.label, kTextColor, kTextScale);
        break;
    }
  }
  return img;
}

Image render(const SiteGraph& site, const ObservationRef& ref) {
  const auto parsed = parse_observation_ref(ref);
  if (!parsed || parsed->first >= static_cast<int>(site.pages.size())) {
    throw std::invalid_argument("not a sim observation for this site: " + ref);
  }
  SimState s;
  s.page = parsed->first;
  s.scroll = std::min(parsed->second, site.max_scroll(s.page));
  return render(site, s);
}

bool goal_visible(const SiteGraph& site, const SimState& state, const SimGoal& goal) {
  if (state.page != goal.target_page) return false;
  const auto* e = fact_element(site, goal);
  return e && element_visible(site, state, *e);
}

DistanceOracle::DistanceOracle(const SiteGraph& site, const SimGoal& goal) : site_(&site), goal_(goal) {
  if (!fact_element(site, goal)) throw std::invalid_argument("goal fact not present on its target page");
  const int n = static_cast<int>(site.pages.size());
  dist_.resize(n);
  std::vector<std::vector<std::vector<std::pair<int, int>>>> reverse(n);
  for (int p = 0; p < n; ++p) {
    dist_[p].assign(site.scroll_positions(p), kUnreachable);
    reverse[p].resize(site.scroll_positions(p));
  }
  std::deque<std::pair<int, int>> frontier;
  for (int p = 0; p < n; ++p) {
    for (int k = 0; k < site.scroll_positions(p); ++k) {
      SimState s;
      s.page = p;
      s.scroll = k * site.scroll_step;
      if (goal_visible(site, s, goal)) {
        dist_[p][k] = 1;
        frontier.emplace_back(p, k);
      }
      for (const auto& a : candidate_actions(s)) {
        const auto t = step(site, s, a);
        reverse[t.page][t.scroll / site.scroll_step].emplace_back(p, k);
      }
    }
  }
  while (!frontier.empty()) {
    const auto [p, k] = frontier.front();
    frontier.pop_front();
    for (const auto& [pp, kk] : reverse[p][k]) {
      if (dist_[pp][kk] == kUnreachable) {
        dist_[pp][kk] = dist_[p][k] + 1;
        frontier.emplace_back(pp, kk);
      }
    }
  }
}

int DistanceOracle::distance(int page, int scroll) const {
  const auto& row = dist_.at(page);
  const int k = std::clamp(scroll / site_->scroll_step, 0, static_cast<int>(row.size()) - 1);
  return row[k];
}

std::vector<Action> navigation_actions(const SiteGraph& site, const SimState& state) {
  std::vector<Action> out;
  for (const auto& e : site.pages.at(state.page).elements) {
    if (e.kind != ElementKind::link || !element_visible(site, state, e)) continue;
    const auto c = to_viewport(state, e.center());
    out.push_back(Action::click(c.x, c.y));
  }
  const Point mid{site.viewport.width / 2, site.viewport.height / 2};
  out.push_back(Action::scroll(mid.x, mid.y, ScrollDirection::down));
  out.push_back(Action::scroll(mid.x, mid.y, ScrollDirection::up));
  return out;
}

std::vector<Action> DistanceOracle::candidate_actions(const SimState& state) const {
  return navigation_actions(*site_, state);
}

Action DistanceOracle::optimal_action(const SimState& state) const {
  if (goal_visible(*site_, state, goal_)) return Action::finished(goal_.fact);
  const int d = distance(state);
  for (const auto& a : candidate_actions(state)) {
    if (distance(step(*site_, state, a)) < d) return a;
  }
  throw std::logic_error("no progress action from an unreachable state");
}

std::vector<Action> plan_optimal_path(const SiteGraph& site, const SimGoal& goal) {
  const DistanceOracle oracle(site, goal);
  std::vector<Action> path;
  auto s = initial_state(site);
  if (oracle.distance(s) >= kUnreachable) throw std::logic_error("task goal unreachable from home");
  while (!s.done) {
    const auto a = oracle.optimal_action(s);
    path.push_back(a);
    s = step(site, s, a);
  }
  return path;
}

void TeacherConfig::validate() const {
  const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(noise) || !prob(irreversible_prob) || !prob(habit)) {
    throw std::invalid_argument("teacher probabilities must lie in [0,1]");
  }
}

namespace {

// Recoverable mistakes available from a state: clicks on empty regions,
// scrolls that make no progress, and links that lead away from the goal.
std::vector<Action> slip_candidates(const SiteGraph& site, const DistanceOracle& oracle, const SimState& s) {
  std::vector<Action> out;
  const int d = oracle.distance(s);
  for (const Point p : {Point{1100, 200}, Point{1100, 420}, Point{1000, 640}}) {
    if (!hit_test(site, s, p)) out.push_back(Action::click(p.x, p.y));
  }
  for (const auto& a : oracle.candidate_actions(s)) {
    if (oracle.distance(step(site, s, a)) >= d) out.push_back(a);
  }
  return out;
}

std::string wrong_answer(const SimWorld& world, const SimTask& task, Rng& rng) {
  std::vector<std::string> pool;
  for (const auto& p : world.site.pages) {
    for (const auto& e : p.elements) {
      if (e.value && *e.value != task.goal.fact && e.label.rfind(task.goal.attribute + ":", 0) == 0) {
        pool.push_back(*e.value);
      }
    }
  }
  if (pool.empty()) return task.goal.fact + " (approx.)";
  return pool[rng.index(pool.size())];
}

}  // namespace

Trajectory teacher_rollout(const SimWorld& world, const SimTask& task, const TeacherConfig& cfg, int max_steps,
                           int rollout_index) {
  cfg.validate();
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  const auto& site = world.site;
  const DistanceOracle oracle(site, task.goal);
  Rng rng(mix_seed(mix_seed(cfg.seed, task.seed), static_cast<std::uint64_t>(rollout_index)));

  Trajectory traj;
  char id[64];
  std::snprintf(id, sizeof id, "%s-r%02d", task.id.c_str(), rollout_index);
  traj.id = id;
  traj.instruction = task.instruction;
  traj.source = TrajectorySource::sim;
  traj.max_steps = max_steps;
  traj.metadata["task_id"] = task.id;

  const bool doomed = rng.bernoulli(cfg.irreversible_prob);
  const auto doom_step = static_cast<int>(rng.index(std::max<std::size_t>(1, task.optimal_path.size())));
  std::string outcome = "capped";

  auto s = initial_state(site);
  while (!traj.full()) {
    Step st;
    st.observation = observation_ref(s);
    const int n = static_cast<int>(traj.steps.size());
    if (doomed && n >= doom_step) {
      st.action = Action::finished(wrong_answer(world, task, rng));
      st.metadata[kTeacherLabelKey] = "irreversible";
    } else if (rng.bernoulli(cfg.noise)) {
      const auto slips = slip_candidates(site, oracle, s);
      const auto habit = static_cast<std::size_t>(
          mix_seed(task.seed, static_cast<std::uint64_t>(s.page) * 4096 + static_cast<std::uint64_t>(s.scroll)) %
          slips.size());
      st.action = rng.bernoulli(cfg.habit) ? slips[habit] : slips[rng.index(slips.size())];
      st.metadata[kTeacherLabelKey] = "suboptimal";
    } else {
      st.action = oracle.optimal_action(s);
      st.metadata[kTeacherLabelKey] = "optimal";
    }
    s = step(site, s, st.action);
    traj.append(std::move(st));
    if (s.done) {
      outcome = answer_matches(*s.answer, task.goal.fact) ? "correct" : "wrong";
      break;
    }
  }
  traj.terminal = s.done ? Terminal::finished : Terminal::step_cap_reached;
  traj.metadata["teacher_outcome"] = outcome;
  return traj;
}

int oracle_grade(const SiteGraph& site, const DistanceOracle& oracle, const SimState& state, const Action& action) {
  if (action.kind == ActionKind::finished) return answer_matches(action.text, oracle.goal().fact) ? 10 : 0;
  const int before = oracle.distance(state);
  const int after = oracle.distance(step(site, state, action));
  if (after >= kUnreachable) return 0;
  return after < before ? 10 : 5;
}

bool answer_matches(const std::string& answer, const std::string& fact, const JudgeOptions& opts) {
  auto a = trim_copy(answer);
  auto f = trim_copy(fact);
  if (opts.case_fold) {
    for (auto* s : {&a, &f}) {
      for (char& c : *s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return a == f;
}

bool oracle_judge(const Trajectory& traj, const SimTask& task, const JudgeOptions& opts) {
  if (traj.steps.empty()) return false;
  const auto& last = traj.steps.back().action;
  return last.kind == ActionKind::finished && answer_matches(last.text, task.goal.fact, opts);
}

std::optional<Image> SimObservationSource::load(const ObservationRef& ref) const {
  const auto parsed = parse_observation_ref(ref);
  if (!parsed) return files_.load(ref);
  if (!site_ || parsed->first >= static_cast<int>(site_->pages.size())) return std::nullopt;
  return render(*site_, ref);
}

OracleCache::OracleCache(const SimWorld& world) : world_(&world) {
  for (const auto& t : world.tasks) oracles_.emplace(t.id, DistanceOracle(world.site, t.goal));
}

const DistanceOracle& OracleCache::get(const SimTask& task) const {
  const auto it = oracles_.find(task.id);
  if (it == oracles_.end()) throw std::out_of_range("no oracle for task '" + task.id + "'");
  return it->second;
}

}  // namespace webstar::sim
