#include "webstar/filter.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "webstar/util.hpp"

namespace webstar {

using nlohmann::json;

FilterResult filter_trajectories(std::span<const Trajectory> trajs, TrajectoryJudge& judge, int parallelism) {
  std::vector<std::optional<bool>> verdicts(trajs.size());
  std::vector<std::string> errors(trajs.size());
  parallel_for(trajs.size(), parallelism, [&](std::size_t i) {
    try {
      verdicts[i] = judge.judge(trajs[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  FilterResult out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (!verdicts[i]) {
      out.errors.push_back({trajs[i].id, -1, errors[i]});
      continue;
    }
    Trajectory t = trajs[i];
    t.success = *verdicts[i];
    (*verdicts[i] ? out.kept : out.dropped).push_back(std::move(t));
  }
  return out;
}

std::vector<bool> compute_mask(const Trajectory& traj, int cutoff) {
  std::vector<bool> mask;
  mask.reserve(traj.steps.size());
  for (const auto& s : traj.steps) {
    if (!s.grade) throw UngradedStep(traj.id, s.index);
    mask.push_back(s.grade->score > cutoff);
  }
  return mask;
}

std::string_view to_string(ExportMode m) { return m == ExportMode::all_steps ? "all_steps" : "correct_steps"; }

ExportMode export_mode_from_string(std::string_view s) {
  if (s == "all_steps") return ExportMode::all_steps;
  if (s == "correct_steps") return ExportMode::correct_steps;
  throw std::invalid_argument("export mode must be all_steps or correct_steps, got '" + std::string(s) + "'");
}

std::vector<SftRecord> build_sft_records(const Trajectory& traj, int window, int cutoff, ExportMode mode) {
  std::vector<bool> mask;
  if (mode == ExportMode::correct_steps) mask = compute_mask(traj, cutoff);
  std::vector<SftRecord> out;
  const auto task = traj.metadata.find("task_id");
  for (int n = 0; n < static_cast<int>(traj.steps.size()); ++n) {
    const auto& s = traj.steps[n];
    SftRecord r;
    r.context = make_context(traj, n, window);
    r.target_thought = s.thought;
    r.target_action = s.action;
    r.loss = mode == ExportMode::all_steps ? true : static_cast<bool>(mask[n]);
    if (s.grade) r.score = s.grade->score;
    r.trajectory_id = traj.id;
    r.step_index = n;
    if (task != traj.metadata.end()) r.task_ref = task->second;
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string turn_text(const std::optional<Thought>& thought, const Action& action) {
  std::string out;
  if (thought) out = thought->raw + "\n";
  return out + "Action: " + serialize_action(action);
}

json text_message(const std::string& role, const std::string& text, bool loss) {
  return {{"role", role}, {"content", json::array({{{"type", "text"}, {"text", text}}})}, {"loss", loss}};
}

json thought_or_null(const std::optional<Thought>& t) { return t ? to_json(*t) : json(nullptr); }

std::optional<Thought> thought_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return thought_from_json(j);
}

}  // namespace

json to_json(const SftRecord& rec, const SftJsonOptions& opts) {
  const auto& ctx = rec.context;
  json history = json::array();
  for (const auto& h : ctx.history) {
    history.push_back({{"thought", thought_or_null(h.thought)}, {"action", serialize_action(h.action)}});
  }
  json messages = json::array();
  messages.push_back(text_message("user", ctx.instruction, false));
  for (const auto& h : ctx.history) messages.push_back(text_message("assistant", turn_text(h.thought, h.action), false));
  json images = json::array();
  for (const auto& ref : ctx.images) {
    json part = {{"type", "image"}, {"ref", ref}};
    if (opts.inline_images) {
      if (!opts.images) throw std::invalid_argument("inline images requested without an image source");
      const auto png = encode_png(resolve_image(*opts.images, ImageRef{ref, ImageVariant::raw, {}, {}}));
      part["data"] = "data:image/png;base64," + base64_encode(png);
    }
    images.push_back(std::move(part));
  }
  messages.push_back({{"role", "user"}, {"content", std::move(images)}, {"loss", false}});
  messages.push_back(text_message("assistant", turn_text(rec.target_thought, rec.target_action), rec.loss));

  json j = {{"schema_version", kSftSchema},
            {"trajectory_id", rec.trajectory_id},
            {"step_index", rec.step_index},
            {"loss", rec.loss},
            {"score", rec.score ? json(*rec.score) : json(nullptr)},
            {"context",
             {{"instruction", ctx.instruction},
              {"history", std::move(history)},
              {"images", ctx.images},
              {"target_index", ctx.target_index}}},
            {"target", {{"thought", thought_or_null(rec.target_thought)}, {"action", serialize_action(rec.target_action)}}},
            {"messages", std::move(messages)}};
  if (!rec.task_ref.empty()) j["task_ref"] = rec.task_ref;
  return j;
}

SftRecord sft_record_from_json(const json& j) {
  if (j.value("schema_version", "") != kSftSchema) {
    throw DatasetError(DatasetError::Kind::schema, 0, std::string("expected schema_version ") + kSftSchema);
  }
  try {
    SftRecord r;
    r.trajectory_id = j.at("trajectory_id").get<std::string>();
    r.step_index = j.at("step_index").get<int>();
    r.loss = j.at("loss").get<bool>();
    if (!j.at("score").is_null()) r.score = j.at("score").get<int>();
    r.task_ref = j.value("task_ref", "");
    const auto& c = j.at("context");
    r.context.instruction = c.at("instruction").get<std::string>();
    for (const auto& h : c.at("history")) {
      r.context.history.push_back({thought_opt(h.at("thought")), parse_action(h.at("action").get<std::string>())});
    }
    r.context.images = c.at("images").get<std::vector<std::string>>();
    r.context.target_index = c.at("target_index").get<int>();
    const auto& t = j.at("target");
    r.target_thought = thought_opt(t.at("thought"));
    r.target_action = parse_action(t.at("action").get<std::string>());
    return r;
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::schema, 0, e.what());
  } catch (const ActionParseError& e) {
    throw DatasetError(DatasetError::Kind::schema, 0, e.what());
  }
}

std::vector<SftRecord> read_sft_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(DatasetError::Kind::io, 0, "cannot open " + path.string());
  std::vector<SftRecord> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetError(DatasetError::Kind::parse, no, e.what());
    }
    try {
      out.push_back(sft_record_from_json(j));
    } catch (const DatasetError& e) {
      throw DatasetError(e.kind(), no, e.what());
    }
  }
  return out;
}

json SftExportSummary::to_json() const {
  return {{"trajectories", trajectories},
          {"records", records},
          {"loss_bearing", loss_bearing},
          {"masked", masked},
          {"loss_bearing_by_mode",
           {{"all_steps", all_steps}, {"correct_steps", correct_steps ? json(*correct_steps) : json(nullptr)}}}};
}

SftExportSummary export_sft(std::span<const Trajectory> trajs, const SftExportOptions& opts, std::ostream& out) {
  SftExportSummary sum;
  sum.trajectories = trajs.size();
  std::size_t correct = 0;
  bool all_graded = true;
  for (const auto& traj : trajs) {
    sum.all_steps += traj.steps.size();
    for (const auto& s : traj.steps) {
      if (!s.grade) all_graded = false;
      else correct += s.grade->score > opts.cutoff;
    }
    for (const auto& rec : build_sft_records(traj, opts.window, opts.cutoff, opts.mode)) {
      if (!rec.loss) ++sum.masked;
      if (!rec.loss && opts.drop_masked) continue;
      out << dump_line(to_json(rec, opts.json)) << '\n';
      ++sum.records;
      sum.loss_bearing += rec.loss;
    }
  }
  if (all_graded) sum.correct_steps = correct;
  return sum;
}

json to_json(const RewardRecord& r) {
  json history = json::array();
  for (const auto& a : r.history) history.push_back(serialize_action(a));
  json images = json::array();
  for (const auto& i : r.images) {
    json ji = {{"observation", i.observation}, {"variant", i.variant == ImageVariant::zoom ? "zoom" : "annotated"}};
    if (i.action) ji["action"] = serialize_action(*i.action);
    if (i.rendered_path) ji["rendered"] = *i.rendered_path;
    images.push_back(std::move(ji));
  }
  return {{"schema_version", kRewardSchema},
          {"trajectory_id", r.trajectory_id},
          {"step_index", r.step_index},
          {"instruction", r.instruction},
          {"history", std::move(history)},
          {"images", std::move(images)},
          {"action", serialize_action(r.action)},
          {"score", r.score},
          {"label", r.positive ? "positive" : "negative"}};
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw std::invalid_argument("cannot sample more indices than available");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

RewardExport export_reward_dataset(std::span<const Trajectory> trajs, std::size_t size, std::uint64_t seed,
                                   int window) {
  std::vector<RewardRecord> pos;
  std::vector<RewardRecord> neg;
  for (const auto& traj : trajs) {
    for (int n = 0; n < static_cast<int>(traj.steps.size()); ++n) {
      const auto& s = traj.steps[n];
      if (!s.grade) continue;
      const auto req = make_grade_request(traj, n, window);
      RewardRecord r;
      r.trajectory_id = traj.id;
      r.step_index = n;
      r.instruction = traj.instruction;
      r.history = req.history;
      for (const auto& p : req.prior_images) r.images.push_back(p.image);
      r.images.push_back(req.current);
      r.action = s.action;
      r.score = s.grade->score;
      r.positive = r.score > kRewardClassBoundary;
      (r.positive ? pos : neg).push_back(std::move(r));
    }
  }
  const std::size_t want_pos = (size + 1) / 2;
  const std::size_t want_neg = size / 2;
  if (pos.size() < want_pos) throw InsufficientClass(true, pos.size(), want_pos);
  if (neg.size() < want_neg) throw InsufficientClass(false, neg.size(), want_neg);

  RewardExport out;
  out.seed = seed;
  out.pool_positive = pos.size();
  out.pool_negative = neg.size();
  for (const auto i : sample_indices(pos.size(), want_pos, mix_seed(seed, 1))) out.records.push_back(pos[i]);
  for (const auto i : sample_indices(neg.size(), want_neg, mix_seed(seed, 0))) out.records.push_back(neg[i]);
  std::stable_sort(out.records.begin(), out.records.end(), [](const RewardRecord& a, const RewardRecord& b) {
    return std::tie(a.trajectory_id, a.step_index) < std::tie(b.trajectory_id, b.step_index);
  });
  out.positive = want_pos;
  out.negative = want_neg;
  return out;
}

ScoreStats score_stats(std::span<const Trajectory> trajs) {
  ScoreStats st;
  for (const auto& traj : trajs) {
    std::size_t graded = 0;
    std::size_t good = 0;
    for (const auto& s : traj.steps) {
      if (!s.grade || s.grade->score < 0 || s.grade->score > 10) {
        ++st.ungraded;
        continue;
      }
      ++st.histogram[s.grade->score];
      ++st.total;
      ++graded;
      good += s.grade->score > kDefaultCutoff;
    }
    if (graded) st.per_trajectory.emplace_back(traj.id, static_cast<double>(good) / static_cast<double>(graded));
  }
  if (st.total == 0) return st;
  std::size_t below = 0;
  for (int s = 0; s <= 10; ++s) {
    below += st.histogram[s];
    st.cdf[s] = static_cast<double>(below) / static_cast<double>(st.total);
    st.retention[s] = static_cast<double>(st.total - below) / static_cast<double>(st.total);
  }
  return st;
}

json ScoreStats::to_json() const {
  json per = json::array();
  for (const auto& [id, f] : per_trajectory) per.push_back({{"trajectory_id", id}, {"correct_fraction", f}});
  return {{"total", total},    {"ungraded", ungraded},   {"histogram", histogram},
          {"cdf", cdf},        {"retention", retention}, {"per_trajectory", std::move(per)}};
}

std::string ScoreStats::table() const {
  std::ostringstream out;
  out << "score  count   cdf     retention(score > c)\n";
  char buf[96];
  for (int s = 0; s <= 10; ++s) {
    std::snprintf(buf, sizeof buf, "%5d  %6zu  %.4f  %.4f\n", s, histogram[s], cdf[s], retention[s]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "graded steps %zu, ungraded %zu\n", total, ungraded);
  out << buf;
  return out.str();
}

std::vector<SweepEntry> cutoff_sweep(std::span<const Trajectory> trajs, std::span<const int> cutoffs,
                                     std::optional<std::size_t> budget, std::uint64_t seed, int window) {
  std::vector<SweepEntry> out;
  for (const int c : cutoffs) {
    SweepEntry e;
    e.cutoff = c;
    for (const auto& traj : trajs) {
      auto recs = build_sft_records(traj, window, c, ExportMode::correct_steps);
      e.records.insert(e.records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    }
    e.total_steps = e.records.size();
    std::vector<std::size_t> bearing;
    for (std::size_t i = 0; i < e.records.size(); ++i) {
      if (e.records[i].loss) bearing.push_back(i);
    }
    e.available = bearing.size();
    e.retention = e.total_steps ? static_cast<double>(e.available) / static_cast<double>(e.total_steps) : 0.0;
    e.selected = e.available;
    if (budget) {
      if (e.available < *budget) throw BudgetUnreachable(c, e.available);
      const auto keep = sample_indices(bearing.size(), *budget, seed);
      std::vector<bool> chosen(bearing.size(), false);
      for (const auto k : keep) chosen[k] = true;
      for (std::size_t k = 0; k < bearing.size(); ++k) {
        if (!chosen[k]) e.records[bearing[k]].loss = false;
      }
      e.selected = *budget;
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string sweep_table(std::span<const SweepEntry> entries, std::span<const std::string> pass) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"Cutoff"};
  std::vector<std::string> ret{"Retention"};
  std::vector<std::string> avail{"Loss-bearing"};
  std::vector<std::string> sel{"Selected"};
  char buf[32];
  for (const auto& e : entries) {
    head.push_back(std::to_string(e.cutoff));
    std::snprintf(buf, sizeof buf, "%.3f", e.retention);
    ret.emplace_back(buf);
    avail.push_back(std::to_string(e.available));
    sel.push_back(std::to_string(e.selected));
  }
  rows = {head, ret, avail, sel};
  if (!pass.empty()) {
    std::vector<std::string> p{"Pass@1 (Pass@4)"};
    p.insert(p.end(), pass.begin(), pass.end());
    rows.push_back(p);
  }
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << " | ";
      out << r[i] << std::string(width[i] - r[i].size(), ' ');
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace webstar
