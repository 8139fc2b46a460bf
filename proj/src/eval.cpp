#include "cnav/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "cnav/errors.hpp"
#include "cnav/rng.hpp"

namespace cnav {

double spl(bool success, double shortest, double taken) {
  if (!success) return 0.0;
  if (shortest <= 0.0) return 1.0;
  return shortest / std::max(shortest, taken);
}

EvalSuite build_suite(const std::vector<Scene>& scenes, const std::vector<std::vector<int>>& stages,
                      int stage, std::size_t episodes_per_category, const EpisodeConfig& cfg,
                      std::uint64_t seed) {
  if (stage < 1 || static_cast<std::size_t>(stage) > stages.size())
    throw ValidationError("eval suite: stage " + std::to_string(stage) + " out of range");
  if (scenes.empty()) throw ValidationError("eval suite: no evaluation scenes");
  if (episodes_per_category == 0) throw ValidationError("eval suite: episodes_per_category is 0");
  EvalSuite suite;
  suite.stage = stage;
  for (int k = 0; k < stage; ++k)
    for (int c : stages[static_cast<std::size_t>(k)]) suite.categories.push_back(c);
  suite.new_categories = stages[static_cast<std::size_t>(stage - 1)];
  for (int c : suite.categories) {
    Rng rng(seed, "eval-episode", static_cast<std::uint64_t>(c));
    auto& bucket = suite.episodes[c];
    for (std::size_t i = 0; i < episodes_per_category; ++i) {
      std::optional<Episode> ep;
      std::size_t si = i % scenes.size();
      for (std::size_t j = 0; j < scenes.size() && !ep; ++j) {
        si = (i + j) % scenes.size();
        ep = try_sample_episode(scenes[si], c, cfg, rng);
      }
      if (!ep)
        throw ValidationError("eval suite: no evaluation scene admits an episode for category " +
                              std::to_string(c));
      bucket.push_back({si, *ep});
    }
  }
  return suite;
}

const CategoryMetrics& StageReport::category(int c) const {
  for (const auto& m : categories)
    if (m.category == c) return m;
  throw std::out_of_range("stage report has no category " + std::to_string(c));
}

namespace {

GroupMetrics pool(const std::vector<EpisodeRecord>& records, const std::vector<int>& cats) {
  GroupMetrics g;
  double s = 0.0, p = 0.0;
  for (const auto& r : records)
    if (std::find(cats.begin(), cats.end(), r.category) != cats.end()) {
      ++g.episodes;
      s += r.success ? 1.0 : 0.0;
      p += r.spl;
    }
  if (g.episodes) {
    g.sr = s / static_cast<double>(g.episodes);
    g.spl = p / static_cast<double>(g.episodes);
  }
  return g;
}

}  // namespace

double StageReport::sr_over(const std::vector<int>& cats) const { return pool(records, cats).sr; }

StageReport make_report(int stage, const std::vector<int>& new_categories,
                        std::vector<EpisodeRecord> records) {
  StageReport r;
  r.stage = stage;
  std::vector<int> all, old;
  for (const auto& rec : records)
    if (std::find(all.begin(), all.end(), rec.category) == all.end()) all.push_back(rec.category);
  for (int c : all) {
    const bool is_new =
        std::find(new_categories.begin(), new_categories.end(), c) != new_categories.end();
    if (!is_new) old.push_back(c);
    const GroupMetrics g = pool(records, {c});
    r.categories.push_back({c, is_new, g.episodes, g.sr, g.spl});
  }
  r.records = std::move(records);
  r.overall = pool(r.records, all);
  r.new_tasks = pool(r.records, new_categories);
  if (!old.empty()) r.old_tasks = pool(r.records, old);
  return r;
}

StageReport evaluate_stage(NavPolicy& policy, const EvalSuite& suite,
                           const std::vector<Scene>& scenes, const ObsConfig& obs) {
  std::vector<EpisodeRecord> records;
  for (int c : suite.categories) {
    for (const auto& ee : suite.episodes.at(c)) {
      const Scene& scene = scenes.at(ee.scene_index);
      const RolloutResult res = rollout(scene, ee.episode, policy, obs);
      EpisodeRecord rec;
      rec.category = c;
      rec.scene_id = scene.id;
      rec.success = res.success;
      rec.shortest = ee.episode.p_star;
      rec.taken = res.path_len;
      rec.spl = spl(res.success, rec.shortest, rec.taken);
      rec.steps = res.trajectory.size();
      records.push_back(std::move(rec));
    }
  }
  return make_report(suite.stage, suite.new_categories, std::move(records));
}

BenchmarkSummary summarize(const std::string& run, const std::vector<StageReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("summarize: no stage reports");
  BenchmarkSummary s;
  s.run = run;
  s.stages = reports.size();
  for (const auto& r : reports) {
    s.avg_sr += r.overall.sr;
    s.avg_spl += r.overall.spl;
    s.forgetting_curve.push_back(r.old_tasks ? std::optional<double>(r.old_tasks->sr) : std::nullopt);
  }
  s.avg_sr /= static_cast<double>(reports.size());
  s.avg_spl /= static_cast<double>(reports.size());
  s.last_sr = reports.back().overall.sr;
  s.last_spl = reports.back().overall.spl;
  return s;
}

namespace {

nlohmann::json group_json(const GroupMetrics& g) {
  return {{"episodes", g.episodes}, {"sr", g.sr}, {"spl", g.spl}};
}

GroupMetrics group_from_json(const nlohmann::json& j) {
  return {j.at("episodes").get<std::size_t>(), j.at("sr").get<double>(), j.at("spl").get<double>()};
}

}  // namespace

nlohmann::json to_json(const StageReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories)
    cats.push_back({{"category", c.category},
                    {"new", c.is_new},
                    {"episodes", c.episodes},
                    {"sr", c.sr},
                    {"spl", c.spl}});
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& e : r.records)
    recs.push_back({{"category", e.category},
                    {"scene_id", e.scene_id},
                    {"success", e.success},
                    {"shortest", e.shortest},
                    {"taken", e.taken},
                    {"spl", e.spl},
                    {"steps", e.steps}});
  return {{"stage", r.stage},
          {"categories", cats},
          {"overall", group_json(r.overall)},
          {"old", r.old_tasks ? group_json(*r.old_tasks) : nlohmann::json(nullptr)},
          {"new", group_json(r.new_tasks)},
          {"episodes", recs}};
}

StageReport stage_report_from_json(const nlohmann::json& j) {
  StageReport r;
  r.stage = j.at("stage").get<int>();
  for (const auto& c : j.at("categories"))
    r.categories.push_back({c.at("category").get<int>(), c.at("new").get<bool>(),
                            c.at("episodes").get<std::size_t>(), c.at("sr").get<double>(),
                            c.at("spl").get<double>()});
  r.overall = group_from_json(j.at("overall"));
  if (!j.at("old").is_null()) r.old_tasks = group_from_json(j.at("old"));
  r.new_tasks = group_from_json(j.at("new"));
  for (const auto& e : j.at("episodes")) {
    EpisodeRecord rec;
    rec.category = e.at("category").get<int>();
    rec.scene_id = e.at("scene_id").get<std::string>();
    rec.success = e.at("success").get<bool>();
    rec.shortest = e.at("shortest").get<double>();
    rec.taken = e.at("taken").get<double>();
    rec.spl = e.at("spl").get<double>();
    rec.steps = e.at("steps").get<std::size_t>();
    r.records.push_back(std::move(rec));
  }
  return r;
}

nlohmann::json to_json(const BenchmarkSummary& s) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& v : s.forgetting_curve) curve.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"run", s.run},
          {"stages", s.stages},
          {"avg_sr", s.avg_sr},
          {"avg_spl", s.avg_spl},
          {"last_sr", s.last_sr},
          {"last_spl", s.last_spl},
          {"forgetting_curve", curve},
          {"retention_ratio", s.retention_ratio},
          {"buffer_frames", s.buffer_frames},
          {"full_frames", s.full_frames},
          {"buffer_bytes", s.buffer_bytes}};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string report_csv_rows(const std::string& run, const std::vector<StageReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports)
    for (const auto& c : r.categories)
      out << run << ',' << r.stage << ',' << c.category << ',' << (c.is_new ? "new" : "old") << ','
          << c.episodes << ',' << format_double(c.sr) << ',' << format_double(c.spl) << '\n';
  return out.str();
}

std::string forgetting_csv_rows(const std::string& run, const std::vector<StageReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports)
    out << run << ',' << r.stage << ',' << (r.old_tasks ? format_double(r.old_tasks->sr) : "") << ','
        << format_double(r.new_tasks.sr) << ',' << format_double(r.overall.sr) << '\n';
  return out.str();
}

}  // namespace cnav
