#include <cmath>

#include "cnav/eval.hpp"
#include "doctest.h"

using namespace cnav;

namespace {

class StopPolicy : public NavPolicy {
 public:
  void begin_episode(const Scene&, const Episode&) override {}
  NavAction act(const Observation&) override { return NavAction::Stop; }
};

std::vector<Scene> eval_scenes(std::size_t n) {
  SceneConfig cfg;
  cfg.categories_present = {0, 1, 2, 3, 4, 5};
  std::vector<Scene> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(generate_scene(500 + i, cfg));
    out.back().id = "eval-" + std::to_string(i);
  }
  return out;
}

const std::vector<std::vector<int>> kStages{{0, 1, 2}, {3}, {4}, {5}};

std::vector<EpisodeRecord> random_records(Rng& rng, const std::vector<int>& cats) {
  std::vector<EpisodeRecord> out;
  for (int c : cats) {
    const std::size_t n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      EpisodeRecord r;
      r.category = c;
      r.success = rng.uniform() < 0.5;
      r.shortest = static_cast<double>(rng.below(9));
      r.taken = r.shortest + static_cast<double>(rng.below(6));
      r.spl = spl(r.success, r.shortest, r.taken);
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("spl formula") {
    CHECK(spl(false, 4, 4) == 0.0);
    CHECK(spl(true, 4, 4) == 1.0);
    CHECK(spl(true, 4, 8) == 0.5);
    CHECK(spl(true, 0, 0) == 1.0);
    CHECK(spl(true, 0, 3) == 1.0);
    for (int l = 1; l < 12; ++l)
      for (int p = 0; p < 20; ++p) {
        const double s = spl(true, l, p);
        CHECK(s <= 1.0);
        CHECK(s > 0.0);
        CHECK(spl(false, l, p) == 0.0);
      }
  }

  TEST_CASE("aggregate identities on random reports") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
      const int stage = 1 + static_cast<int>(rng.below(4));
      std::vector<int> cats;
      for (int k = 0; k < stage; ++k) cats.insert(cats.end(), kStages[k].begin(), kStages[k].end());
      const StageReport r = make_report(stage, kStages[static_cast<std::size_t>(stage - 1)], random_records(rng, cats));
      CHECK(r.overall.spl <= r.overall.sr);
      double weighted = 0.0, spl_weighted = 0.0;
      std::size_t total = 0;
      for (const auto& c : r.categories) {
        CHECK(c.spl <= c.sr);
        weighted += c.sr * static_cast<double>(c.episodes);
        spl_weighted += c.spl * static_cast<double>(c.episodes);
        total += c.episodes;
      }
      CHECK(total == r.overall.episodes);
      CHECK(std::fabs(weighted / static_cast<double>(total) - r.overall.sr) <= 1e-12);
      CHECK(std::fabs(spl_weighted / static_cast<double>(total) - r.overall.spl) <= 1e-12);
      if (stage == 1) {
        CHECK_FALSE(r.old_tasks.has_value());
      } else {
        REQUIRE(r.old_tasks.has_value());
        const double n_old = static_cast<double>(r.old_tasks->episodes);
        const double n_new = static_cast<double>(r.new_tasks.episodes);
        CHECK(std::fabs((r.old_tasks->sr * n_old + r.new_tasks.sr * n_new) / (n_old + n_new) - r.overall.sr) <= 1e-12);
      }
    }
  }

  TEST_CASE("summary aggregation") {
    StageReport a, b;
    a.stage = 1;
    a.overall = {10, 0.6, 0.5};
    b.stage = 2;
    b.overall = {10, 0.4, 0.3};
    b.old_tasks = GroupMetrics{5, 0.2, 0.1};
    const auto s = summarize("x", {a, b});
    CHECK(s.avg_sr == doctest::Approx(0.5));
    CHECK(s.last_sr == 0.4);
    CHECK(s.last_spl == 0.3);
    CHECK_FALSE(s.forgetting_curve[0].has_value());
    CHECK(*s.forgetting_curve[1] == 0.2);
    const auto one = summarize("y", {a});
    CHECK(one.avg_sr == one.last_sr);
    CHECK(one.avg_spl == one.last_spl);
  }

  TEST_CASE("suites grow cumulatively and keep their episodes") {
    const auto scenes = eval_scenes(4);
    const EpisodeConfig ec{2, 8, 100};
    std::vector<EvalSuite> suites;
    for (int k = 1; k <= 4; ++k) suites.push_back(build_suite(scenes, kStages, k, 10, ec, 7));
    for (std::size_t k = 1; k < suites.size(); ++k) {
      CHECK(suites[k].categories.size() > suites[k - 1].categories.size());
      for (int c : suites[k - 1].categories) {
        REQUIRE(suites[k].episodes.count(c));
        const auto& now = suites[k].episodes.at(c);
        const auto& before = suites[k - 1].episodes.at(c);
        REQUIRE(now.size() == before.size());
        for (std::size_t i = 0; i < now.size(); ++i) CHECK(now[i].episode == before[i].episode);
      }
    }
    for (const auto& [c, eps] : suites.back().episodes) CHECK(eps.size() >= 10);
    CHECK(suites.back().new_categories == std::vector<int>{5});
  }

  TEST_CASE("expert ceiling, immediate stop and determinism") {
    const auto scenes = eval_scenes(3);
    ObsConfig obs;
    const EpisodeConfig ec{0, 8, 100};
    const EvalSuite suite = build_suite(scenes, kStages, 2, 12, ec, 9);
    ExpertPolicy expert(obs);
    const StageReport r = evaluate_stage(expert, suite, scenes, obs);
    CHECK(r.overall.sr == 1.0);
    CHECK(r.overall.spl == 1.0);
    for (const auto& c : r.categories) {
      CHECK(c.sr == 1.0);
      CHECK(c.spl == 1.0);
    }
    const StageReport again = evaluate_stage(expert, suite, scenes, obs);
    CHECK(to_json(again).dump() == to_json(r).dump());

    StopPolicy stop;
    const StageReport s = evaluate_stage(stop, suite, scenes, obs);
    std::size_t inside = 0, total = 0;
    for (const auto& [c, eps] : suite.episodes)
      for (const auto& e : eps) {
        ++total;
        inside += in_success_region(scenes[e.scene_index], e.episode.start.row, e.episode.start.col, c);
      }
    CHECK(s.overall.sr == doctest::Approx(static_cast<double>(inside) / static_cast<double>(total)).epsilon(1e-15));
  }

  TEST_CASE("report json and csv") {
    Rng rng(5);
    const StageReport r = make_report(2, {3}, random_records(rng, {0, 1, 2, 3}));
    const StageReport back = stage_report_from_json(to_json(r));
    CHECK(to_json(back).dump() == to_json(r).dump());
    const std::string rows = report_csv_rows("cnav", {r});
    CHECK(std::string(kReportCsvHeader) == "run,stage,category,role,episodes,sr,spl");
    CHECK(rows.rfind("cnav,2,0,old,", 0) == 0);
    std::size_t lines = 0;
    for (char ch : rows) lines += ch == '\n';
    CHECK(lines == 4);
    CHECK(forgetting_csv_rows("cnav", {r}).rfind("cnav,2,", 0) == 0);
    CHECK(format_double(0.5) == "0.500000");
  }
}
