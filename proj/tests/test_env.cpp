#include <algorithm>
#include <deque>

#include "cnav/env.hpp"
#include "cnav/errors.hpp"
#include "doctest.h"
#include "oracles/oracles.hpp"

using namespace cnav;

namespace {

SceneConfig default_scene() {
  SceneConfig cfg;
  cfg.categories_present = {0, 1, 2, 3, 4, 5};
  return cfg;
}

// Flood fill from one Free cell; true when every Free cell is reached.
bool flood_fill_connected(const Scene& s) {
  std::vector<char> seen(static_cast<std::size_t>(s.width() * s.height()), 0);
  std::deque<std::pair<int, int>> q;
  int total = 0;
  for (int r = 0; r < s.height(); ++r)
    for (int c = 0; c < s.width(); ++c)
      if (s.is_free(r, c)) {
        if (q.empty() && total == 0) {
          q.push_back({r, c});
          seen[static_cast<std::size_t>(r * s.width() + c)] = 1;
        }
        ++total;
      }
  int reached = 0;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    ++reached;
    const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k], nc = c + dc[k];
      if (!s.is_free(nr, nc)) continue;
      char& flag = seen[static_cast<std::size_t>(nr * s.width() + nc)];
      if (!flag) flag = 1, q.push_back({nr, nc});
    }
  }
  return reached == total;
}

std::vector<Pose> free_poses(const Scene& s) {
  std::vector<Pose> out;
  for (int r = 0; r < s.height(); ++r)
    for (int c = 0; c < s.width(); ++c)
      if (s.is_free(r, c)) out.push_back({r, c, Heading::N, 0});
  return out;
}

class ConstantPolicy : public NavPolicy {
 public:
  explicit ConstantPolicy(NavAction a) : a_(a) {}
  void begin_episode(const Scene&, const Episode&) override {}
  NavAction act(const Observation&) override { return a_; }

 private:
  NavAction a_;
};

class RandomPolicy : public NavPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  void begin_episode(const Scene&, const Episode&) override {}
  NavAction act(const Observation&) override { return action_from_code(static_cast<int>(rng_.below(6))); }

 private:
  Rng rng_;
};

// Corridor: row 2 columns 1..5 free, object category 0 at (2, 6).
Scene corridor() {
  Scene s(8, 5);
  for (int c = 1; c <= 5; ++c) s.set_free(2, c);
  s.place_object(2, 6, 0, 0);
  return s;
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("action codes are fixed") {
    CHECK(static_cast<int>(NavAction::MoveForward) == 0);
    CHECK(static_cast<int>(NavAction::Stop) == 5);
    CHECK(kNumActions == 6);
    for (int c = 0; c < 6; ++c) CHECK(static_cast<int>(action_from_code(c)) == c);
    CHECK_THROWS(action_from_code(6));
  }

  TEST_CASE("scene generation is deterministic") {
    const auto cfg = default_scene();
    CHECK(generate_scene(42, cfg) == generate_scene(42, cfg));
    CHECK(generate_scene(42, cfg).to_json().dump() == generate_scene(42, cfg).to_json().dump());
    CHECK_FALSE(generate_scene(42, cfg) == generate_scene(43, cfg));
  }

  TEST_CASE("single room single category") {
    SceneConfig cfg;
    cfg.room_count = 1;
    cfg.categories_present = {3};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Scene s = generate_scene(seed, cfg);
      REQUIRE(s.has_category(3));
      for (const auto& o : s.objects()) {
        bool reachable = false;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) reachable = reachable || s.is_free(o.row + dr, o.col + dc);
        CHECK(reachable);
      }
      CHECK(std::count_if(s.objects().begin(), s.objects().end(), [](auto& o) { return o.category == 3; }) >= 1);
    }
  }

  TEST_CASE("generated scenes are connected with walled borders") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Scene s = generate_scene(seed, default_scene());
      CHECK(flood_fill_connected(s));
      CHECK(free_space_connected(s));
      for (int r = 0; r < s.height(); ++r) {
        CHECK(s.kind(r, 0) != CellKind::Free);
        CHECK(s.kind(r, s.width() - 1) != CellKind::Free);
      }
      for (int c = 0; c < s.width(); ++c) {
        CHECK(s.kind(0, c) != CellKind::Free);
        CHECK(s.kind(s.height() - 1, c) != CellKind::Free);
      }
      for (int cat = 0; cat < 6; ++cat) CHECK(s.has_category(cat));
    }
  }

  TEST_CASE("unplaceable category is an error") {
    SceneConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    cfg.room_count = 1;
    cfg.instances_per_category = 40;
    cfg.categories_present = {0, 1, 2, 3, 4, 5};
    CHECK_THROWS_AS(generate_scene(1, cfg), ValidationError);
  }

  TEST_CASE("scene json round trip") {
    Scene s = generate_scene(7, default_scene());
    s.id = "train-007";
    CHECK(Scene::from_json(s.to_json()) == s);
  }

  TEST_CASE("step semantics") {
    Scene s = corridor();
    Pose p{2, 5, Heading::E, 0};
    CHECK(step(s, p, NavAction::MoveForward) == p);
    Pose q{2, 1, Heading::N, 0};
    CHECK(step(s, q, NavAction::MoveForward) == q);
    Pose t = q;
    for (int i = 0; i < 4; ++i) t = step(s, t, NavAction::TurnLeft);
    CHECK(t == q);
    CHECK(step(s, q, NavAction::TurnRight).heading == Heading::E);
    Pose up{2, 1, Heading::N, 1};
    CHECK(step(s, up, NavAction::LookUp).pitch == 1);
    CHECK(step(s, up, NavAction::LookDown).pitch == 0);
    Pose down{2, 1, Heading::N, -1};
    CHECK(step(s, down, NavAction::LookDown).pitch == -1);
    CHECK(step(s, q, NavAction::Stop) == q);
    CHECK(step(s, {2, 1, Heading::E, 0}, NavAction::MoveForward) == Pose{2, 2, Heading::E, 0});
  }

  TEST_CASE("patches under N and E headings are rotations") {
    Scene s = generate_scene(3, default_scene());
    ObsConfig cfg;
    const int V = cfg.patch_size;
    for (const Pose& base : free_poses(s)) {
      Pose n = base, e = base;
      e.heading = Heading::E;
      const auto pn = observe(s, n, n, std::nullopt, 0, cfg).semantic_patch;
      const auto pe = observe(s, e, e, std::nullopt, 0, cfg).semantic_patch;
      // World cell at facing-E patch (r, c) sits at facing-N patch (V-1-c, r).
      for (int r = 0; r < V; ++r)
        for (int c = 0; c < V; ++c)
          CHECK(pe[static_cast<std::size_t>(r * V + c)] == pn[static_cast<std::size_t>(c * V + (V - 1 - r))]);
    }
  }

  TEST_CASE("patch cells match the dense ray-cast oracle") {
    ObsConfig cfg;
    const int V = cfg.patch_size, half = V / 2;
    Rng rng(17);
    // Forward and right unit vectors per heading, written out independently.
    const int fr[4] = {-1, 0, 1, 0}, fc[4] = {0, 1, 0, -1};
    const int rr[4] = {0, 1, 0, -1}, rc[4] = {1, 0, -1, 0};
    for (int trial = 0; trial < 4; ++trial) {
      Scene s = generate_scene(100 + trial, default_scene());
      auto poses = free_poses(s);
      for (int k = 0; k < 6; ++k) {
        Pose p = poses[rng.below(poses.size())];
        const int h = static_cast<int>(rng.below(4));
        p.heading = static_cast<Heading>(h);
        p.pitch = static_cast<int>(rng.below(3)) - 1;
        const auto patch = observe(s, p, p, std::nullopt, 0, cfg).semantic_patch;
        for (int pr = 0; pr < V; ++pr)
          for (int pc = 0; pc < V; ++pc) {
            const int f = half - pr, rt = pc - half;
            const int r = p.row + f * fr[h] + rt * rr[h];
            const int c = p.col + f * fc[h] + rt * rc[h];
            std::uint8_t expect = kCodeUnknown;
            const int cheb = std::max(std::abs(f), std::abs(rt));
            const bool masked = (p.pitch < 0 && cheb > 2) || (p.pitch > 0 && cheb < 2);
            if (f == 0 && rt == 0) {
              expect = kCodeFree;
            } else if (!masked && s.in_bounds(r, c) &&
                       oracles::line_of_sight_dense(s, p.row, p.col, r, c, 4000)) {
              expect = s.kind(r, c) == CellKind::Free   ? kCodeFree
                       : s.kind(r, c) == CellKind::Wall ? kCodeWall
                                                        : static_cast<std::uint8_t>(kCodeObjectBase + s.category_at(r, c));
            }
            CHECK(patch[static_cast<std::size_t>(pr * V + pc)] == expect);
          }
      }
    }
  }

  TEST_CASE("depth ray forward entry is minimal at a wall") {
    Scene s = corridor();
    ObsConfig cfg;
    const auto obs = observe(s, {2, 3, Heading::N, 0}, {2, 3, Heading::N, 0}, std::nullopt, 0, cfg);
    CHECK(obs.depth_rays[static_cast<std::size_t>(cfg.depth_rays / 2)] == doctest::Approx(1.0 / cfg.depth_range));
    for (double d : obs.depth_rays) CHECK((d >= 0.0 && d <= 1.0));
  }

  TEST_CASE("expert plan: start in success region and straight corridor") {
    Scene s = corridor();
    ObsConfig cfg;
    Episode in{"c", {2, 5, Heading::E, 0}, 0, 0.0, 100};
    CHECK(plan_expert(s, in, cfg).actions == std::vector<NavAction>{NavAction::Stop});
    Episode e{"c", {2, 2, Heading::E, 0}, 0, 3.0, 100};
    const auto t = plan_expert(s, e, cfg);
    CHECK(t.actions == std::vector<NavAction>{NavAction::MoveForward, NavAction::MoveForward,
                                              NavAction::MoveForward, NavAction::Stop});
    CHECK(in_success_region(s, 2, 5, 0));
  }

  TEST_CASE("expert optimality and observation replay on random episodes") {
    ObsConfig cfg;
    EpisodeConfig ec{1, 12, 100};
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Scene s = generate_scene(seed, default_scene());
      Rng rng(seed, "test-episodes");
      for (int goal = 0; goal < 6; ++goal) {
        Episode ep = sample_episode(s, goal, ec, rng);
        CHECK(ep.p_star == oracles::geodesic_bfs(s, ep.start.row, ep.start.col, goal));
        CHECK(ep.p_star >= ec.min_geodesic);
        CHECK(ep.p_star <= ec.max_geodesic);
        Trajectory t = plan_expert(s, ep, cfg);
        CHECK(t.actions.back() == NavAction::Stop);
        CHECK(static_cast<double>(std::count(t.actions.begin(), t.actions.end(), NavAction::MoveForward)) ==
              ep.p_star);
        CHECK(t.size() <= static_cast<std::size_t>(ep.max_steps));
        Trajectory again = replay_trajectory(s, ep, t.actions, cfg);
        CHECK(again.observations == t.observations);
        Trajectory loaded = trajectory_from_json(t.to_json(), s, cfg);
        CHECK(loaded.observations == t.observations);
        CHECK(loaded.episode == ep);
      }
    }
  }

  TEST_CASE("view radius puts a goal instance in the first observation") {
    ObsConfig cfg;
    EpisodeConfig ec{2, 8, 100, 4};
    std::size_t sampled = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Scene s = generate_scene(seed, default_scene());
      Rng rng(seed, "test-view");
      for (int goal = 0; goal < 6; ++goal) {
        Rng probe = rng;
        auto ep = try_sample_episode(s, goal, ec, rng);
        if (!ep) {
          CHECK(probe.below(1000) == rng.below(1000));
          continue;
        }
        ++sampled;
        const Observation o = observe(s, ep->start, ep->start, std::nullopt, goal, cfg);
        const auto code = static_cast<std::uint8_t>(kCodeObjectBase + goal);
        CHECK(std::count(o.semantic_patch.begin(), o.semantic_patch.end(), code) > 0);
        CHECK(ep->p_star >= 2);
      }
    }
    CHECK(sampled > 150);
    ec.view_radius = 1;
    ec.min_geodesic = 5;
    Scene s = generate_scene(1, default_scene());
    Rng rng(1);
    CHECK_FALSE(try_sample_episode(s, 0, ec, rng).has_value());
    CHECK_THROWS_AS(sample_episode(s, 0, ec, rng), ValidationError);
  }

  TEST_CASE("rollout outcomes") {
    Scene s = generate_scene(5, default_scene());
    ObsConfig cfg;
    Rng rng(5, "test-rollout");
    EpisodeConfig ec{2, 12, 100};
    Episode ep = sample_episode(s, 1, ec, rng);
    ConstantPolicy stop(NavAction::Stop);
    auto r = rollout(s, ep, stop, cfg);
    CHECK_FALSE(r.success);
    CHECK(r.path_len == 0.0);
    ExpertPolicy expert(cfg);
    r = rollout(s, ep, expert, cfg);
    CHECK(r.success);
    CHECK(r.path_len == ep.p_star);
    ConstantPolicy spin(NavAction::TurnLeft);
    r = rollout(s, ep, spin, cfg);
    CHECK_FALSE(r.success);
    CHECK(r.trajectory.size() == static_cast<std::size_t>(ep.max_steps));
  }

  TEST_CASE("random policy is below the expert") {
    ObsConfig cfg;
    EpisodeConfig ec{2, 8, 100};
    RandomPolicy random(3);
    ExpertPolicy expert(cfg);
    int rand_ok = 0, expert_ok = 0;
    for (int i = 0; i < 200; ++i) {
      Scene s = generate_scene(static_cast<std::uint64_t>(i % 20), default_scene());
      Rng rng(static_cast<std::uint64_t>(i), "test-random");
      Episode ep = sample_episode(s, i % 6, ec, rng);
      rand_ok += rollout(s, ep, random, cfg).success;
      expert_ok += rollout(s, ep, expert, cfg).success;
    }
    CHECK(expert_ok == 200);
    CHECK(rand_ok < 200);
  }

  TEST_CASE("episode json round trip") {
    Episode ep{"eval-001", {3, 4, Heading::W, -1}, 2, 5.0, 80};
    CHECK(Episode::from_json(ep.to_json()) == ep);
  }
}
