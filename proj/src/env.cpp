#include "cnav/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <set>
#include <stdexcept>

#include "cnav/errors.hpp"

namespace cnav {

const char* action_name(NavAction a) {
  switch (a) {
    case NavAction::MoveForward: return "move_forward";
    case NavAction::TurnLeft: return "turn_left";
    case NavAction::TurnRight: return "turn_right";
    case NavAction::LookUp: return "look_up";
    case NavAction::LookDown: return "look_down";
    case NavAction::Stop: return "stop";
  }
  return "?";
}

NavAction action_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kNumActions))
    throw ValidationError("invalid action code " + std::to_string(code));
  return static_cast<NavAction>(code);
}

// --- Scene -------------------------------------------------------------------

Scene::Scene(int width, int height)
    : width_(width),
      height_(height),
      kinds_(static_cast<std::size_t>(width * height), CellKind::Wall),
      category_(static_cast<std::size_t>(width * height), -1) {}

void Scene::set_wall(int r, int c) {
  kinds_[idx(r, c)] = CellKind::Wall;
  category_[idx(r, c)] = -1;
}

void Scene::set_free(int r, int c) {
  kinds_[idx(r, c)] = CellKind::Free;
  category_[idx(r, c)] = -1;
}

void Scene::place_object(int r, int c, int category, int instance) {
  kinds_[idx(r, c)] = CellKind::Object;
  category_[idx(r, c)] = category;
  objects_.push_back({category, instance, r, c});
}

void Scene::remove_object(int r, int c) {
  std::erase_if(objects_, [&](const ObjectInstance& o) { return o.row == r && o.col == c; });
  set_free(r, c);
}

bool Scene::has_category(int category) const {
  return std::any_of(objects_.begin(), objects_.end(),
                     [&](const ObjectInstance& o) { return o.category == category; });
}

nlohmann::json Scene::to_json() const {
  std::vector<std::string> grid;
  for (int r = 0; r < height_; ++r) {
    std::string row;
    for (int c = 0; c < width_; ++c) {
      const CellKind k = kind(r, c);
      row.push_back(k == CellKind::Wall ? '#' : k == CellKind::Free ? '.' : 'o');
    }
    grid.push_back(std::move(row));
  }
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects_)
    objs.push_back({{"category", o.category}, {"instance", o.instance}, {"row", o.row},
                    {"col", o.col}});
  nlohmann::json rooms = nlohmann::json::array();
  for (const auto& rm : rooms_) rooms.push_back({rm.row0, rm.col0, rm.row1, rm.col1});
  return {{"id", id},       {"seed", seed},    {"width", width_}, {"height", height_},
          {"grid", grid},   {"objects", objs}, {"rooms", rooms}};
}

Scene Scene::from_json(const nlohmann::json& j) {
  Scene s(j.at("width").get<int>(), j.at("height").get<int>());
  s.id = j.at("id").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto grid = j.at("grid").get<std::vector<std::string>>();
  if (static_cast<int>(grid.size()) != s.height_) throw IoError("scene grid height mismatch");
  for (int r = 0; r < s.height_; ++r) {
    if (static_cast<int>(grid[r].size()) != s.width_) throw IoError("scene grid width mismatch");
    for (int c = 0; c < s.width_; ++c)
      if (grid[r][c] != '#') s.set_free(r, c);
  }
  for (const auto& o : j.at("objects"))
    s.place_object(o.at("row").get<int>(), o.at("col").get<int>(), o.at("category").get<int>(),
                   o.at("instance").get<int>());
  for (const auto& rm : j.at("rooms")) s.rooms_.push_back({rm[0], rm[1], rm[2], rm[3]});
  return s;
}

// --- generation --------------------------------------------------------------

namespace {

constexpr int kMinRoomSide = 2;
constexpr std::array<std::pair<int, int>, 4> kDirs4{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

int count_free(const Scene& s) {
  int n = 0;
  for (int r = 0; r < s.height(); ++r)
    for (int c = 0; c < s.width(); ++c) n += s.is_free(r, c) ? 1 : 0;
  return n;
}

// Attempts to split `room` in place; returns the new room on success.
std::optional<Room> split_room(Scene& s, Room& room, Rng& rng, std::set<std::pair<int, int>>& doors) {
  const int h = room.row1 - room.row0 + 1;
  const int w = room.col1 - room.col0 + 1;
  std::vector<bool> orientations;  // true = vertical wall (split columns)
  if (w >= h) orientations = {true, false};
  else orientations = {false, true};
  if (w == h && rng.below(2) == 1) std::swap(orientations[0], orientations[1]);

  for (bool vertical : orientations) {
    std::vector<int> lines;
    if (vertical) {
      for (int p = room.col0 + kMinRoomSide; p <= room.col1 - kMinRoomSide; ++p)
        if (s.kind(room.row0 - 1, p) == CellKind::Wall && s.kind(room.row1 + 1, p) == CellKind::Wall)
          lines.push_back(p);
    } else {
      for (int p = room.row0 + kMinRoomSide; p <= room.row1 - kMinRoomSide; ++p)
        if (s.kind(p, room.col0 - 1) == CellKind::Wall && s.kind(p, room.col1 + 1) == CellKind::Wall)
          lines.push_back(p);
    }
    if (lines.empty()) continue;
    const int p = lines[rng.below(lines.size())];
    Room other = room;
    if (vertical) {
      for (int r = room.row0; r <= room.row1; ++r) s.set_wall(r, p);
      const int door = room.row0 + static_cast<int>(rng.below(static_cast<std::size_t>(h)));
      s.set_free(door, p);
      doors.insert({door, p});
      other.col0 = p + 1;
      room.col1 = p - 1;
    } else {
      for (int c = room.col0; c <= room.col1; ++c) s.set_wall(p, c);
      const int door = room.col0 + static_cast<int>(rng.below(static_cast<std::size_t>(w)));
      s.set_free(p, door);
      doors.insert({p, door});
      other.row0 = p + 1;
      room.row1 = p - 1;
    }
    return other;
  }
  return std::nullopt;
}

bool has_free_neighbor8(const Scene& s, int r, int c) {
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc)
      if ((dr || dc) && s.is_free(r + dr, c + dc)) return true;
  return false;
}

}  // namespace

bool free_space_connected(const Scene& s) {
  const int total = count_free(s);
  if (total == 0) return true;
  int sr = -1, sc = -1;
  for (int r = 0; r < s.height() && sr < 0; ++r)
    for (int c = 0; c < s.width(); ++c)
      if (s.is_free(r, c)) {
        sr = r;
        sc = c;
        break;
      }
  std::vector<bool> seen(static_cast<std::size_t>(s.width() * s.height()), false);
  std::deque<std::pair<int, int>> q{{sr, sc}};
  seen[static_cast<std::size_t>(sr * s.width() + sc)] = true;
  int reached = 0;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    ++reached;
    for (auto [dr, dc] : kDirs4) {
      const int nr = r + dr, nc = c + dc;
      if (!s.is_free(nr, nc)) continue;
      auto flag = seen[static_cast<std::size_t>(nr * s.width() + nc)];
      if (flag) continue;
      flag = true;
      q.push_back({nr, nc});
    }
  }
  return reached == total;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& config) {
  if (config.width < 8 || config.height < 8)
    throw ValidationError("scene: size must be at least 8x8");
  if (config.room_count < 1) throw ValidationError("scene: room_count must be >= 1");
  if (config.instances_per_category < 1)
    throw ValidationError("scene: instances_per_category must be >= 1");

  Rng rng(seed);
  Scene s(config.width, config.height);
  s.seed = seed;
  for (int r = 1; r < config.height - 1; ++r)
    for (int c = 1; c < config.width - 1; ++c) s.set_free(r, c);

  std::vector<Room> rooms{{1, 1, config.height - 2, config.width - 2}};
  std::set<std::pair<int, int>> doors;
  std::vector<bool> splittable{true};
  while (static_cast<int>(rooms.size()) < config.room_count) {
    // Split the largest room that still admits a split.
    int best = -1;
    for (std::size_t i = 0; i < rooms.size(); ++i) {
      if (!splittable[i]) continue;
      const auto area = [](const Room& rm) {
        return (rm.row1 - rm.row0 + 1) * (rm.col1 - rm.col0 + 1);
      };
      if (best < 0 || area(rooms[i]) > area(rooms[static_cast<std::size_t>(best)]))
        best = static_cast<int>(i);
    }
    if (best < 0)
      throw ValidationError("scene: cannot partition " + std::to_string(config.width) + "x" +
                            std::to_string(config.height) + " into " +
                            std::to_string(config.room_count) + " rooms");
    auto other = split_room(s, rooms[static_cast<std::size_t>(best)], rng, doors);
    if (!other) {
      splittable[static_cast<std::size_t>(best)] = false;
      continue;
    }
    rooms.push_back(*other);
    splittable.push_back(true);
  }
  s.rooms() = rooms;

  int instance = 0;
  for (int category : config.categories_present) {
    for (int k = 0; k < config.instances_per_category; ++k) {
      std::vector<std::pair<int, int>> candidates;
      for (int r = 1; r < config.height - 1; ++r)
        for (int c = 1; c < config.width - 1; ++c) {
          if (!s.is_free(r, c) || doors.contains({r, c})) continue;
          bool wall_adjacent = false, near_door = false, near_object = false;
          for (auto [dr, dc] : kDirs4) {
            if (s.kind(r + dr, c + dc) == CellKind::Wall) wall_adjacent = true;
            if (doors.contains({r + dr, c + dc})) near_door = true;
          }
          for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc)
              if (s.kind(r + dr, c + dc) == CellKind::Object) near_object = true;
          if (wall_adjacent && !near_door && !near_object) candidates.push_back({r, c});
        }
      rng.shuffle(candidates);
      bool placed = false;
      for (auto [r, c] : candidates) {
        s.place_object(r, c, category, instance);
        if (free_space_connected(s) && has_free_neighbor8(s, r, c)) {
          placed = true;
          break;
        }
        s.remove_object(r, c);
      }
      if (!placed)
        throw ValidationError("scene: no free wall-adjacent cell for category " +
                              std::to_string(category));
      ++instance;
    }
  }
  return s;
}

// --- observation ---------------------------------------------------------------

std::pair<int, int> egocentric_to_world(Heading h, int forward, int right) {
  switch (h) {
    case Heading::N: return {-forward, right};
    case Heading::E: return {right, forward};
    case Heading::S: return {forward, -right};
    case Heading::W: return {-right, -forward};
  }
  return {0, 0};
}

namespace {

constexpr int kSightRadius = 16;

// Open t-interval during which coordinate t*d lies strictly inside (k-1/2, k+1/2).
std::pair<double, double> crossing(int k, int d) {
  if (d == 0) {
    if (k == 0) return {-1.0, 2.0};
    return {1.0, 0.0};
  }
  const double a = (2.0 * k - 1.0) / (2.0 * d);
  const double b = (2.0 * k + 1.0) / (2.0 * d);
  return {std::min(a, b), std::max(a, b)};
}

std::vector<std::pair<int, int>> compute_sight_line(int dr, int dc) {
  std::vector<std::pair<int, int>> cells;
  for (int r = std::min(0, dr); r <= std::max(0, dr); ++r)
    for (int c = std::min(0, dc); c <= std::max(0, dc); ++c) {
      if ((r == 0 && c == 0) || (r == dr && c == dc)) continue;
      auto [r_lo, r_hi] = crossing(r, dr);
      auto [c_lo, c_hi] = crossing(c, dc);
      const double lo = std::max({r_lo, c_lo, 0.0});
      const double hi = std::min({r_hi, c_hi, 1.0});
      if (lo < hi) cells.push_back({r, c});
    }
  return cells;
}

}  // namespace

const std::vector<std::pair<int, int>>& sight_line(int dr, int dc) {
  static const auto table = [] {
    std::vector<std::vector<std::pair<int, int>>> t;
    const int n = 2 * kSightRadius + 1;
    t.reserve(static_cast<std::size_t>(n * n));
    for (int r = -kSightRadius; r <= kSightRadius; ++r)
      for (int c = -kSightRadius; c <= kSightRadius; ++c) t.push_back(compute_sight_line(r, c));
    return t;
  }();
  if (std::abs(dr) > kSightRadius || std::abs(dc) > kSightRadius)
    throw std::out_of_range("sight_line: offset beyond supported radius");
  const int n = 2 * kSightRadius + 1;
  return table[static_cast<std::size_t>((dr + kSightRadius) * n + (dc + kSightRadius))];
}

bool line_of_sight(const Scene& scene, int r0, int c0, int r1, int c1) {
  for (auto [dr, dc] : sight_line(r1 - r0, c1 - c0))
    if (scene.blocks(r0 + dr, c0 + dc)) return false;
  return true;
}

bool pitch_visible(int pitch, int fwd, int right) {
  const int cheb = std::max(std::abs(fwd), std::abs(right));
  if (pitch < 0) return cheb <= 2;
  if (pitch > 0) return cheb >= 2;
  return true;
}

Observation observe(const Scene& scene, const Pose& pose, const Pose& start,
                    std::optional<NavAction> prev_action, int goal_category,
                    const ObsConfig& cfg) {
  if (cfg.patch_size < 1 || cfg.patch_size % 2 == 0 || cfg.patch_size / 2 > kSightRadius)
    throw std::invalid_argument("observe: patch_size must be odd and at most 33");
  Observation obs;
  const int V = cfg.patch_size;
  const int half = V / 2;
  obs.semantic_patch.assign(static_cast<std::size_t>(V * V), kCodeUnknown);
  for (int pr = 0; pr < V; ++pr)
    for (int pc = 0; pc < V; ++pc) {
      const int fwd = half - pr;
      const int right = pc - half;
      std::uint8_t& code = obs.semantic_patch[static_cast<std::size_t>(pr * V + pc)];
      if (fwd == 0 && right == 0) {
        code = kCodeFree;
        continue;
      }
      if (!pitch_visible(pose.pitch, fwd, right)) continue;
      auto [dr, dc] = egocentric_to_world(pose.heading, fwd, right);
      const int r = pose.row + dr, c = pose.col + dc;
      if (!scene.in_bounds(r, c) || !line_of_sight(scene, pose.row, pose.col, r, c)) continue;
      switch (scene.kind(r, c)) {
        case CellKind::Free: code = kCodeFree; break;
        case CellKind::Wall: code = kCodeWall; break;
        case CellKind::Object:
          code = static_cast<std::uint8_t>(kCodeObjectBase + scene.category_at(r, c));
          break;
      }
    }

  obs.depth_rays.assign(static_cast<std::size_t>(cfg.depth_rays), 1.0);
  for (int j = 0; j < cfg.depth_rays; ++j) {
    const double deg = cfg.depth_rays == 1 ? 0.0 : -60.0 + 120.0 * j / (cfg.depth_rays - 1);
    const double theta = deg * std::numbers::pi / 180.0;
    for (int s = 1; s <= cfg.depth_range; ++s) {
      const int f = static_cast<int>(std::lround(s * std::cos(theta)));
      const int rt = static_cast<int>(std::lround(s * std::sin(theta)));
      auto [dr, dc] = egocentric_to_world(pose.heading, f, rt);
      if (scene.blocks(pose.row + dr, pose.col + dc)) {
        obs.depth_rays[static_cast<std::size_t>(j)] =
            static_cast<double>(s) / static_cast<double>(cfg.depth_range);
        break;
      }
    }
  }

  obs.pose_delta[0] = (pose.row - start.row) / 10.0;
  obs.pose_delta[1] = (pose.col - start.col) / 10.0;
  obs.pose_delta[2 + static_cast<int>(pose.heading)] = 1.0;
  obs.pose_delta[6] = static_cast<double>(pose.pitch);
  obs.prev_action = prev_action;
  obs.goal_category = goal_category;
  return obs;
}

Pose step(const Scene& scene, const Pose& pose, NavAction action) {
  Pose next = pose;
  switch (action) {
    case NavAction::MoveForward: {
      auto [dr, dc] = egocentric_to_world(pose.heading, 1, 0);
      if (scene.is_free(pose.row + dr, pose.col + dc)) {
        next.row += dr;
        next.col += dc;
      }
      break;
    }
    case NavAction::TurnLeft:
      next.heading = static_cast<Heading>((static_cast<int>(pose.heading) + 3) % 4);
      break;
    case NavAction::TurnRight:
      next.heading = static_cast<Heading>((static_cast<int>(pose.heading) + 1) % 4);
      break;
    case NavAction::LookUp: next.pitch = std::min(1, pose.pitch + 1); break;
    case NavAction::LookDown: next.pitch = std::max(-1, pose.pitch - 1); break;
    case NavAction::Stop: break;
  }
  return next;
}

// --- episodes ----------------------------------------------------------------

namespace {
nlohmann::json pose_json(const Pose& p) {
  return {{"row", p.row}, {"col", p.col}, {"heading", static_cast<int>(p.heading)},
          {"pitch", p.pitch}};
}
Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  p.row = j.at("row").get<int>();
  p.col = j.at("col").get<int>();
  const int h = j.at("heading").get<int>();
  if (h < 0 || h > 3) throw IoError("pose: invalid heading");
  p.heading = static_cast<Heading>(h);
  p.pitch = j.at("pitch").get<int>();
  return p;
}
}  // namespace

nlohmann::json Episode::to_json() const {
  return {{"scene_id", scene_id}, {"start", pose_json(start)}, {"goal", goal_category},
          {"p_star", p_star},     {"max_steps", max_steps}};
}

Episode Episode::from_json(const nlohmann::json& j) {
  Episode e;
  e.scene_id = j.at("scene_id").get<std::string>();
  e.start = pose_from_json(j.at("start"));
  e.goal_category = j.at("goal").get<int>();
  e.p_star = j.at("p_star").get<double>();
  e.max_steps = j.at("max_steps").get<int>();
  return e;
}

bool in_success_region(const Scene& scene, int row, int col, int category) {
  if (!scene.is_free(row, col)) return false;
  for (const auto& o : scene.objects())
    if (o.category == category && std::abs(o.row - row) <= 1 && std::abs(o.col - col) <= 1)
      return true;
  return false;
}

std::vector<int> geodesic_field(const Scene& scene, int category) {
  const int w = scene.width();
  std::vector<int> dist(static_cast<std::size_t>(w * scene.height()), -1);
  std::deque<std::pair<int, int>> q;
  for (int r = 0; r < scene.height(); ++r)
    for (int c = 0; c < w; ++c)
      if (in_success_region(scene, r, c, category)) {
        dist[static_cast<std::size_t>(r * w + c)] = 0;
        q.push_back({r, c});
      }
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    const int d = dist[static_cast<std::size_t>(r * w + c)];
    for (auto [dr, dc] : kDirs4) {
      const int nr = r + dr, nc = c + dc;
      if (!scene.is_free(nr, nc)) continue;
      int& nd = dist[static_cast<std::size_t>(nr * w + nc)];
      if (nd >= 0) continue;
      nd = d + 1;
      q.push_back({nr, nc});
    }
  }
  return dist;
}

namespace {

bool sees_category(const Scene& scene, int row, int col, int category, int radius) {
  for (const auto& o : scene.objects())
    if (o.category == category && std::abs(o.row - row) <= radius &&
        std::abs(o.col - col) <= radius && line_of_sight(scene, row, col, o.row, o.col))
      return true;
  return false;
}

}  // namespace

std::optional<Episode> try_sample_episode(const Scene& scene, int goal, const EpisodeConfig& cfg,
                                          Rng& rng) {
  if (!scene.has_category(goal)) return std::nullopt;
  const auto field = geodesic_field(scene, goal);
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < scene.height(); ++r)
    for (int c = 0; c < scene.width(); ++c) {
      const int d = field[static_cast<std::size_t>(r * scene.width() + c)];
      if (d < cfg.min_geodesic || d > cfg.max_geodesic) continue;
      if (cfg.view_radius > 0 && !sees_category(scene, r, c, goal, cfg.view_radius)) continue;
      cells.push_back({r, c});
    }
  if (cells.empty()) return std::nullopt;
  auto [r, c] = cells[rng.below(cells.size())];
  Episode e;
  e.scene_id = scene.id;
  e.start = Pose{r, c, static_cast<Heading>(rng.below(4)), 0};
  e.goal_category = goal;
  e.p_star = field[static_cast<std::size_t>(r * scene.width() + c)];
  e.max_steps = cfg.max_steps;
  return e;
}

Episode sample_episode(const Scene& scene, int goal, const EpisodeConfig& cfg, Rng& rng) {
  if (!scene.has_category(goal))
    throw ValidationError("episode: goal category " + std::to_string(goal) + " absent from scene " +
                          scene.id);
  auto e = try_sample_episode(scene, goal, cfg, rng);
  if (!e) throw ValidationError("episode: no start cell within geodesic range in scene " + scene.id);
  return *e;
}

nlohmann::json Trajectory::to_json() const {
  std::vector<int> codes;
  codes.reserve(actions.size());
  for (auto a : actions) codes.push_back(static_cast<int>(a));
  return {{"episode", episode.to_json()}, {"actions", codes}};
}

Trajectory replay_trajectory(const Scene& scene, const Episode& episode,
                             std::vector<NavAction> actions, const ObsConfig& cfg) {
  Trajectory t;
  t.episode = episode;
  t.actions = std::move(actions);
  t.observations.reserve(t.actions.size());
  Pose pose = episode.start;
  std::optional<NavAction> prev;
  for (NavAction a : t.actions) {
    t.observations.push_back(observe(scene, pose, episode.start, prev, episode.goal_category, cfg));
    pose = step(scene, pose, a);
    prev = a;
  }
  return t;
}

Trajectory trajectory_from_json(const nlohmann::json& j, const Scene& scene,
                                const ObsConfig& cfg) {
  Episode e = Episode::from_json(j.at("episode"));
  if (e.scene_id != scene.id) throw IoError("trajectory references scene " + e.scene_id);
  std::vector<NavAction> actions;
  for (int code : j.at("actions").get<std::vector<int>>()) actions.push_back(action_from_code(code));
  return replay_trajectory(scene, e, std::move(actions), cfg);
}

Trajectory plan_expert(const Scene& scene, const Episode& episode, const ObsConfig& cfg) {
  const auto field = geodesic_field(scene, episode.goal_category);
  const int w = scene.width();
  auto dist_at = [&](int r, int c) { return field[static_cast<std::size_t>(r * w + c)]; };
  const Pose& s0 = episode.start;
  if (!scene.is_free(s0.row, s0.col) || dist_at(s0.row, s0.col) < 0)
    throw std::runtime_error("plan_expert: goal unreachable from start");

  // BFS over (cell, heading); forward moves must descend the geodesic field,
  // so every solution is a shortest cell path and BFS minimizes the turns.
  auto key = [&](int r, int c, int h) { return static_cast<std::size_t>((r * w + c) * 4 + h); };
  const std::size_t n_states = static_cast<std::size_t>(w * scene.height() * 4);
  std::vector<std::int64_t> parent(n_states, -2);
  std::vector<NavAction> via(n_states, NavAction::Stop);
  std::deque<std::size_t> q;
  const std::size_t root = key(s0.row, s0.col, static_cast<int>(s0.heading));
  parent[root] = -1;
  q.push_back(root);
  std::int64_t goal_state = -1;
  while (!q.empty()) {
    const std::size_t cur = q.front();
    q.pop_front();
    const int h = static_cast<int>(cur % 4);
    const int cell = static_cast<int>(cur / 4);
    const int r = cell / w, c = cell % w;
    if (dist_at(r, c) == 0) {
      goal_state = static_cast<std::int64_t>(cur);
      break;
    }
    const Pose here{r, c, static_cast<Heading>(h), 0};
    for (NavAction a : {NavAction::MoveForward, NavAction::TurnLeft, NavAction::TurnRight}) {
      const Pose nxt = step(scene, here, a);
      if (a == NavAction::MoveForward &&
          (nxt == here || dist_at(nxt.row, nxt.col) != dist_at(r, c) - 1))
        continue;
      const std::size_t k = key(nxt.row, nxt.col, static_cast<int>(nxt.heading));
      if (parent[k] != -2) continue;
      parent[k] = static_cast<std::int64_t>(cur);
      via[k] = a;
      q.push_back(k);
    }
  }
  if (goal_state < 0) throw std::runtime_error("plan_expert: goal unreachable from start");

  std::vector<NavAction> actions;
  for (std::int64_t s = goal_state; parent[static_cast<std::size_t>(s)] != -1;
       s = parent[static_cast<std::size_t>(s)])
    actions.push_back(via[static_cast<std::size_t>(s)]);
  std::reverse(actions.begin(), actions.end());
  actions.push_back(NavAction::Stop);
  if (static_cast<int>(actions.size()) > episode.max_steps)
    throw std::runtime_error("plan_expert: expert path exceeds max_steps");
  return replay_trajectory(scene, episode, std::move(actions), cfg);
}

RolloutResult rollout(const Scene& scene, const Episode& episode, NavPolicy& policy,
                      const ObsConfig& cfg) {
  RolloutResult res;
  res.trajectory.episode = episode;
  policy.begin_episode(scene, episode);
  Pose pose = episode.start;
  std::optional<NavAction> prev;
  for (int t = 0; t < episode.max_steps; ++t) {
    Observation obs = observe(scene, pose, episode.start, prev, episode.goal_category, cfg);
    const NavAction a = policy.act(obs);
    res.trajectory.observations.push_back(std::move(obs));
    res.trajectory.actions.push_back(a);
    if (a == NavAction::Stop) {
      res.success = in_success_region(scene, pose.row, pose.col, episode.goal_category);
      break;
    }
    const Pose next = step(scene, pose, a);
    if (a == NavAction::MoveForward && next != pose) res.path_len += 1.0;
    pose = next;
    prev = a;
  }
  return res;
}

void ExpertPolicy::begin_episode(const Scene& scene, const Episode& episode) {
  plan_ = plan_expert(scene, episode, cfg_).actions;
  cursor_ = 0;
}

NavAction ExpertPolicy::act(const Observation&) {
  if (cursor_ >= plan_.size()) return NavAction::Stop;
  return plan_[cursor_++];
}

}  // namespace cnav
