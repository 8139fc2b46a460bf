#pragma once

// Procedurally generated indoor gridworlds, egocentric observations, the
// expert demonstration planner and episode rollout.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cnav/rng.hpp"
#include "json.hpp"

namespace cnav {

enum class CellKind : std::uint8_t { Free = 0, Wall = 1, Object = 2 };

enum class Heading : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

// Fixed integer codes 0-5.
enum class NavAction : std::uint8_t {
  MoveForward = 0,
  TurnLeft = 1,
  TurnRight = 2,
  LookUp = 3,
  LookDown = 4,
  Stop = 5,
};
inline constexpr std::size_t kNumActions = 6;

const char* action_name(NavAction a);
NavAction action_from_code(int code);

struct Pose {
  int row = 0;
  int col = 0;
  Heading heading = Heading::N;
  int pitch = 0;  // -1 (down), 0, +1 (up)

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Room {
  int row0, col0, row1, col1;  // inclusive interior bounds
  friend bool operator==(const Room&, const Room&) = default;
};

struct ObjectInstance {
  int category;
  int instance;
  int row;
  int col;
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct SceneConfig {
  int width = 12;
  int height = 12;
  int room_count = 3;
  std::vector<int> categories_present;
  int instances_per_category = 1;
};

class Scene {
 public:
  Scene() = default;
  Scene(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < height_ && c < width_; }
  CellKind kind(int r, int c) const { return kinds_[idx(r, c)]; }
  // Category id of the object at (r, c), or -1.
  int category_at(int r, int c) const { return category_[idx(r, c)]; }
  bool is_free(int r, int c) const { return in_bounds(r, c) && kind(r, c) == CellKind::Free; }
  bool blocks(int r, int c) const { return !in_bounds(r, c) || kind(r, c) != CellKind::Free; }

  void set_wall(int r, int c);
  void set_free(int r, int c);
  void place_object(int r, int c, int category, int instance);
  void remove_object(int r, int c);

  const std::vector<ObjectInstance>& objects() const { return objects_; }
  const std::vector<Room>& rooms() const { return rooms_; }
  std::vector<Room>& rooms() { return rooms_; }
  bool has_category(int category) const;

  std::uint64_t seed = 0;
  std::string id;

  nlohmann::json to_json() const;
  static Scene from_json(const nlohmann::json& j);

  friend bool operator==(const Scene&, const Scene&) = default;

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r * width_ + c); }

  int width_ = 0;
  int height_ = 0;
  std::vector<CellKind> kinds_;
  std::vector<int> category_;
  std::vector<ObjectInstance> objects_;
  std::vector<Room> rooms_;
};

// Deterministic in (seed, config). Throws ValidationError when a category has
// no admissible wall-adjacent cell left.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config);

// All Free cells are 4-connected to each other.
bool free_space_connected(const Scene& scene);

// --- observations ----------------------------------------------------------

struct ObsConfig {
  int patch_size = 9;     // V, odd
  int depth_rays = 5;     // R
  int depth_range = 5;    // cells mapped to normalized depth 1.0
  int num_categories = 6;
};

// Patch cell codes.
inline constexpr std::uint8_t kCodeUnknown = 0;
inline constexpr std::uint8_t kCodeFree = 1;
inline constexpr std::uint8_t kCodeWall = 2;
inline constexpr std::uint8_t kCodeObjectBase = 3;  // + category id

struct Observation {
  std::vector<std::uint8_t> semantic_patch;  // V*V, row-major, agent faces up
  std::vector<double> depth_rays;            // R values in [0, 1]
  std::array<double, 7> pose_delta{};        // drow, dcol, heading one-hot(4), pitch
  std::optional<NavAction> prev_action;
  int goal_category = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

// World offset of egocentric (forward, right) displacement under `h`.
std::pair<int, int> egocentric_to_world(Heading h, int forward, int right);

// Cells strictly between the agent and a target at relative offset (dr, dc)
// whose open unit square the connecting segment crosses. Scene independent.
const std::vector<std::pair<int, int>>& sight_line(int dr, int dc);

bool line_of_sight(const Scene& scene, int r0, int c0, int r1, int c1);

// Visibility mask selected by pitch: -1 near (Chebyshev <= 2), 0 whole patch,
// +1 far (Chebyshev >= 2). `fwd`/`right` are egocentric patch offsets.
bool pitch_visible(int pitch, int fwd, int right);

Observation observe(const Scene& scene, const Pose& pose, const Pose& start,
                    std::optional<NavAction> prev_action, int goal_category,
                    const ObsConfig& cfg);

Pose step(const Scene& scene, const Pose& pose, NavAction action);

// --- episodes ----------------------------------------------------------------

struct Episode {
  std::string scene_id;
  Pose start;
  int goal_category = 0;
  double p_star = 0.0;  // geodesic cells to the success region
  int max_steps = 100;

  nlohmann::json to_json() const;
  static Episode from_json(const nlohmann::json& j);
  friend bool operator==(const Episode&, const Episode&) = default;
};

// Success region: Free cells within Chebyshev distance 1 of a goal instance.
bool in_success_region(const Scene& scene, int row, int col, int category);

// Multi-source BFS distances (4-connected, Free cells) from the success
// region of `category`; -1 where unreachable.
std::vector<int> geodesic_field(const Scene& scene, int category);

struct EpisodeConfig {
  int min_geodesic = 1;
  int max_geodesic = 12;
  int max_steps = 100;
  int view_radius = 0;  // > 0: a goal instance must be in sight within this radius at the start

  friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

// Samples a start pose (pitch 0) whose geodesic distance to `goal` lies in
// [min_geodesic, max_geodesic] and, when view_radius > 0, which has line of
// sight to a goal instance within that Chebyshev radius. Throws
// ValidationError if no cell qualifies.
Episode sample_episode(const Scene& scene, int goal, const EpisodeConfig& cfg, Rng& rng);
// As sample_episode, but returns nullopt instead of throwing; consumes no
// randomness when no start qualifies.
std::optional<Episode> try_sample_episode(const Scene& scene, int goal, const EpisodeConfig& cfg,
                                          Rng& rng);

struct Trajectory {
  Episode episode;
  std::vector<NavAction> actions;
  std::vector<Observation> observations;  // regenerated from actions, never stored

  std::size_t size() const { return actions.size(); }
  // Serialized form: episode header plus action codes.
  nlohmann::json to_json() const;
};

// Replays `actions` from the episode start, regenerating observations.
Trajectory replay_trajectory(const Scene& scene, const Episode& episode,
                             std::vector<NavAction> actions, const ObsConfig& cfg);
Trajectory trajectory_from_json(const nlohmann::json& j, const Scene& scene,
                                const ObsConfig& cfg);

// Shortest path over cells with the fewest turns among shortest paths,
// followed by Stop. Throws std::runtime_error when the goal is unreachable.
Trajectory plan_expert(const Scene& scene, const Episode& episode, const ObsConfig& cfg);

class NavPolicy {
 public:
  virtual ~NavPolicy() = default;
  virtual void begin_episode(const Scene& scene, const Episode& episode) = 0;
  virtual NavAction act(const Observation& obs) = 0;
};

struct RolloutResult {
  Trajectory trajectory;
  bool success = false;
  double path_len = 0.0;
};

RolloutResult rollout(const Scene& scene, const Episode& episode, NavPolicy& policy,
                      const ObsConfig& cfg);

// Replays the expert plan computed at episode start.
class ExpertPolicy : public NavPolicy {
 public:
  explicit ExpertPolicy(ObsConfig cfg) : cfg_(cfg) {}
  void begin_episode(const Scene& scene, const Episode& episode) override;
  NavAction act(const Observation& obs) override;

 private:
  ObsConfig cfg_;
  std::vector<NavAction> plan_;
  std::size_t cursor_ = 0;
};

}  // namespace cnav
