#include "cnav/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "cnav/errors.hpp"
#include "cnav/rng.hpp"

namespace cnav {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -------------------------------------------------------------

std::vector<RunVariant> RunConfig::effective_runs() const {
  if (!runs.empty()) return runs;
  std::vector<RunVariant> out;
  for (StrategyId s : kAllStrategies) out.push_back({std::string(strategy_name(s)), s, {}, {}, {}});
  return out;
}

RunVariant RunConfig::run(const std::string& name) const {
  for (const auto& r : effective_runs())
    if (r.name == name) return r;
  throw ValidationError("unknown run '" + name + "'");
}

void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (cfg.scene.width < 8 || cfg.scene.height < 8) fail("scene width and height must be >= 8");
  if (cfg.scene.room_count < 1) fail("scene.room_count must be >= 1");
  if (cfg.scene.instances_per_category < 1) fail("scene.instances_per_category must be >= 1");
  if (cfg.obs.patch_size < 3 || cfg.obs.patch_size % 2 == 0) fail("observation.patch_size must be odd and >= 3");
  if (cfg.obs.depth_rays < 1 || cfg.obs.depth_range < 1) fail("observation depth settings must be positive");
  if (cfg.obs.num_categories < 1) fail("observation.num_categories must be positive");
  if (cfg.episode.min_geodesic < 0 || cfg.episode.min_geodesic > cfg.episode.max_geodesic)
    fail("episode geodesic range is empty");
  if (cfg.episode.max_steps < 1) fail("episode.max_steps must be positive");
  if (cfg.episode.view_radius < 0 || cfg.episode.view_radius > cfg.obs.patch_size / 2)
    fail("episode.view_radius must lie in [0, patch_size / 2]");
  if (cfg.train_scenes == 0 || cfg.eval_scenes == 0) fail("scene counts must be positive");
  if (cfg.eval_episodes_per_category == 0) fail("eval_episodes_per_category must be positive");
  if (cfg.stages.empty()) fail("at least one stage is required");
  std::map<int, int> seen;
  std::vector<int> overlap;
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    if (cfg.stages[k].empty()) fail("stage " + std::to_string(k + 1) + " has no categories");
    for (int c : cfg.stages[k]) {
      if (c < 0 || c >= cfg.obs.num_categories)
        fail("stage " + std::to_string(k + 1) + " category " + std::to_string(c) + " outside vocabulary");
      if (seen.contains(c) && std::find(overlap.begin(), overlap.end(), c) == overlap.end())
        overlap.push_back(c);
      seen[c] = static_cast<int>(k);
    }
  }
  if (!overlap.empty()) {
    std::string names;
    for (int c : overlap) names += (names.empty() ? "" : ", ") + std::to_string(c);
    fail("stage category sets overlap on categories " + names);
  }
  if (cfg.trajectories_per_category.size() != cfg.stages.size())
    fail("trajectories_per_category needs one count per stage");
  for (auto n : cfg.trajectories_per_category)
    if (n == 0) fail("trajectories_per_category entries must be positive");
  std::set<std::string> names;
  for (const auto& r : cfg.effective_runs()) {
    if (r.name.empty() || r.name == "expert") fail("invalid run name '" + r.name + "'");
    for (char ch : r.name)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
        fail("run name '" + r.name + "' may only use letters, digits, '_' and '-'");
    if (!names.insert(r.name).second) fail("duplicate run name '" + r.name + "'");
    validate(trainer_config(cfg, r));
  }
  if (cfg.policy.hidden_dim == 0) fail("policy.hidden_dim must be positive");
  for (std::size_t i = 0; i < kNumModalities; ++i)
    if (cfg.encoder.backbone_dims[i] == 0 || cfg.encoder.projector_dims[i] == 0)
      fail("encoder dims must be positive");
}

namespace {

// Reads known keys from a JSON object, rejecting anything else.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError("config: " + where_ + " must be an object");
  }
  template <typename T>
  void read(const std::string& key, T& out) {
    keys_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + where_ + key + " has the wrong type");
    }
  }
  bool has(const std::string& key) {
    keys_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) const { return j_.at(key); }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!keys_.contains(k)) throw ValidationError("config: unknown key '" + where_ + k + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> keys_;
};

json run_to_json(const RunVariant& r) {
  json j = {{"name", r.name}, {"strategy", strategy_name(r.strategy)}};
  if (r.sampling) j["sampling"] = sampling_name(*r.sampling);
  if (r.retention_ratio) j["retention_ratio"] = *r.retention_ratio;
  if (r.lambda) j["lambda"] = *r.lambda;
  return j;
}

RunVariant run_from_json(const json& j) {
  Section s(j, "runs[].");
  RunVariant r;
  std::string strategy;
  s.read("name", r.name);
  s.read("strategy", strategy);
  if (strategy.empty()) throw ValidationError("config: runs[] entry lacks a strategy");
  r.strategy = strategy_from_name(strategy);
  if (r.name.empty()) r.name = strategy;
  if (s.has("sampling")) {
    std::string m;
    s.read("sampling", m);
    r.sampling = sampling_from_name(m);
  }
  if (s.has("retention_ratio")) {
    double v = 0;
    s.read("retention_ratio", v);
    r.retention_ratio = v;
  }
  if (s.has("lambda")) {
    double v = 0;
    s.read("lambda", v);
    r.lambda = v;
  }
  s.finish();
  return r;
}

}  // namespace

json to_json(const RunConfig& cfg) {
  const auto& t = cfg.trainer;
  json runs = json::array();
  for (const auto& r : cfg.runs) runs.push_back(run_to_json(r));
  return {
      {"schema_version", kSchemaVersion},
      {"seed", cfg.seed},
      {"scene",
       {{"width", cfg.scene.width},
        {"height", cfg.scene.height},
        {"room_count", cfg.scene.room_count},
        {"instances_per_category", cfg.scene.instances_per_category}}},
      {"observation",
       {{"patch_size", cfg.obs.patch_size},
        {"depth_rays", cfg.obs.depth_rays},
        {"depth_range", cfg.obs.depth_range},
        {"num_categories", cfg.obs.num_categories}}},
      {"episode",
       {{"min_geodesic", cfg.episode.min_geodesic},
        {"max_geodesic", cfg.episode.max_geodesic},
        {"max_steps", cfg.episode.max_steps},
        {"view_radius", cfg.episode.view_radius}}},
      {"train_scenes", cfg.train_scenes},
      {"eval_scenes", cfg.eval_scenes},
      {"stages", cfg.stages},
      {"trajectories_per_category", cfg.trajectories_per_category},
      {"eval_episodes_per_category", cfg.eval_episodes_per_category},
      {"runs", runs},
      {"loss",
       {{"gamma", t.weights.gamma},
        {"lambda_kd", t.weights.lambda_kd},
        {"lambda_fr", t.weights.lambda_fr},
        {"kd_exponent", t.weights.kd_exponent}}},
      {"selection",
       {{"k_neighbors", t.lof.k_neighbors},
        {"threshold", t.lof.threshold},
        {"epsilon_norm", t.lof.epsilon_norm},
        {"min_keep", t.lof.min_keep},
        {"sampling", sampling_name(t.sampling)},
        {"retention_ratio", t.retention_ratio}}},
      {"optimizer",
       {{"base_lr", t.optim.base_lr},
        {"warmup_steps", t.optim.warmup_steps},
        {"weight_decay", t.optim.weight_decay},
        {"beta1", t.optim.beta1},
        {"beta2", t.optim.beta2},
        {"epsilon", t.optim.epsilon}}},
      {"training",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"mix_ratio", t.mix_ratio},
        {"replay_per_category", t.replay_per_category},
        {"lwf_coefficient", t.lwf_coefficient},
        {"merge_alpha", t.merge_alpha}}},
      {"encoder",
       {{"backbone_dims", cfg.encoder.backbone_dims}, {"projector_dims", cfg.encoder.projector_dims}}},
      {"policy", {{"hidden_dim", cfg.policy.hidden_dim}}},
      {"out_dir", cfg.out_dir.string()},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  Section top(j, "");
  int version = -1;
  top.read("schema_version", version);
  if (version != kSchemaVersion)
    throw ValidationError("config: schema_version must be " + std::to_string(kSchemaVersion));
  top.read("seed", cfg.seed);
  if (top.has("scene")) {
    Section s(top.at("scene"), "scene.");
    s.read("width", cfg.scene.width);
    s.read("height", cfg.scene.height);
    s.read("room_count", cfg.scene.room_count);
    s.read("instances_per_category", cfg.scene.instances_per_category);
    s.finish();
  }
  if (top.has("observation")) {
    Section s(top.at("observation"), "observation.");
    s.read("patch_size", cfg.obs.patch_size);
    s.read("depth_rays", cfg.obs.depth_rays);
    s.read("depth_range", cfg.obs.depth_range);
    s.read("num_categories", cfg.obs.num_categories);
    s.finish();
  }
  if (top.has("episode")) {
    Section s(top.at("episode"), "episode.");
    s.read("min_geodesic", cfg.episode.min_geodesic);
    s.read("max_geodesic", cfg.episode.max_geodesic);
    s.read("max_steps", cfg.episode.max_steps);
    s.read("view_radius", cfg.episode.view_radius);
    s.finish();
  }
  top.read("train_scenes", cfg.train_scenes);
  top.read("eval_scenes", cfg.eval_scenes);
  top.read("stages", cfg.stages);
  top.read("trajectories_per_category", cfg.trajectories_per_category);
  top.read("eval_episodes_per_category", cfg.eval_episodes_per_category);
  if (top.has("runs")) {
    if (!top.at("runs").is_array()) throw ValidationError("config: runs must be an array");
    for (const auto& r : top.at("runs")) cfg.runs.push_back(run_from_json(r));
  }
  auto& t = cfg.trainer;
  if (top.has("loss")) {
    Section s(top.at("loss"), "loss.");
    s.read("gamma", t.weights.gamma);
    s.read("lambda_kd", t.weights.lambda_kd);
    s.read("lambda_fr", t.weights.lambda_fr);
    s.read("kd_exponent", t.weights.kd_exponent);
    s.finish();
  }
  if (top.has("selection")) {
    Section s(top.at("selection"), "selection.");
    s.read("k_neighbors", t.lof.k_neighbors);
    s.read("threshold", t.lof.threshold);
    s.read("epsilon_norm", t.lof.epsilon_norm);
    s.read("min_keep", t.lof.min_keep);
    if (s.has("sampling")) {
      std::string m;
      s.read("sampling", m);
      t.sampling = sampling_from_name(m);
    }
    s.read("retention_ratio", t.retention_ratio);
    s.finish();
  }
  if (top.has("optimizer")) {
    Section s(top.at("optimizer"), "optimizer.");
    s.read("base_lr", t.optim.base_lr);
    s.read("warmup_steps", t.optim.warmup_steps);
    s.read("weight_decay", t.optim.weight_decay);
    s.read("beta1", t.optim.beta1);
    s.read("beta2", t.optim.beta2);
    s.read("epsilon", t.optim.epsilon);
    s.finish();
  }
  if (top.has("training")) {
    Section s(top.at("training"), "training.");
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("mix_ratio", t.mix_ratio);
    s.read("replay_per_category", t.replay_per_category);
    s.read("lwf_coefficient", t.lwf_coefficient);
    s.read("merge_alpha", t.merge_alpha);
    s.finish();
  }
  if (top.has("encoder")) {
    Section s(top.at("encoder"), "encoder.");
    s.read("backbone_dims", cfg.encoder.backbone_dims);
    s.read("projector_dims", cfg.encoder.projector_dims);
    s.finish();
  }
  if (top.has("policy")) {
    Section s(top.at("policy"), "policy.");
    s.read("hidden_dim", cfg.policy.hidden_dim);
    s.finish();
  }
  std::string out = cfg.out_dir.string();
  top.read("out_dir", out);
  cfg.out_dir = out;
  top.finish();
  cfg.trainer.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig truncate_stages(RunConfig cfg, std::size_t stages) {
  if (stages == 0 || stages > cfg.stages.size())
    throw ValidationError("--stages must lie in [1, " + std::to_string(cfg.stages.size()) + "]");
  cfg.stages.resize(stages);
  cfg.trajectories_per_category.resize(stages);
  return cfg;
}

// --- dataset -----------------------------------------------------------------

namespace {

SceneConfig scene_config(const RunConfig& cfg) {
  SceneConfig sc = cfg.scene;
  sc.categories_present.clear();
  for (int c = 0; c < cfg.obs.num_categories; ++c) sc.categories_present.push_back(c);
  return sc;
}

std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

std::vector<Scene> read_scenes(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("dataset file not found: " + path.string());
  std::istringstream in(read_text(path));
  std::vector<Scene> out;
  std::string line;
  try {
    while (std::getline(in, line))
      if (!line.empty()) out.push_back(Scene::from_json(json::parse(line)));
  } catch (const json::exception& e) {
    throw IoError("corrupt scene file " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const RunConfig& cfg) {
  validate(cfg);
  const SceneConfig sc = scene_config(cfg);
  Dataset d;
  std::set<std::uint64_t> train_seeds;
  for (std::size_t i = 0; i < cfg.train_scenes; ++i) {
    const auto seed = substream_seed(cfg.seed, "scene-gen", i);
    train_seeds.insert(seed);
    Scene s = generate_scene(seed, sc);
    s.id = "train-" + padded(i, 3);
    d.train_scenes.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < cfg.eval_scenes; ++i) {
    const auto seed = substream_seed(cfg.seed, "eval-scene-gen", i);
    if (train_seeds.contains(seed)) throw ValidationError("evaluation scene seed collides with training");
    Scene s = generate_scene(seed, sc);
    s.id = "eval-" + padded(i, 3);
    d.eval_scenes.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    std::vector<DatasetTrajectory> stage;
    for (int c : cfg.stages[k]) {
      Rng rng(cfg.seed, "episode-gen", (k + 1) * 1000 + static_cast<std::uint64_t>(c));
      for (std::size_t i = 0; i < cfg.trajectories_per_category[k]; ++i) {
        std::size_t si = 0;
        std::optional<Episode> ep;
        for (int attempt = 0; attempt < 100 && !ep; ++attempt) {
          si = rng.below(d.train_scenes.size());
          ep = try_sample_episode(d.train_scenes[si], c, cfg.episode, rng);
        }
        if (!ep)
          throw ValidationError("episode: no training scene admits a start for category " +
                                std::to_string(c));
        const Scene& scene = d.train_scenes[si];
        DatasetTrajectory t;
        t.id = "s" + std::to_string(k + 1) + "-c" + std::to_string(c) + "-" + padded(i, 4);
        t.stage = static_cast<int>(k + 1);
        t.scene_index = si;
        t.trajectory = plan_expert(scene, *ep, cfg.obs);
        stage.push_back(std::move(t));
      }
    }
    d.stages.push_back(std::move(stage));
  }
  return d;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  auto scenes = [](const std::vector<Scene>& v) {
    std::ostringstream out;
    for (const auto& s : v) out << s.to_json().dump() << '\n';
    return out.str();
  };
  write_file(dir / "scenes_train.jsonl", scenes(data.train_scenes));
  write_file(dir / "scenes_eval.jsonl", scenes(data.eval_scenes));
  for (std::size_t k = 0; k < data.stages.size(); ++k) {
    std::ostringstream out;
    for (const auto& t : data.stages[k])
      out << json{{"id", t.id}, {"stage", t.stage}, {"scene_index", t.scene_index},
                  {"trajectory", t.trajectory.to_json()}}
                 .dump()
          << '\n';
    write_file(dir / ("stage_" + std::to_string(k + 1) + ".jsonl"), out.str());
  }
}

Dataset read_dataset(const fs::path& dir, const RunConfig& cfg) {
  Dataset d;
  d.train_scenes = read_scenes(dir / "scenes_train.jsonl");
  d.eval_scenes = read_scenes(dir / "scenes_eval.jsonl");
  if (d.train_scenes.size() != cfg.train_scenes || d.eval_scenes.size() != cfg.eval_scenes)
    throw ValidationError("dataset scene counts do not match the configuration");
  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    const fs::path path = dir / ("stage_" + std::to_string(k + 1) + ".jsonl");
    if (!fs::exists(path)) throw MissingArtifactError("dataset file not found: " + path.string());
    std::istringstream in(read_text(path));
    std::vector<DatasetTrajectory> stage;
    std::string line;
    try {
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        DatasetTrajectory t;
        t.id = j.at("id").get<std::string>();
        t.stage = j.at("stage").get<int>();
        t.scene_index = j.at("scene_index").get<std::size_t>();
        if (t.scene_index >= d.train_scenes.size()) throw IoError("trajectory " + t.id + " names a missing scene");
        t.trajectory = trajectory_from_json(j.at("trajectory"), d.train_scenes[t.scene_index], cfg.obs);
        stage.push_back(std::move(t));
      }
    } catch (const json::exception& e) {
      throw IoError("corrupt trajectory file " + path.string() + ": " + e.what());
    }
    std::size_t expected = cfg.trajectories_per_category[k] * cfg.stages[k].size();
    if (stage.size() != expected)
      throw ValidationError("dataset stage " + std::to_string(k + 1) + " holds " +
                            std::to_string(stage.size()) + " trajectories, config expects " +
                            std::to_string(expected));
    d.stages.push_back(std::move(stage));
  }
  return d;
}

// --- training and evaluation ---------------------------------------------------

std::uint64_t backbone_seed(std::uint64_t master) { return substream_seed(master, "backbone"); }

PolicyConfig policy_config(const RunConfig& cfg) {
  PolicyConfig p = cfg.policy;
  EncoderConfig e = cfg.encoder;
  p.feature_dim = e.feature_dim();
  return p;
}

BenchData prepare(const RunConfig& cfg, Dataset dataset) {
  validate(cfg);
  EncoderConfig ec = cfg.encoder;
  ec.obs = cfg.obs;
  BenchData data{cfg, std::move(dataset), Encoder(ec, backbone_seed(cfg.seed)), {}, {}};
  for (auto& stage : data.dataset.stages) {
    std::vector<EncodedTrajectory> enc;
    enc.reserve(stage.size());
    for (auto& t : stage) {
      enc.push_back(encode_demonstration(data.encoder, t.trajectory, t.id, t.stage));
      // Observations are fully captured by the cached backbone outputs.
      t.trajectory.observations.clear();
      t.trajectory.observations.shrink_to_fit();
    }
    data.encoded.push_back(std::move(enc));
  }
  for (std::size_t k = 1; k <= cfg.stages.size(); ++k)
    data.suites.push_back(build_suite(data.dataset.eval_scenes, cfg.stages, static_cast<int>(k),
                                      cfg.eval_episodes_per_category, cfg.episode, cfg.seed));
  return data;
}

TrainerConfig trainer_config(const RunConfig& cfg, const RunVariant& run) {
  TrainerConfig t = cfg.trainer;
  t.seed = cfg.seed;
  if (run.sampling) t.sampling = *run.sampling;
  if (run.retention_ratio) t.retention_ratio = *run.retention_ratio;
  if (run.lambda) t.weights.lambda_kd = t.weights.lambda_fr = *run.lambda;
  return t;
}

StagePlan stage_plan(const BenchData& data, const RunVariant& run, int stage) {
  StagePlan p;
  p.stage = stage;
  p.categories = data.config.stages.at(static_cast<std::size_t>(stage - 1));
  p.data = &data.encoded.at(static_cast<std::size_t>(stage - 1));
  p.strategy = run.strategy;
  return p;
}

LearnerState train_stages(const BenchData& data, const RunVariant& run, int first, int last,
                          std::optional<LearnerState> state, const StageHook& hook) {
  const StageContext ctx{data.encoder, policy_config(data.config), trainer_config(data.config, run)};
  LearnerState s = state ? std::move(*state) : initial_state(ctx);
  for (int k = first; k <= last; ++k) {
    auto transcript = run_stage(stage_plan(data, run, k), s, ctx);
    if (hook) hook(k, s, transcript);
  }
  return s;
}

StageReport evaluate_params(const BenchData& data, const ParamStore& params, int stage) {
  GreedyPolicy policy(data.encoder, params, policy_config(data.config));
  return evaluate_stage(policy, data.suites.at(static_cast<std::size_t>(stage - 1)),
                        data.dataset.eval_scenes, data.config.obs);
}

StageReport evaluate_expert(const BenchData& data, int stage) {
  ExpertPolicy policy(data.config.obs);
  return evaluate_stage(policy, data.suites.at(static_cast<std::size_t>(stage - 1)),
                        data.dataset.eval_scenes, data.config.obs);
}

// --- run directory -----------------------------------------------------------

fs::path run_dir(const RunConfig& cfg, const std::string& run) { return cfg.out_dir / "runs" / run; }

fs::path checkpoint_base(const RunConfig& cfg, const std::string& run, int stage) {
  return run_dir(cfg, run) / ("stage_" + std::to_string(stage));
}

fs::path buffer_base(const RunConfig& cfg, const std::string& run, int stage) {
  return run_dir(cfg, run) / ("buffer_stage_" + std::to_string(stage));
}

namespace {

ParamStore load_stage_checkpoint(const RunConfig& cfg, const std::string& run, int stage) {
  const fs::path base = checkpoint_base(cfg, run, stage);
  if (!fs::exists(base.string() + ".json"))
    throw MissingArtifactError("missing checkpoint for run '" + run + "' stage " + std::to_string(stage) +
                               " (" + base.string() + ".json)");
  json meta;
  ParamStore p = load_checkpoint(base, &meta);
  if (meta.value("stage", -1) != stage || meta.value("run", "") != run)
    throw ValidationError("checkpoint " + base.string() + " belongs to a different run or stage");
  return p;
}

}  // namespace

LearnerState load_stage_state(const BenchData& data, const std::string& run, int stage) {
  LearnerState s;
  s.params = load_stage_checkpoint(data.config, run, stage);
  s.prev_params = s.params;
  const fs::path buf = buffer_base(data.config, run, stage);
  if (!fs::exists(buf.string() + ".jsonl"))
    throw MissingArtifactError("missing buffer snapshot for run '" + run + "' stage " + std::to_string(stage));
  LoadedBuffer loaded = load_buffer(buf);
  s.buffer = std::move(loaded.features);
  std::map<std::string, const EncodedTrajectory*> by_id;
  for (const auto& stage_data : data.encoded)
    for (const auto& t : stage_data) by_id[t.id] = &t;
  for (const auto& id : loaded.raw_trajectory_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("buffer references unknown trajectory " + id);
    s.raw_buffer.trajectories.push_back(*it->second);
  }
  return s;
}

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) throw IoError("run directory " + dir.string() + " is locked by another process");
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void cmd_train(const BenchData& data, const std::string& run_name, std::optional<int> resume_after) {
  const RunConfig& cfg = data.config;
  const RunVariant run = cfg.run(run_name);
  const int K = static_cast<int>(cfg.stages.size());
  int first = 1;
  std::optional<LearnerState> state;
  if (resume_after) {
    if (*resume_after < 1 || *resume_after >= K)
      throw ValidationError("resume stage must lie in [1, " + std::to_string(K - 1) + "]");
    state = load_stage_state(data, run.name, *resume_after);
    first = *resume_after + 1;
  }
  fs::create_directories(run_dir(cfg, run.name));
  train_stages(data, run, first, K, std::move(state),
               [&](int k, const LearnerState& s, const std::vector<TranscriptRow>& transcript) {
                 const json meta = {{"run", run.name},
                                    {"strategy", strategy_name(run.strategy)},
                                    {"stage", k},
                                    {"seed", cfg.seed}};
                 save_checkpoint(checkpoint_base(cfg, run.name, k), s.params, meta);
                 save_buffer(buffer_base(cfg, run.name, k), s.buffer, s.raw_buffer);
                 write_transcript_csv(run_dir(cfg, run.name) / ("transcript_stage_" + std::to_string(k) + ".csv"),
                                      transcript);
               });
}

std::vector<StageReport> cmd_eval(const BenchData& data, const std::string& run) {
  const RunConfig& cfg = data.config;
  if (run != "expert") cfg.run(run);
  std::vector<StageReport> reports;
  for (int k = 1; k <= static_cast<int>(cfg.stages.size()); ++k)
    reports.push_back(run == "expert" ? evaluate_expert(data, k)
                                      : evaluate_params(data, load_stage_checkpoint(cfg, run, k), k));
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_file(cfg.out_dir / "reports" / (run + ".json"), arr.dump(1) + "\n");
  return reports;
}

namespace {

struct BufferStats {
  std::size_t frames = 0, full = 0, bytes = 0;
};

std::optional<BufferStats> final_buffer_stats(const RunConfig& cfg, const std::string& run) {
  const fs::path path = buffer_base(cfg, run, static_cast<int>(cfg.stages.size())).string() + ".jsonl";
  if (!fs::exists(path)) return std::nullopt;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  const json h = json::parse(line);
  return BufferStats{h.at("frames").get<std::size_t>(), h.at("full_frames").get<std::size_t>(),
                     h.at("feature_bytes").get<std::size_t>()};
}

}  // namespace

json cmd_report(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& r : cfg.effective_runs()) names.push_back(r.name);
  names.push_back("expert");
  std::string report_csv = std::string(kReportCsvHeader) + "\n";
  std::string forgetting_csv = std::string(kForgettingCsvHeader) + "\n";
  json summaries = json::array();
  struct Row {
    RunVariant run;
    TrainerConfig trainer;
    BenchmarkSummary summary;
    double last_old_sr;
  };
  std::vector<Row> rows;
  for (const auto& name : names) {
    const fs::path path = cfg.out_dir / "reports" / (name + ".json");
    if (!fs::exists(path)) continue;
    std::vector<StageReport> reports;
    try {
      for (const auto& j : json::parse(read_text(path))) reports.push_back(stage_report_from_json(j));
    } catch (const json::exception& e) {
      throw IoError("corrupt report " + path.string() + ": " + e.what());
    }
    if (reports.empty()) continue;
    BenchmarkSummary s = summarize(name, reports);
    if (name != "expert") {
      const RunVariant run = cfg.run(name);
      const TrainerConfig t = trainer_config(cfg, run);
      s.retention_ratio = t.retention_ratio;
      if (auto b = final_buffer_stats(cfg, name)) {
        s.buffer_frames = b->frames;
        s.full_frames = b->full;
        s.buffer_bytes = b->bytes;
      }
      const auto& last = reports.back();
      rows.push_back({run, t, s, last.old_tasks ? last.old_tasks->sr : 0.0});
    }
    report_csv += report_csv_rows(name, reports);
    forgetting_csv += forgetting_csv_rows(name, reports);
    summaries.push_back(to_json(s));
  }
  if (summaries.empty()) throw MissingArtifactError("no evaluation reports under " + (cfg.out_dir / "reports").string());
  const fs::path dir = cfg.out_dir / "reports";
  write_file(dir / "report.csv", report_csv);
  write_file(dir / "forgetting.csv", forgetting_csv);
  json out = {{"schema_version", kSchemaVersion}, {"runs", summaries}};

  // Sampling ablation and retention sweep cover the feature-replay runs.
  std::set<SamplingMethod> methods;
  std::set<double> ratios;
  for (const auto& r : rows)
    if (r.run.strategy == StrategyId::CNav) {
      methods.insert(r.trainer.sampling);
      ratios.insert(r.trainer.retention_ratio);
    }
  for (const auto& r : rows)
    if (r.run.strategy == StrategyId::CNavUniform) methods.insert(SamplingMethod::Uniform);
  auto cnav_row = [](const Row& r, const std::string& method) {
    return r.run.name + ',' + method + ',' + format_double(r.trainer.retention_ratio) + ',' +
           format_double(r.summary.avg_sr) + ',' + format_double(r.summary.last_sr) + ',' +
           format_double(r.last_old_sr) + ',' + std::to_string(r.summary.buffer_frames) + ',' +
           std::to_string(r.summary.full_frames) + ',' + std::to_string(r.summary.buffer_bytes) + '\n';
  };
  const std::string ablation_header =
      "run,sampling,retention_ratio,avg_sr,last_sr,last_old_sr,buffer_frames,full_frames,buffer_bytes\n";
  if (methods.size() >= 2) {
    std::string csv = ablation_header;
    for (const auto& r : rows) {
      if (r.run.strategy == StrategyId::CNav) csv += cnav_row(r, std::string(sampling_name(r.trainer.sampling)));
      if (r.run.strategy == StrategyId::CNavUniform) csv += cnav_row(r, "uniform");
    }
    write_file(dir / "sampling_ablation.csv", csv);
    out["sampling_ablation"] = true;
  }
  if (ratios.size() >= 2) {
    std::string csv = ablation_header;
    for (const auto& r : rows)
      if (r.run.strategy == StrategyId::CNav)
        csv += cnav_row(r, std::string(sampling_name(r.trainer.sampling)));
    write_file(dir / "retention_sweep.csv", csv);
    out["retention_sweep"] = true;
  }
  write_file(dir / "summary.json", out.dump(1) + "\n");
  return out;
}

}  // namespace cnav
