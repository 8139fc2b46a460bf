#pragma once

// Benchmark plumbing: run configuration, dataset generation and persistence,
// per-run training with checkpoints and resume, evaluation and reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cnav/encoder.hpp"
#include "cnav/env.hpp"
#include "cnav/eval.hpp"
#include "cnav/policy.hpp"
#include "cnav/trainer.hpp"
#include "json.hpp"

namespace cnav {

inline constexpr int kSchemaVersion = 1;

// A named training run: a strategy plus optional overrides used by the
// sampling ablation, the retention sweep and the lambda sweep.
struct RunVariant {
  std::string name;
  StrategyId strategy = StrategyId::Finetune;
  std::optional<SamplingMethod> sampling;
  std::optional<double> retention_ratio;
  std::optional<double> lambda;  // sets lambda_kd and lambda_fr together

  friend bool operator==(const RunVariant&, const RunVariant&) = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  SceneConfig scene{.instances_per_category = 2};
  ObsConfig obs;
  EpisodeConfig episode{2, 8, 100, 4};
  std::size_t train_scenes = 30;
  std::size_t eval_scenes = 8;
  std::vector<std::vector<int>> stages{{0, 1, 2}, {3}, {4}, {5}};
  std::vector<std::size_t> trajectories_per_category{1000, 500, 500, 500};
  std::size_t eval_episodes_per_category = 50;
  std::vector<RunVariant> runs;  // empty: one run per strategy
  TrainerConfig trainer = [] {
    TrainerConfig t;
    t.epochs = 15;
    t.optim.base_lr = 0.01;
    t.optim.weight_decay = 0.3;
    return t;
  }();
  EncoderConfig encoder;
  PolicyConfig policy;
  std::filesystem::path out_dir = "cnav-out";

  std::vector<RunVariant> effective_runs() const;
  RunVariant run(const std::string& name) const;
};

// Throws ValidationError naming the offending field.
void validate(const RunConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Keeps the stages, per-stage counts and run list consistent after --stages.
RunConfig truncate_stages(RunConfig cfg, std::size_t stages);

struct DatasetTrajectory {
  std::string id;
  int stage = 1;
  std::size_t scene_index = 0;
  Trajectory trajectory;
};

struct Dataset {
  std::vector<Scene> train_scenes;
  std::vector<Scene> eval_scenes;
  std::vector<std::vector<DatasetTrajectory>> stages;
};

Dataset generate_dataset(const RunConfig& cfg);
// dataset/{scenes_train,scenes_eval}.jsonl and dataset/stage_<k>.jsonl.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir, const RunConfig& cfg);

// Everything the trainer and evaluator share for one configuration.
struct BenchData {
  RunConfig config;
  Dataset dataset;
  Encoder encoder;
  std::vector<std::vector<EncodedTrajectory>> encoded;
  std::vector<EvalSuite> suites;
};

BenchData prepare(const RunConfig& cfg, Dataset dataset);

TrainerConfig trainer_config(const RunConfig& cfg, const RunVariant& run);
StagePlan stage_plan(const BenchData& data, const RunVariant& run, int stage);
std::uint64_t backbone_seed(std::uint64_t master);

// Called after each completed stage with the post-stage learner state.
using StageHook = std::function<void(int stage, const LearnerState& state,
                                     const std::vector<TranscriptRow>& transcript)>;

PolicyConfig policy_config(const RunConfig& cfg);

// Runs stages first..last (1-based, inclusive) starting from `state`, or from
// freshly initialized parameters when `state` is empty.
LearnerState train_stages(const BenchData& data, const RunVariant& run, int first, int last,
                          std::optional<LearnerState> state = {}, const StageHook& hook = {});

StageReport evaluate_params(const BenchData& data, const ParamStore& params, int stage);
StageReport evaluate_expert(const BenchData& data, int stage);

// --- run directory -----------------------------------------------------------

std::filesystem::path run_dir(const RunConfig& cfg, const std::string& run);
std::filesystem::path checkpoint_base(const RunConfig& cfg, const std::string& run, int stage);
std::filesystem::path buffer_base(const RunConfig& cfg, const std::string& run, int stage);

// Restores the learner state saved after `stage`.
LearnerState load_stage_state(const BenchData& data, const std::string& run, int stage);

// Exclusive ownership of an output directory for one process.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Writes checkpoints, buffers and transcripts for every stage of `run`.
// `resume_after` restarts from the saved state of that stage.
void cmd_train(const BenchData& data, const std::string& run, std::optional<int> resume_after = {});
// Evaluates saved checkpoints; run "expert" evaluates the planner.
std::vector<StageReport> cmd_eval(const BenchData& data, const std::string& run);
// Collects stage reports of every run present and writes the report files.
nlohmann::json cmd_report(const RunConfig& cfg);

}  // namespace cnav
