#pragma once

// Continual imitation learning: behaviour-cloning, feature-distillation and
// feature-replay losses, the replay buffers, and per-stage orchestration of
// the six strategies.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnav/encoder.hpp"
#include "cnav/env.hpp"
#include "cnav/params.hpp"
#include "cnav/policy.hpp"
#include "cnav/selection.hpp"
#include "cnav/tensor.hpp"

namespace cnav {

enum class StrategyId : std::uint8_t { Finetune, LwF, Merge, DataReplay, CNavUniform, CNav };
inline constexpr std::array<StrategyId, 6> kAllStrategies{
    StrategyId::Finetune,   StrategyId::LwF,         StrategyId::Merge,
    StrategyId::DataReplay, StrategyId::CNavUniform, StrategyId::CNav};

std::string_view strategy_name(StrategyId s);
// Throws ValidationError for unknown names.
StrategyId strategy_from_name(std::string_view name);

// Frame subsampling used when writing the feature buffer.
enum class SamplingMethod : std::uint8_t { Lof, Uniform, Cluster, Full };
std::string_view sampling_name(SamplingMethod m);
SamplingMethod sampling_from_name(std::string_view name);

struct LossWeights {
  double gamma = 3.48;
  double lambda_kd = 5.0;
  double lambda_fr = 5.0;
  int kd_exponent = 2;  // 2: squared l2, 1: l2
};

// A demonstration with its frozen backbone outputs cached per frame.
struct EncodedTrajectory {
  std::string id;
  int stage = 0;
  int category = 0;
  std::vector<BackboneFrame> frames;
  std::vector<NavAction> actions;

  std::size_t size() const { return actions.size(); }
  EmbeddingSequence visual_embeddings() const;
};

EncodedTrajectory encode_demonstration(const Encoder& encoder, const Trajectory& traj,
                                       std::string id, int stage);

// w_1 = 1; w_t = 1 + gamma where the action differs from its predecessor.
std::vector<double> inflection_weights(const std::vector<NavAction>& actions, double gamma);

struct FeatureBufferEntry {
  int source_task = 0;
  std::string trajectory_id;
  std::size_t source_length = 0;
  std::vector<std::size_t> frame_indices;
  std::vector<DenseArray> features;
  std::vector<NavAction> actions;
  std::vector<double> weights;

  std::size_t size() const { return actions.size(); }
  friend bool operator==(const FeatureBufferEntry&, const FeatureBufferEntry&) = default;
};

struct FeatureBuffer {
  std::vector<FeatureBufferEntry> entries;

  std::size_t frame_count() const;
  std::size_t feature_bytes() const;
  // Frames the same trajectories would occupy at full retention.
  std::size_t full_frame_count() const;
  friend bool operator==(const FeatureBuffer&, const FeatureBuffer&) = default;
};

// Raw demonstrations retained by DataReplay (re-encoded every stage).
struct RawReplayBuffer {
  std::vector<EncodedTrajectory> trajectories;
  std::size_t frame_count() const;
};

// --- losses (taped) ------------------------------------------------------------

struct CurrentLoss {
  Var loss;
  std::vector<Var> features;
  std::vector<Var> logits;
};

// (1/L) sum_t -w_t log pi(a_t | f(o_1..o_t)).
CurrentLoss loss_current(Tape& tape, const ParamStore& params, const Encoder& encoder,
                         const PolicyConfig& pcfg, const EncodedTrajectory& traj, double gamma);

// sum_t || f_old(o_t) - f_new(o_t) ||^e; old features are constants.
Var loss_kd(Tape& tape, const std::vector<Var>& new_features,
            const std::vector<DenseArray>& old_features, int exponent);

// Weighted NLL of the stored actions given the stored (stale) features.
Var loss_fr(Tape& tape, const ParamStore& params, const PolicyConfig& pcfg,
            const FeatureBufferEntry& entry);

// Mean over steps of KL(softmax(old) || softmax(new)).
Var loss_lwf(Tape& tape, const std::vector<Var>& new_logits,
             const std::vector<DenseArray>& old_logits);

// L_curr + lambda_kd * L_kd + lambda_fr * L_fr; absent terms contribute 0.
Var loss_total(Tape& tape, Var current, std::optional<Var> kd, std::optional<Var> fr,
               const LossWeights& w);

// --- buffer construction -----------------------------------------------------

FeatureBufferEntry make_buffer_entry(const Encoder& encoder, const ParamStore& params,
                                     const EncodedTrajectory& traj,
                                     const std::vector<std::size_t>& indices, int source_task,
                                     double gamma);

std::vector<std::size_t> select_frames(const EncodedTrajectory& traj, SamplingMethod method,
                                       double retention, const LofConfig& lof,
                                       std::uint64_t seed);

// --- batching ----------------------------------------------------------------

struct BatchItem {
  bool replay = false;
  std::size_t index = 0;
  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};

// Mixed batches: floor(mix_ratio * B) replay slots (0 when the replay pool is
// empty) and current-task items in the rest. Current items are shuffled every
// epoch; replay items are drawn without replacement from a permutation that is
// reshuffled at each epoch start and whenever it runs out.
class BatchScheduler {
 public:
  BatchScheduler(std::size_t n_current, std::size_t n_replay, double mix_ratio,
                 std::size_t batch_size, std::uint64_t seed);

  std::size_t batches_per_epoch() const;
  std::size_t replay_slots() const { return replay_slots_; }
  std::vector<std::vector<BatchItem>> next_epoch();

 private:
  std::size_t n_current_, n_replay_, batch_size_, replay_slots_;
  Rng rng_;
  std::vector<std::size_t> replay_perm_;
  std::size_t replay_cursor_ = 0;
};

// --- stages ------------------------------------------------------------------

struct TrainerConfig {
  LossWeights weights;
  OptimConfig optim;  // total_steps is derived per stage
  LofConfig lof;
  SamplingMethod sampling = SamplingMethod::Lof;
  double retention_ratio = 0.5;
  double mix_ratio = 0.25;
  double lwf_coefficient = 0.2;
  double merge_alpha = 0.7;  // weight on the newly trained parameters
  std::size_t replay_per_category = 20;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

void validate(const TrainerConfig& cfg);

struct StagePlan {
  int stage = 1;  // 1-based
  std::vector<int> categories;
  const std::vector<EncodedTrajectory>* data = nullptr;
  StrategyId strategy = StrategyId::Finetune;
  std::size_t epochs = 0;  // 0: use TrainerConfig::epochs
};

struct LearnerState {
  ParamStore params;
  std::optional<ParamStore> prev_params;
  FeatureBuffer buffer;
  RawReplayBuffer raw_buffer;
};

struct TranscriptRow {
  int stage;
  std::size_t epoch;
  std::string component;
  double value;
};

struct StageContext {
  const Encoder& encoder;
  PolicyConfig policy;
  TrainerConfig trainer;
};

LearnerState initial_state(const StageContext& ctx);

// Gradient-descent phase of a stage.
std::vector<TranscriptRow> train_stage(const StagePlan& plan, LearnerState& state,
                                       const StageContext& ctx);
// Post-training phase: merge, buffer writes, previous-model snapshot.
void finish_stage(const StagePlan& plan, LearnerState& state, const StageContext& ctx);
// train_stage followed by finish_stage.
std::vector<TranscriptRow> run_stage(const StagePlan& plan, LearnerState& state,
                                     const StageContext& ctx);

// --- cnav-buf-v1 -------------------------------------------------------------

inline constexpr std::string_view kBufferVersion = "cnav-buf-v1";

// Writes `<base>.jsonl` (header line, then one line per entry) and `<base>.bin`.
void save_buffer(const std::filesystem::path& base, const FeatureBuffer& buffer,
                 const RawReplayBuffer& raw);
struct LoadedBuffer {
  FeatureBuffer features;
  std::vector<std::string> raw_trajectory_ids;
};
LoadedBuffer load_buffer(const std::filesystem::path& base);

void write_transcript_csv(const std::filesystem::path& path, const std::vector<TranscriptRow>& rows);

}  // namespace cnav
