#include "cnav/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "cnav/errors.hpp"

namespace cnav {

std::string_view strategy_name(StrategyId s) {
  switch (s) {
    case StrategyId::Finetune: return "finetune";
    case StrategyId::LwF: return "lwf";
    case StrategyId::Merge: return "merge";
    case StrategyId::DataReplay: return "data_replay";
    case StrategyId::CNavUniform: return "cnav_uniform";
    case StrategyId::CNav: return "cnav";
  }
  return "?";
}

StrategyId strategy_from_name(std::string_view name) {
  for (StrategyId s : kAllStrategies)
    if (strategy_name(s) == name) return s;
  throw ValidationError("unknown strategy '" + std::string(name) + "'");
}

std::string_view sampling_name(SamplingMethod m) {
  switch (m) {
    case SamplingMethod::Lof: return "lof";
    case SamplingMethod::Uniform: return "uniform";
    case SamplingMethod::Cluster: return "cluster";
    case SamplingMethod::Full: return "full";
  }
  return "?";
}

SamplingMethod sampling_from_name(std::string_view name) {
  for (SamplingMethod m : {SamplingMethod::Lof, SamplingMethod::Uniform, SamplingMethod::Cluster,
                           SamplingMethod::Full})
    if (sampling_name(m) == name) return m;
  throw ValidationError("unknown sampling method '" + std::string(name) + "'");
}

EmbeddingSequence EncodedTrajectory::visual_embeddings() const {
  EmbeddingSequence out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f[static_cast<std::size_t>(Modality::Visual)]);
  return out;
}

EncodedTrajectory encode_demonstration(const Encoder& encoder, const Trajectory& traj,
                                       std::string id, int stage) {
  EncodedTrajectory e;
  e.id = std::move(id);
  e.stage = stage;
  e.category = traj.episode.goal_category;
  e.actions = traj.actions;
  e.frames.reserve(traj.observations.size());
  for (const auto& obs : traj.observations) e.frames.push_back(encoder.backbone(obs));
  return e;
}

std::vector<double> inflection_weights(const std::vector<NavAction>& actions, double gamma) {
  std::vector<double> w(actions.size(), 1.0);
  for (std::size_t t = 1; t < actions.size(); ++t)
    if (actions[t] != actions[t - 1]) w[t] = 1.0 + gamma;
  return w;
}

std::size_t FeatureBuffer::frame_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.size();
  return n;
}

std::size_t FeatureBuffer::feature_bytes() const {
  std::size_t n = 0;
  for (const auto& e : entries)
    for (const auto& f : e.features) n += f.size() * sizeof(double);
  return n;
}

std::size_t FeatureBuffer::full_frame_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.source_length;
  return n;
}

std::size_t RawReplayBuffer::frame_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.size();
  return n;
}

// --- losses ------------------------------------------------------------------

namespace {

Var weighted_nll(Tape& tape, const std::vector<Var>& logits, const std::vector<NavAction>& actions,
                 const std::vector<double>& weights) {
  std::vector<Var> terms;
  terms.reserve(logits.size());
  const double inv_len = 1.0 / static_cast<double>(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    Var nll = tape.softmax_cross_entropy(logits[t], static_cast<std::size_t>(actions[t]));
    terms.push_back(tape.scale(nll, weights[t] * inv_len));
  }
  return tape.sum(terms);
}

}  // namespace

CurrentLoss loss_current(Tape& tape, const ParamStore& params, const Encoder& encoder,
                         const PolicyConfig& pcfg, const EncodedTrajectory& traj, double gamma) {
  if (traj.size() == 0) throw std::invalid_argument("loss_current: empty trajectory");
  CurrentLoss out;
  out.features = encoder.encode_trajectory(tape, params, traj.frames);
  out.logits = decode_sequence(tape, params, pcfg, out.features);
  out.loss = weighted_nll(tape, out.logits, traj.actions, inflection_weights(traj.actions, gamma));
  return out;
}

Var loss_kd(Tape& tape, const std::vector<Var>& new_features,
            const std::vector<DenseArray>& old_features, int exponent) {
  if (exponent != 1 && exponent != 2) throw std::invalid_argument("loss_kd: exponent must be 1 or 2");
  if (new_features.size() != old_features.size() || new_features.empty())
    throw std::invalid_argument("loss_kd: feature sequences differ in length");
  std::vector<Var> terms;
  terms.reserve(new_features.size());
  for (std::size_t t = 0; t < new_features.size(); ++t) {
    Var sq = tape.squared_difference_sum(tape.constant(old_features[t]), new_features[t]);
    terms.push_back(exponent == 2 ? sq : tape.power(sq, 0.5));
  }
  return tape.sum(terms);
}

Var loss_fr(Tape& tape, const ParamStore& params, const PolicyConfig& pcfg,
            const FeatureBufferEntry& entry) {
  if (entry.size() == 0) throw std::invalid_argument("loss_fr: empty buffer entry");
  std::vector<Var> feats;
  feats.reserve(entry.size());
  for (const auto& f : entry.features) {
    if (f.size() != pcfg.feature_dim)
      throw std::invalid_argument("loss_fr: stored feature dimension " + std::to_string(f.size()) +
                                  " does not match decoder input " +
                                  std::to_string(pcfg.feature_dim));
    feats.push_back(tape.constant(f));
  }
  return weighted_nll(tape, decode_sequence(tape, params, pcfg, feats), entry.actions, entry.weights);
}

Var loss_lwf(Tape& tape, const std::vector<Var>& new_logits,
             const std::vector<DenseArray>& old_logits) {
  if (new_logits.size() != old_logits.size() || new_logits.empty())
    throw std::invalid_argument("loss_lwf: logit sequences differ in length");
  std::vector<Var> terms;
  const double inv_len = 1.0 / static_cast<double>(new_logits.size());
  for (std::size_t t = 0; t < new_logits.size(); ++t)
    terms.push_back(tape.scale(tape.kl_divergence(tape.constant(old_logits[t]), new_logits[t]), inv_len));
  return tape.sum(terms);
}

Var loss_total(Tape& tape, Var current, std::optional<Var> kd, std::optional<Var> fr,
               const LossWeights& w) {
  std::vector<Var> terms{current};
  if (kd) terms.push_back(tape.scale(*kd, w.lambda_kd));
  if (fr) terms.push_back(tape.scale(*fr, w.lambda_fr));
  return tape.sum(terms);
}

// --- buffer construction -------------------------------------------------------

FeatureBufferEntry make_buffer_entry(const Encoder& encoder, const ParamStore& params,
                                     const EncodedTrajectory& traj,
                                     const std::vector<std::size_t>& indices, int source_task,
                                     double gamma) {
  if (indices.empty()) throw std::invalid_argument("make_buffer_entry: no frames selected");
  FeatureBufferEntry e;
  e.source_task = source_task;
  e.trajectory_id = traj.id;
  e.source_length = traj.size();
  e.frame_indices = indices;
  for (std::size_t i : indices) {
    if (i >= traj.size()) throw std::out_of_range("make_buffer_entry: frame index");
    e.features.push_back(encoder.encode(params, traj.frames[i]));
    e.actions.push_back(traj.actions[i]);
  }
  e.weights = inflection_weights(e.actions, gamma);
  return e;
}

std::vector<std::size_t> select_frames(const EncodedTrajectory& traj, SamplingMethod method,
                                       double retention, const LofConfig& lof,
                                       std::uint64_t seed) {
  switch (method) {
    case SamplingMethod::Lof: {
      LofConfig cfg = lof;
      cfg.max_keep_ratio = retention;
      return select_keyframes(traj.visual_embeddings(), cfg).indices;
    }
    case SamplingMethod::Uniform: return uniform_sample(traj.size(), retention);
    case SamplingMethod::Cluster: return cluster_sample(traj.visual_embeddings(), retention, seed);
    case SamplingMethod::Full: {
      std::vector<std::size_t> all(traj.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return all;
    }
  }
  return {};
}

// --- batching ----------------------------------------------------------------

BatchScheduler::BatchScheduler(std::size_t n_current, std::size_t n_replay, double mix_ratio,
                               std::size_t batch_size, std::uint64_t seed)
    : n_current_(n_current), n_replay_(n_replay), batch_size_(batch_size), rng_(seed) {
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0))
    throw std::invalid_argument("BatchScheduler: mix_ratio outside [0, 1]");
  if (batch_size == 0) throw std::invalid_argument("BatchScheduler: batch_size must be positive");
  if (n_current == 0) throw std::invalid_argument("BatchScheduler: no current-task data");
  replay_slots_ = n_replay == 0
                      ? 0
                      : std::min(batch_size - 1, static_cast<std::size_t>(std::floor(
                                                     mix_ratio * static_cast<double>(batch_size))));
  replay_perm_.resize(n_replay);
  for (std::size_t i = 0; i < n_replay; ++i) replay_perm_[i] = i;
}

std::size_t BatchScheduler::batches_per_epoch() const {
  const std::size_t per = batch_size_ - replay_slots_;
  return (n_current_ + per - 1) / per;
}

std::vector<std::vector<BatchItem>> BatchScheduler::next_epoch() {
  std::vector<std::size_t> order(n_current_);
  for (std::size_t i = 0; i < n_current_; ++i) order[i] = i;
  rng_.shuffle(order);
  if (n_replay_ > 0) {
    rng_.shuffle(replay_perm_);
    replay_cursor_ = 0;
  }
  const std::size_t per = batch_size_ - replay_slots_;
  std::vector<std::vector<BatchItem>> batches;
  for (std::size_t start = 0; start < n_current_; start += per) {
    std::vector<BatchItem> batch;
    for (std::size_t i = start; i < std::min(n_current_, start + per); ++i)
      batch.push_back({false, order[i]});
    for (std::size_t s = 0; s < replay_slots_; ++s) {
      if (replay_cursor_ == n_replay_) {
        rng_.shuffle(replay_perm_);
        replay_cursor_ = 0;
      }
      batch.push_back({true, replay_perm_[replay_cursor_++]});
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// --- stages ------------------------------------------------------------------

void validate(const TrainerConfig& cfg) {
  if (cfg.weights.gamma < 0 || cfg.weights.lambda_kd < 0 || cfg.weights.lambda_fr < 0)
    throw ValidationError("trainer: loss weights must be non-negative");
  if (cfg.weights.kd_exponent != 1 && cfg.weights.kd_exponent != 2)
    throw ValidationError("trainer: kd_exponent must be 1 or 2");
  if (!(cfg.retention_ratio > 0.0 && cfg.retention_ratio <= 1.0))
    throw ValidationError("trainer: retention_ratio must lie in (0, 1]");
  if (!(cfg.mix_ratio >= 0.0 && cfg.mix_ratio <= 1.0))
    throw ValidationError("trainer: mix_ratio must lie in [0, 1]");
  if (!(cfg.merge_alpha >= 0.0 && cfg.merge_alpha <= 1.0))
    throw ValidationError("trainer: merge_alpha must lie in [0, 1]");
  if (cfg.batch_size == 0 || cfg.epochs == 0)
    throw ValidationError("trainer: batch_size and epochs must be positive");
  validate(cfg.lof);
  OptimConfig o = cfg.optim;
  o.total_steps = std::max(o.total_steps, o.warmup_steps);
  validate(o);
}

LearnerState initial_state(const StageContext& ctx) {
  LearnerState s;
  Rng rng(ctx.trainer.seed, "init");
  ctx.encoder.init_params(s.params, rng);
  init_policy_params(s.params, ctx.policy, rng);
  return s;
}

namespace {

bool is_cnav(StrategyId s) { return s == StrategyId::CNav || s == StrategyId::CNavUniform; }

struct EpochStats {
  double curr = 0, kd = 0, fr = 0, lwf = 0, total = 0;
};

}  // namespace

std::vector<TranscriptRow> train_stage(const StagePlan& plan, LearnerState& state,
                                       const StageContext& ctx) {
  const TrainerConfig& cfg = ctx.trainer;
  if (plan.data == nullptr || plan.data->empty())
    throw ValidationError("stage " + std::to_string(plan.stage) + ": empty training set");
  if (plan.stage > 1 && !state.prev_params)
    throw std::logic_error("stage " + std::to_string(plan.stage) + ": missing previous parameters");
  const auto& data = *plan.data;
  const bool has_prev = state.prev_params.has_value();
  const bool use_kd = has_prev && is_cnav(plan.strategy) && cfg.weights.lambda_kd > 0.0;
  const bool use_lwf = has_prev && plan.strategy == StrategyId::LwF;
  const bool feature_replay = is_cnav(plan.strategy) && !state.buffer.entries.empty();
  const bool raw_replay =
      plan.strategy == StrategyId::DataReplay && !state.raw_buffer.trajectories.empty();
  const std::size_t n_replay = feature_replay ? state.buffer.entries.size()
                               : raw_replay   ? state.raw_buffer.trajectories.size()
                                              : 0;

  // The previous model is frozen for the whole stage, so its outputs on the
  // current data are computed once.
  std::vector<std::vector<DenseArray>> old_features, old_logits;
  if (use_kd || use_lwf) {
    for (const auto& traj : data) {
      auto feats = ctx.encoder.encode_trajectory(*state.prev_params, traj.frames);
      if (use_lwf) {
        std::vector<DenseArray> logits;
        for (const auto& d : decode_sequence(*state.prev_params, ctx.policy, feats))
          logits.push_back(DenseArray::vector({d.logits.begin(), d.logits.end()}));
        old_logits.push_back(std::move(logits));
      }
      old_features.push_back(std::move(feats));
    }
  }

  state.params.reset_moments();
  const std::size_t epochs = plan.epochs ? plan.epochs : cfg.epochs;
  BatchScheduler scheduler(data.size(), n_replay, cfg.mix_ratio, cfg.batch_size,
                           substream_seed(cfg.seed, "batching", static_cast<std::uint64_t>(plan.stage)));
  OptimConfig optim = cfg.optim;
  optim.total_steps = epochs * scheduler.batches_per_epoch();
  optim.warmup_steps = std::min(optim.warmup_steps, optim.total_steps);

  std::vector<TranscriptRow> transcript;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    EpochStats stats;
    const auto batches = scheduler.next_epoch();
    for (const auto& batch : batches) {
      std::size_t n_cur = 0, n_rep = 0;
      for (const auto& item : batch) (item.replay ? n_rep : n_cur) += 1;
      // DataReplay averages behaviour cloning over every item in the batch;
      // the feature-replay family weights the two halves separately.
      const double cur_coef = 1.0 / static_cast<double>(raw_replay ? n_cur + n_rep : n_cur);
      const double rep_coef = raw_replay ? cur_coef
                              : n_rep    ? cfg.weights.lambda_fr / static_cast<double>(n_rep)
                                         : 0.0;

      Gradients grads;
      EpochStats batch_stats;
      for (const auto& item : batch) {
        Tape tape;
        if (!item.replay || raw_replay) {
          const auto& traj = item.replay ? state.raw_buffer.trajectories[item.index] : data[item.index];
          CurrentLoss cl = loss_current(tape, state.params, ctx.encoder, ctx.policy, traj,
                                        cfg.weights.gamma);
          std::vector<Var> terms{cl.loss};
          const double curr = tape.scalar(cl.loss);
          double item_total = curr;
          batch_stats.curr += curr * cur_coef;
          if (use_kd && !item.replay) {
            Var kd = loss_kd(tape, cl.features, old_features[item.index], cfg.weights.kd_exponent);
            terms.push_back(tape.scale(kd, cfg.weights.lambda_kd));
            batch_stats.kd += tape.scalar(kd) * cur_coef;
            item_total += cfg.weights.lambda_kd * tape.scalar(kd);
          }
          if (use_lwf && !item.replay) {
            Var lwf = loss_lwf(tape, cl.logits, old_logits[item.index]);
            terms.push_back(tape.scale(lwf, cfg.lwf_coefficient));
            batch_stats.lwf += tape.scalar(lwf) * cur_coef;
            item_total += cfg.lwf_coefficient * tape.scalar(lwf);
          }
          batch_stats.total += item_total * cur_coef;
          accumulate(grads, tape.backward(tape.sum(terms), cur_coef));
        } else {
          Var fr = loss_fr(tape, state.params, ctx.policy, state.buffer.entries[item.index]);
          const double v = tape.scalar(fr);
          batch_stats.fr += v / static_cast<double>(n_rep);
          batch_stats.total += v * rep_coef;
          accumulate(grads, tape.backward(fr, rep_coef));
        }
      }
      for (const auto& [name, entry] : state.params)
        if (!grads.contains(name)) grads.emplace(name, DenseArray::zeros_like(entry.value));
      adamw_step(state.params, grads, optim, ++step);

      stats.curr += batch_stats.curr;
      stats.kd += batch_stats.kd;
      stats.fr += batch_stats.fr;
      stats.lwf += batch_stats.lwf;
      stats.total += batch_stats.total;
    }
    const double nb = static_cast<double>(batches.size());
    for (auto [name, v] : {std::pair{"curr", stats.curr}, std::pair{"kd", stats.kd},
                           std::pair{"fr", stats.fr}, std::pair{"lwf", stats.lwf},
                           std::pair{"total", stats.total}})
      transcript.push_back({plan.stage, epoch, name, v / nb});
  }
  return transcript;
}

void finish_stage(const StagePlan& plan, LearnerState& state, const StageContext& ctx) {
  const TrainerConfig& cfg = ctx.trainer;
  if (plan.strategy == StrategyId::Merge && state.prev_params)
    state.params = interpolate_params(state.params, *state.prev_params, cfg.merge_alpha);

  const bool store_features = is_cnav(plan.strategy);
  const bool store_raw = plan.strategy == StrategyId::DataReplay;
  if ((store_features || store_raw) && plan.data != nullptr) {
    const SamplingMethod method =
        plan.strategy == StrategyId::CNavUniform ? SamplingMethod::Uniform : cfg.sampling;
    for (int category : plan.categories) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < plan.data->size(); ++i)
        if ((*plan.data)[i].category == category) pool.push_back(i);
      Rng rng(cfg.seed, "buffer-sample",
              static_cast<std::uint64_t>(plan.stage) * 1000 + static_cast<std::uint64_t>(category));
      rng.shuffle(pool);
      pool.resize(std::min(pool.size(), cfg.replay_per_category));
      for (std::size_t i : pool) {
        const auto& traj = (*plan.data)[i];
        if (store_raw) {
          state.raw_buffer.trajectories.push_back(traj);
          continue;
        }
        const auto indices =
            select_frames(traj, method, cfg.retention_ratio, cfg.lof,
                          substream_seed(cfg.seed, "kmeans", static_cast<std::uint64_t>(i)));
        state.buffer.entries.push_back(
            make_buffer_entry(ctx.encoder, state.params, traj, indices, plan.stage, cfg.weights.gamma));
      }
    }
  }
  state.prev_params = state.params;
}

std::vector<TranscriptRow> run_stage(const StagePlan& plan, LearnerState& state,
                                     const StageContext& ctx) {
  auto transcript = train_stage(plan, state, ctx);
  finish_stage(plan, state, ctx);
  return transcript;
}

// --- persistence ---------------------------------------------------------------

void save_buffer(const std::filesystem::path& base, const FeatureBuffer& buffer,
                 const RawReplayBuffer& raw) {
  std::vector<std::uint8_t> blob;
  std::ostringstream lines;
  std::vector<std::string> raw_ids;
  for (const auto& t : raw.trajectories) raw_ids.push_back(t.id);
  std::vector<nlohmann::json> records;
  for (const auto& e : buffer.entries) {
    const std::size_t offset = blob.size();
    std::size_t dim = e.features.empty() ? 0 : e.features.front().size();
    for (const auto& f : e.features) append_f64(blob, f.data());
    std::vector<int> codes;
    for (auto a : e.actions) codes.push_back(static_cast<int>(a));
    records.push_back({{"source_task", e.source_task},
                       {"trajectory_id", e.trajectory_id},
                       {"source_length", e.source_length},
                       {"frame_indices", e.frame_indices},
                       {"actions", codes},
                       {"weights", e.weights},
                       {"feature_dim", dim},
                       {"byte_offset", offset},
                       {"byte_len", blob.size() - offset}});
  }
  nlohmann::json header = {{"version", kBufferVersion},
                           {"entries", buffer.entries.size()},
                           {"frames", buffer.frame_count()},
                           {"full_frames", buffer.full_frame_count()},
                           {"feature_bytes", buffer.feature_bytes()},
                           {"raw_trajectories", raw_ids},
                           {"raw_frames", raw.frame_count()},
                           {"blob_bytes", blob.size()}};
  lines << header.dump() << '\n';
  for (const auto& r : records) lines << r.dump() << '\n';
  write_file(base.string() + ".jsonl", lines.str());
  write_file(base.string() + ".bin", blob);
}

LoadedBuffer load_buffer(const std::filesystem::path& base) {
  const std::string text = read_text(base.string() + ".jsonl");
  const auto blob = read_bytes(base.string() + ".bin");
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("buffer manifest is empty: " + base.string());
  LoadedBuffer out;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("version", "") != kBufferVersion)
      throw ValidationError("buffer version mismatch: expected " + std::string(kBufferVersion));
    if (header.at("blob_bytes").get<std::size_t>() != blob.size())
      throw IoError("buffer blob size does not match manifest");
    out.raw_trajectory_ids = header.at("raw_trajectories").get<std::vector<std::string>>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto r = nlohmann::json::parse(line);
      FeatureBufferEntry e;
      e.source_task = r.at("source_task").get<int>();
      e.trajectory_id = r.at("trajectory_id").get<std::string>();
      e.source_length = r.at("source_length").get<std::size_t>();
      e.frame_indices = r.at("frame_indices").get<std::vector<std::size_t>>();
      for (int code : r.at("actions").get<std::vector<int>>()) e.actions.push_back(action_from_code(code));
      e.weights = r.at("weights").get<std::vector<double>>();
      const auto dim = r.at("feature_dim").get<std::size_t>();
      const auto values = read_f64(blob, r.at("byte_offset").get<std::size_t>(),
                                   r.at("byte_len").get<std::size_t>());
      if (dim == 0 || values.size() != dim * e.actions.size())
        throw IoError("buffer entry feature block has wrong size");
      for (std::size_t t = 0; t < e.actions.size(); ++t)
        e.features.push_back(DenseArray::vector(
            std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(t * dim),
                                values.begin() + static_cast<std::ptrdiff_t>((t + 1) * dim))));
      out.features.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt buffer manifest " + base.string() + ": " + e.what());
  }
  return out;
}

void write_transcript_csv(const std::filesystem::path& path, const std::vector<TranscriptRow>& rows) {
  std::ostringstream out;
  out << "stage,epoch,component,value\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.stage << ',' << r.epoch << ',' << r.component << ',' << buf << '\n';
  }
  write_file(path, out.str());
}

}  // namespace cnav
