#pragma once

// Recurrent action decoder: one gated recurrent cell over the feature
// sequence followed by a linear head over the six actions.

#include <array>
#include <vector>

#include "cnav/encoder.hpp"
#include "cnav/env.hpp"
#include "cnav/params.hpp"
#include "cnav/tensor.hpp"

namespace cnav {

struct PolicyConfig {
  std::size_t feature_dim = 128;
  std::size_t hidden_dim = 64;
};

namespace policy_names {
inline const std::string kWx = "policy.gru.w_x";  // (3H x d): reset, update, candidate
inline const std::string kWh = "policy.gru.w_h";  // (3H x H)
inline const std::string kBx = "policy.gru.b_x";
inline const std::string kBh = "policy.gru.b_h";
inline const std::string kHeadW = "policy.head.weight";
inline const std::string kHeadB = "policy.head.bias";
}  // namespace policy_names

void init_policy_params(ParamStore& store, const PolicyConfig& cfg, Rng& rng);

struct ActionDistribution {
  std::array<double, kNumActions> logits{};
  std::array<double, kNumActions> probs{};

  // Highest-probability action; ties go to the lowest action code.
  NavAction argmax() const;
};

ActionDistribution distribution_from_logits(const DenseArray& logits);

struct DecodeStep {
  Var logits;
  Var state;
};

// One recurrent update. `state` is the previous hidden vector (H).
DecodeStep decode_step(Tape& tape, const ParamStore& store, const PolicyConfig& cfg, Var state,
                       Var feature);

Var zero_state(Tape& tape, const PolicyConfig& cfg);

// Folds decode_step from a zero state; returns the logits per step.
std::vector<Var> decode_sequence(Tape& tape, const ParamStore& store, const PolicyConfig& cfg,
                                 const std::vector<Var>& features);

// Untaped convenience: distributions for a feature sequence.
std::vector<ActionDistribution> decode_sequence(const ParamStore& store, const PolicyConfig& cfg,
                                                const std::vector<DenseArray>& features);

// Greedy (argmax) agent. Hidden state persists within an episode and is reset
// by begin_episode.
class GreedyPolicy : public NavPolicy {
 public:
  GreedyPolicy(const Encoder& encoder, const ParamStore& params, PolicyConfig cfg);

  void begin_episode(const Scene& scene, const Episode& episode) override;
  NavAction act(const Observation& obs) override;
  const ActionDistribution& last_distribution() const { return last_; }

 private:
  const Encoder& encoder_;
  const ParamStore& params_;
  PolicyConfig cfg_;
  DenseArray state_;
  ActionDistribution last_;
};

}  // namespace cnav
