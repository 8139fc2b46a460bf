#include "cnav/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace cnav {

using namespace policy_names;

void init_policy_params(ParamStore& store, const PolicyConfig& cfg, Rng& rng) {
  const std::size_t H = cfg.hidden_dim, d = cfg.feature_dim;
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    DenseArray a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : a.data()) x = rng.uniform(-bound, bound);
    return a;
  };
  store.add(kWx, uniform({3 * H, d}, d));
  store.add(kWh, uniform({3 * H, H}, H));
  store.add(kBx, DenseArray(Shape{3 * H}));
  store.add(kBh, DenseArray(Shape{3 * H}));
  store.add(kHeadW, uniform({kNumActions, H}, H));
  store.add(kHeadB, DenseArray(Shape{kNumActions}));
}

NavAction ActionDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumActions; ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<NavAction>(best);
}

ActionDistribution distribution_from_logits(const DenseArray& logits) {
  if (logits.size() != kNumActions)
    throw std::invalid_argument("distribution_from_logits: expected 6 logits");
  ActionDistribution d;
  for (std::size_t i = 0; i < kNumActions; ++i) d.logits[i] = logits[i];
  kernels::softmax(d.logits, d.probs);
  return d;
}

Var zero_state(Tape& tape, const PolicyConfig& cfg) {
  return tape.constant(DenseArray(Shape{cfg.hidden_dim}));
}

DecodeStep decode_step(Tape& tape, const ParamStore& store, const PolicyConfig& cfg, Var state,
                       Var feature) {
  const std::size_t H = cfg.hidden_dim;
  if (tape.value(feature).size() != cfg.feature_dim)
    throw std::invalid_argument("decode_step: feature dimension " +
                                std::to_string(tape.value(feature).size()) + ", expected " +
                                std::to_string(cfg.feature_dim));
  if (tape.value(state).size() != H)
    throw std::invalid_argument("decode_step: state dimension mismatch");

  Var gx = tape.add(tape.matmul(tape.param(store, kWx), feature), tape.param(store, kBx));
  Var gh = tape.add(tape.matmul(tape.param(store, kWh), state), tape.param(store, kBh));
  Var reset = tape.sigmoid(tape.add(tape.slice(gx, 0, H), tape.slice(gh, 0, H)));
  Var update = tape.sigmoid(tape.add(tape.slice(gx, H, H), tape.slice(gh, H, H)));
  Var candidate =
      tape.tanh(tape.add(tape.slice(gx, 2 * H, H), tape.mul(reset, tape.slice(gh, 2 * H, H))));
  // h' = (1 - z) * n + z * h
  Var next = tape.add(candidate, tape.mul(update, tape.sub(state, candidate)));
  Var logits = tape.add(tape.matmul(tape.param(store, kHeadW), next), tape.param(store, kHeadB));
  return {logits, next};
}

std::vector<Var> decode_sequence(Tape& tape, const ParamStore& store, const PolicyConfig& cfg,
                                 const std::vector<Var>& features) {
  if (features.empty()) throw std::invalid_argument("decode_sequence: empty sequence");
  std::vector<Var> logits;
  logits.reserve(features.size());
  Var state = zero_state(tape, cfg);
  for (Var f : features) {
    auto step_out = decode_step(tape, store, cfg, state, f);
    logits.push_back(step_out.logits);
    state = step_out.state;
  }
  return logits;
}

std::vector<ActionDistribution> decode_sequence(const ParamStore& store, const PolicyConfig& cfg,
                                                const std::vector<DenseArray>& features) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& f : features) vars.push_back(tape.constant(f));
  std::vector<ActionDistribution> out;
  for (Var l : decode_sequence(tape, store, cfg, vars))
    out.push_back(distribution_from_logits(tape.value(l)));
  return out;
}

GreedyPolicy::GreedyPolicy(const Encoder& encoder, const ParamStore& params, PolicyConfig cfg)
    : encoder_(encoder), params_(params), cfg_(cfg), state_(Shape{cfg.hidden_dim}) {}

void GreedyPolicy::begin_episode(const Scene&, const Episode&) {
  state_ = DenseArray(Shape{cfg_.hidden_dim});
}

NavAction GreedyPolicy::act(const Observation& obs) {
  Tape tape;
  Var feature = encoder_.encode(tape, params_, encoder_.backbone(obs));
  auto out = decode_step(tape, params_, cfg_, tape.constant(state_), feature);
  state_ = tape.value(out.state);
  last_ = distribution_from_logits(tape.value(out.logits));
  return last_.argmax();
}

}  // namespace cnav
