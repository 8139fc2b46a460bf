#pragma once

// A tiny two-stage problem shared by the trainer tests.

#include <vector>

#include "cnav/encoder.hpp"
#include "cnav/env.hpp"
#include "cnav/policy.hpp"
#include "cnav/trainer.hpp"

namespace testutil {

struct TinyProblem {
  cnav::EncoderConfig enc_cfg;
  cnav::Encoder encoder;
  cnav::PolicyConfig policy;
  cnav::TrainerConfig trainer;
  std::vector<std::vector<cnav::EncodedTrajectory>> stages;
  std::vector<std::vector<int>> categories{{0, 1}, {2}};

  explicit TinyProblem(std::uint64_t seed = 1, std::size_t per_category = 4);

  cnav::StageContext context() const { return {encoder, policy, trainer}; }
  cnav::StagePlan plan(int stage, cnav::StrategyId s) const {
    cnav::StagePlan p;
    p.stage = stage;
    p.categories = categories[static_cast<std::size_t>(stage - 1)];
    p.data = &stages[static_cast<std::size_t>(stage - 1)];
    p.strategy = s;
    return p;
  }
};

cnav::EncoderConfig tiny_encoder_config();

}  // namespace testutil
