#include "fixture.hpp"

namespace testutil {

cnav::EncoderConfig tiny_encoder_config() {
  cnav::EncoderConfig cfg;
  cfg.obs.patch_size = 5;
  cfg.obs.depth_rays = 3;
  cfg.backbone_dims = {24, 6, 6, 4, 4};
  cfg.projector_dims = {8, 4, 4, 2, 2};
  return cfg;
}

TinyProblem::TinyProblem(std::uint64_t seed, std::size_t per_category)
    : enc_cfg(tiny_encoder_config()), encoder(enc_cfg, seed + 100) {
  policy = {enc_cfg.feature_dim(), 8};
  trainer.seed = seed;
  trainer.epochs = 2;
  trainer.batch_size = 4;
  trainer.optim.warmup_steps = 2;
  trainer.replay_per_category = 2;
  cnav::SceneConfig sc;
  sc.width = 10;
  sc.height = 10;
  sc.room_count = 2;
  sc.categories_present = {0, 1, 2};
  const cnav::EpisodeConfig ec{2, 6, 40};
  for (std::size_t k = 0; k < categories.size(); ++k) {
    std::vector<cnav::EncodedTrajectory> data;
    for (int c : categories[k])
      for (std::size_t i = 0; i < per_category; ++i) {
        const cnav::Scene scene = cnav::generate_scene(seed * 31 + i, sc);
        cnav::Rng rng(seed, "tiny-episode", k * 100 + static_cast<std::size_t>(c) * 10 + i);
        const auto ep = cnav::sample_episode(scene, c, ec, rng);
        const auto traj = cnav::plan_expert(scene, ep, enc_cfg.obs);
        data.push_back(cnav::encode_demonstration(
            encoder, traj, "s" + std::to_string(k + 1) + "-c" + std::to_string(c) + "-" + std::to_string(i),
            static_cast<int>(k + 1)));
      }
    stages.push_back(std::move(data));
  }
}

}  // namespace testutil
