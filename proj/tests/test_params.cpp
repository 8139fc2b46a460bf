#include <cmath>
#include <filesystem>

#include "cnav/errors.hpp"
#include "cnav/params.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cnav;

TEST_SUITE("params") {
  TEST_CASE("schedule endpoints and shape") {
    OptimConfig cfg;
    cfg.base_lr = 0.01;
    cfg.warmup_steps = 10;
    cfg.total_steps = 50;
    CHECK(learning_rate(cfg, 10) == 0.01);
    CHECK(learning_rate(cfg, 50) == 0.0);
    CHECK(learning_rate(cfg, 5) == doctest::Approx(0.005));
    CHECK(learning_rate(cfg, 30) == doctest::Approx(0.005));
    double peak = 0.0;
    std::uint64_t arg = 0;
    for (std::uint64_t s = 1; s <= 60; ++s) {
      const double lr = learning_rate(cfg, s);
      CHECK(lr >= 0.0);
      if (lr > peak) peak = lr, arg = s;
    }
    CHECK(arg == 10);
    cfg.warmup_steps = 0;
    CHECK(learning_rate(cfg, 1) < 0.01);
    CHECK(learning_rate(cfg, 0) == 0.01);
  }

  TEST_CASE("validate rejects warmup past total") {
    OptimConfig cfg;
    cfg.warmup_steps = 20;
    cfg.total_steps = 10;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
  }

  TEST_CASE("two AdamW steps follow the hand recurrence") {
    OptimConfig cfg;
    cfg.base_lr = 0.1;
    cfg.warmup_steps = 0;
    cfg.total_steps = 100;
    cfg.weight_decay = 0.0;
    ParamStore ps;
    ps.add("w", DenseArray::vector({0.5}));
    Gradients g{{"w", DenseArray::vector({1.0})}};

    double w = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
      adamw_step(ps, g, cfg, t);
      m = cfg.beta1 * m + (1 - cfg.beta1) * 1.0;
      v = cfg.beta2 * v + (1 - cfg.beta2) * 1.0;
      const double mhat = m / (1 - std::pow(cfg.beta1, t));
      const double vhat = v / (1 - std::pow(cfg.beta2, t));
      const double lr = cfg.base_lr * (100.0 - t) / 100.0;
      w -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    CHECK(ps.value("w")[0] == doctest::Approx(w).epsilon(1e-14));
    CHECK(ps.entry("w").step == 2);
  }

  TEST_CASE("decoupled weight decay shrinks parameters with zero gradient") {
    OptimConfig cfg;
    cfg.base_lr = 0.1;
    cfg.warmup_steps = 0;
    cfg.weight_decay = 0.5;
    ParamStore ps;
    ps.add("w", DenseArray::vector({2.0}));
    adamw_step(ps, {{"w", DenseArray::vector({0.0})}}, cfg, 1);
    const double lr = learning_rate(cfg, 1);
    CHECK(ps.value("w")[0] == doctest::Approx(2.0 - lr * 0.5 * 2.0));
  }

  TEST_CASE("adamw_step errors") {
    OptimConfig cfg;
    ParamStore ps;
    ps.add("a", DenseArray::vector({1.0}));
    ps.add("b", DenseArray::vector({1.0}));
    CHECK_THROWS_WITH(adamw_step(ps, {{"a", DenseArray::vector({1.0})}}, cfg, 1),
                      doctest::Contains("b"));
    CHECK_THROWS(adamw_step(ps, {{"a", DenseArray::vector({1.0})}, {"b", DenseArray::vector({1.0})}}, cfg, 0));
  }

  TEST_CASE("optimizer is deterministic") {
    auto run = [] {
      Rng rng(3);
      ParamStore ps;
      ps.add("w", testutil::random_array({4, 3}, rng));
      OptimConfig cfg;
      for (std::uint64_t s = 1; s <= 20; ++s) {
        Gradients g{{"w", testutil::random_array({4, 3}, rng)}};
        adamw_step(ps, g, cfg, s);
      }
      return ps;
    };
    CHECK(run() == run());
  }

  TEST_CASE("interpolation") {
    ParamStore a, b;
    a.add("x", DenseArray::vector({2.0}));
    b.add("x", DenseArray::vector({-2.0}));
    a.entry("x").adam_m[0] = 3.0;
    CHECK(interpolate_params(a, b, 0.7).value("x")[0] == doctest::Approx(0.8));
    CHECK(interpolate_params(a, b, 1.0).value("x") == a.value("x"));
    CHECK(interpolate_params(a, b, 0.0).value("x") == b.value("x"));
    CHECK(interpolate_params(a, b, 1.0).entry("x").adam_m[0] == 0.0);
    ParamStore c;
    c.add("y", DenseArray::vector({1.0}));
    CHECK_THROWS(interpolate_params(a, c, 0.5));
    ParamStore d;
    d.add("x", DenseArray::vector({1.0, 2.0}));
    CHECK_THROWS(interpolate_params(a, d, 0.5));
    CHECK_THROWS(interpolate_params(a, b, 1.5));
  }

  TEST_CASE("serialization is bit exact") {
    Rng rng(9);
    ParamStore ps;
    ps.add("encoder.w", testutil::random_array({5, 7}, rng));
    ps.add("policy.b", DenseArray::vector({std::nextafter(1.0, 2.0), -0.0, 1e-300}));
    ps.entry("policy.b").step = 17;
    ps.entry("encoder.w").adam_v[3] = 0.125;
    const SerializedStore s = serialize(ps, {{"run", "x"}});
    CHECK(s.manifest.at("version") == kCheckpointVersion);
    ParamStore back = deserialize(s.manifest, s.blob);
    CHECK(back == ps);
    CHECK(std::signbit(back.value("policy.b")[1]));
  }

  TEST_CASE("checkpoint files and error classes") {
    const auto dir = std::filesystem::temp_directory_path() / "cnav-test-ckpt";
    std::filesystem::remove_all(dir);
    ParamStore ps;
    ps.add("w", DenseArray::vector({1.0, 2.0}));
    save_checkpoint(dir / "a" / "stage_1", ps, {{"stage", 1}});
    nlohmann::json meta;
    CHECK(load_checkpoint(dir / "a" / "stage_1", &meta) == ps);
    CHECK(meta.at("stage") == 1);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), MissingArtifactError);

    SerializedStore s = serialize(ps);
    s.manifest["version"] = "cnav-ckpt-v0";
    CHECK_THROWS_AS(deserialize(s.manifest, s.blob), ValidationError);
    s = serialize(ps);
    s.blob.pop_back();
    CHECK_THROWS_AS(deserialize(s.manifest, s.blob), IoError);
    write_file(dir / "bad.json", std::string_view("{not json"));
    write_file(dir / "bad.bin", std::string_view(""));
    CHECK_THROWS_AS(load_checkpoint(dir / "bad"), IoError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("duplicate names are rejected") {
    ParamStore ps;
    ps.add("w", DenseArray::vector({1.0}));
    CHECK_THROWS(ps.add("w", DenseArray::vector({1.0})));
  }
}
