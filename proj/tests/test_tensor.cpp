#include <cmath>
#include <functional>

#include "cnav/params.hpp"
#include "cnav/tensor.hpp"
#include "doctest.h"
#include "oracles/oracles.hpp"
#include "test_util.hpp"

using namespace cnav;

namespace {

// Runs `build` on a fresh tape and returns both the analytic gradient and the
// finite-difference estimate for every parameter entry.
struct GradCheck {
  std::vector<double> analytic, numeric;
};

GradCheck check_gradients(const ParamStore& params, const std::function<Var(Tape&, const ParamStore&)>& build) {
  Tape tape;
  const Gradients g = tape.backward(build(tape, params), 1.0, &params);
  const auto probes = oracles::all_entries(params);
  GradCheck out;
  for (const auto& p : probes) out.analytic.push_back(g.at(p.name)[p.index]);
  out.numeric = oracles::fd_gradient(
      [&](const ParamStore& ps) {
        Tape t;
        return t.scalar(build(t, ps));
      },
      params, probes, 1e-5);
  return out;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("matmul of ones") {
    Tape t;
    Var a = t.constant(DenseArray({2, 3}, 1.0));
    Var b = t.constant(DenseArray({3, 1}, 1.0));
    const DenseArray& c = t.value(t.matmul(a, b));
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == 3.0);
    CHECK(c[1] == 3.0);
  }

  TEST_CASE("identity chain returns its input") {
    Tape t;
    Var x = t.constant(DenseArray::vector({1.5, -2.0}));
    CHECK(t.value(t.scale(x, 1.0)).values() == std::vector<double>{1.5, -2.0});
    CHECK(t.value(x).values() == std::vector<double>{1.5, -2.0});
  }

  TEST_CASE("cross-entropy of uniform logits is ln 6") {
    Tape t;
    Var l = t.constant(DenseArray({6}, 0.0));
    CHECK(t.scalar(t.softmax_cross_entropy(l, 2)) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  }

  TEST_CASE("hand-computable gradient and unused parameter") {
    ParamStore ps;
    ps.add("w", DenseArray::vector({1.0}));
    ps.add("unused", DenseArray::vector({4.0, 5.0}));
    Tape t;
    Var wx = t.mul(t.param(ps, "w"), t.constant(DenseArray::vector({2.0})));
    Var loss = t.squared_difference_sum(wx, t.constant(DenseArray::vector({0.0})));
    const Gradients g = t.backward(loss, 1.0, &ps);
    CHECK(g.at("w")[0] == doctest::Approx(8.0));
    CHECK(g.at("unused").values() == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("every primitive matches central differences") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t m = 2 + rng.below(4), k = 2 + rng.below(4);
      ParamStore ps;
      ps.add("A", testutil::random_array({m, k}, rng));
      ps.add("B", testutil::random_array({k, 2}, rng));
      ps.add("x", testutil::random_array({k}, rng));
      ps.add("y", testutil::random_array({m}, rng));
      ps.add("z", testutil::random_array({6}, rng));
      ps.add("p", testutil::random_array({m}, rng, 0.5));
      const DenseArray target = testutil::random_array({m}, rng);
      const DenseArray teacher = testutil::random_array({6}, rng);

      auto build = [&](Tape& t, const ParamStore& s) {
        Var A = t.param(s, "A"), x = t.param(s, "x"), y = t.param(s, "y"), z = t.param(s, "z");
        Var Ax = t.matmul(A, x);
        Var AB = t.matmul(A, t.param(s, "B"));
        Var h = t.tanh(t.add(Ax, y));
        Var g = t.sigmoid(t.sub(Ax, t.scale(y, 0.5)));
        Var prod = t.mul(h, g);
        Var cat = t.concat({prod, t.slice(z, 1, 3)});
        Var pw = t.power(t.add(t.mul(t.param(s, "p"), t.param(s, "p")), t.constant(DenseArray({m}, 0.1))), 1.5);
        std::vector<Var> terms{
            t.squared_difference_sum(prod, t.constant(target)),
            t.squared_difference_sum(cat, t.constant(DenseArray({m + 3}, 0.2))),
            t.squared_difference_sum(AB, t.constant(DenseArray({m, 2}, 0.0))),
            t.softmax_cross_entropy(z, 4),
            t.kl_divergence(t.constant(teacher), z),
            t.squared_difference_sum(pw, t.constant(DenseArray({m}, 0.0))),
        };
        return t.sum(terms);
      };
      const GradCheck gc = check_gradients(ps, build);
      CHECK(testutil::max_rel_err(gc.analytic, gc.numeric) < 1e-4);
    }
  }

  TEST_CASE("random three-layer net gradient") {
    Rng rng(5);
    ParamStore ps;
    ps.add("w1", testutil::random_array({8, 5}, rng));
    ps.add("b1", testutil::random_array({8}, rng));
    ps.add("w2", testutil::random_array({7, 8}, rng));
    ps.add("w3", testutil::random_array({6, 7}, rng));
    const DenseArray x = testutil::random_array({5}, rng);
    auto build = [&](Tape& t, const ParamStore& s) {
      Var h1 = t.tanh(t.add(t.matmul(t.param(s, "w1"), t.constant(x)), t.param(s, "b1")));
      Var h2 = t.sigmoid(t.matmul(t.param(s, "w2"), h1));
      return t.softmax_cross_entropy(t.matmul(t.param(s, "w3"), h2), 3);
    };
    const GradCheck gc = check_gradients(ps, build);
    CHECK(testutil::max_rel_err(gc.analytic, gc.numeric) < 1e-4);
  }

  TEST_CASE("power with p < 1 has zero derivative at zero") {
    ParamStore ps;
    ps.add("x", DenseArray::vector({0.0, 4.0}));
    Tape t;
    Var y = t.power(t.param(ps, "x"), 0.5);
    Var loss = t.squared_difference_sum(y, t.constant(DenseArray::vector({-1.0, 0.0})));
    const Gradients g = t.backward(loss);
    CHECK(g.at("x")[0] == 0.0);
    CHECK(g.at("x")[1] == doctest::Approx(2.0 * 2.0 * 0.5 / 2.0));
  }

  TEST_CASE("shape errors name the primitive") {
    Tape t;
    Var a = t.constant(DenseArray({2, 3}));
    Var b = t.constant(DenseArray({2}));
    CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
    CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("add"), std::invalid_argument);
    CHECK_THROWS_AS(t.slice(b, 1, 2), std::invalid_argument);
    CHECK_THROWS_AS(t.softmax_cross_entropy(b, 5), std::invalid_argument);
  }

  TEST_CASE("backward requires a scalar output on a non-empty tape") {
    Tape t;
    Var v = t.constant(DenseArray({3}, 1.0));
    CHECK_THROWS(t.backward(v));
    Tape empty;
    CHECK_THROWS(empty.backward(Var{0}));
  }

  TEST_CASE("shared parameter slot accumulates gradient") {
    ParamStore ps;
    ps.add("w", DenseArray::vector({3.0}));
    Tape t;
    Var a = t.param(ps, "w");
    Var b = t.param(ps, "w");
    CHECK(a.id == b.id);
    Var loss = t.squared_difference_sum(t.add(a, b), t.constant(DenseArray::vector({0.0})));
    CHECK(t.backward(loss).at("w")[0] == doctest::Approx(2.0 * 6.0 * 2.0));
  }
}
