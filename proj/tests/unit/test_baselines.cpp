#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "crosslearn/baselines.hpp"
#include "crosslearn/envs.hpp"

using namespace crosslearn;

namespace {

ContextDistribution two_contexts(const ActiveSet& a0, const ActiveSet& a1, double w0) {
  ContextDistribution d;
  d.support = {Context::finite(0, a0), Context::finite(1, a1)};
  d.weights = {w0, 1.0 - w0};
  return d;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("exp3 with one context matches a direct implementation") {
    const int K = 4;
    const std::size_t T = 3000;
    TabularSpec spec;
    spec.num_contexts = 1;
    spec.num_arms = K;
    spec.means = TabularSpec::Means::Random;
    const TabularEnv env(spec, T, RngStream(3, 1));

    Exp3PerContext exp3(K, RngStream(8, 2));
    RngStream mirror(8, 2);
    std::vector<double> cum(K, 0.0);
    for (std::size_t t = 1; t <= T; ++t) {
      const Context ctx = env.context(t);
      const ArmIndex played = exp3.step(ctx, [&env, t](ArmIndex a) { return env.reveal_feedback(t, a); });

      const double eta = std::sqrt(std::log(K) / (static_cast<double>(t) * K));
      const double lo = *std::min_element(cum.begin(), cum.end());
      std::vector<double> w(K);
      double total = 0.0;
      for (int k = 0; k < K; ++k) total += w[k] = std::exp(-eta * (cum[k] - lo));
      const double u = mirror.uniform();
      int arm = K - 1;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) {
        acc += w[k] / total;
        if (u < acc) {
          arm = k;
          break;
        }
      }
      REQUIRE(played.value() == arm);
      cum[arm] += env.loss(t, ctx, ArmIndex(arm)) / (w[arm] / total);
    }
    const auto* state = exp3.state(0);
    REQUIRE(state != nullptr);
    CHECK(state->visits == T);
    for (int k = 0; k < K; ++k) CHECK(state->cum_loss[k] == doctest::Approx(cum[k]).epsilon(1e-12));
  }

  TEST_CASE("exp3 plays uniformly in a context seen for the first time") {
    Exp3PerContext exp3(5, RngStream(1, 1));
    const ActiveSet all = ActiveSet::full(5);
    auto unit = [](ArmIndex) { return LossFunction::constant(1.0); };
    for (std::uint64_t id = 0; id < 100; ++id) exp3.step(Context::finite(id, all), unit);
    CHECK(exp3.num_states() == 100);
    // 5000 fresh contexts: arm frequencies ~ 1/5.
    std::vector<int> counts(5, 0);
    Exp3PerContext fresh(5, RngStream(2, 1));
    for (std::uint64_t id = 0; id < 50000; ++id) ++counts[fresh.step(Context::finite(id, all), unit).value()];
    for (int c : counts) CHECK(std::abs(c / 50000.0 - 0.2) < 4.0 * std::sqrt(0.16 / 50000.0));
  }

  TEST_CASE("exp3 states are isolated and concentrate on the best arm") {
    Exp3PerContext exp3(3, RngStream(5, 1));
    const ActiveSet all = ActiveSet::full(3);
    // Context 0: arm 0 is free. Context 1: arm 2 is free.
    for (int t = 0; t < 40000; ++t) {
      const std::uint64_t id = static_cast<std::uint64_t>(t % 2);
      const int best = id == 0 ? 0 : 2;
      exp3.step(Context::finite(id, all), [best](ArmIndex a) { return LossFunction::constant(a.value() == best ? 0.0 : 1.0); });
    }
    const auto* s0 = exp3.state(0);
    const auto* s1 = exp3.state(1);
    REQUIRE(s0);
    REQUIRE(s1);
    CHECK(s0->visits == 20000);
    CHECK(s0->cum_loss[0] == 0.0);
    CHECK(s1->cum_loss[2] == 0.0);
    const double eta = std::sqrt(std::log(3.0) / (20000.0 * 3));
    const ProbVector p0 = ftrl_distribution(s0->cum_loss, eta, all);
    const ProbVector p1 = ftrl_distribution(s1->cum_loss, eta, all);
    CHECK(p0[ArmIndex(0)] > 0.99);
    CHECK(p1[ArmIndex(2)] > 0.99);
    CHECK(exp3.state(7) == nullptr);
    CHECK_THROWS_AS(Exp3PerContext(1, RngStream(1, 1)), std::invalid_argument);
  }

  TEST_CASE("oracle expectations") {
    const ActiveSet all = ActiveSet::full(4);
    const KnownNuOracle oracle(two_contexts(all, all, 0.3));
    const Eigen::VectorXd u = oracle.expected_play(Accumulator::tabular(4, 2), 1.0);
    CHECK(u.isApprox(Eigen::Vector4d::Constant(0.25), 1e-15));

    const Eigen::VectorXd pm = oracle.expectation([](const Context& c) {
      return ProbVector::point_mass(4, ArmIndex(static_cast<int>(c.id)));
    });
    CHECK(pm.isApprox(Eigen::Vector4d(0.3, 0.7, 0.0, 0.0), 1e-15));

    const ActiveSet some(4, {1, 3});
    const KnownNuOracle sleepy(two_contexts(all, some, 0.5));
    const Eigen::VectorXd e = sleepy.expected_play(Accumulator::tabular(4, 2), 1.0);
    CHECK(e.isApprox(Eigen::Vector4d(0.125, 0.375, 0.125, 0.375), 1e-15));
  }

  TEST_CASE("oracle input errors") {
    ContextDistribution bad = two_contexts(ActiveSet::full(2), ActiveSet::full(2), 0.5);
    bad.weights = {0.5, 0.4};
    CHECK_THROWS_AS(KnownNuOracle{bad}, std::invalid_argument);
    bad.weights = {1.5, -0.5};
    CHECK_THROWS_AS(KnownNuOracle{bad}, std::invalid_argument);
    CHECK_THROWS_AS(KnownNuOracle{ContextDistribution{}}, std::invalid_argument);
    const KnownNuOracle ok(two_contexts(ActiveSet::full(2), ActiveSet::full(2), 0.5));
    CHECK_THROWS_AS(KnownNuLearner(0.0, Accumulator::tabular(2, 2), ok, RngStream(1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(KnownNuLearner(0.1, Accumulator::tabular(3, 2), ok, RngStream(1, 1)), std::invalid_argument);
  }

  TEST_CASE("known-distribution estimate is unbiased in one step") {
    // From a fixed state, E[added weight * l(c') for arm k] = l_k(c') for every c'.
    const int K = 3;
    const ActiveSet all = ActiveSet::full(K);
    const ActiveSet part(K, {0, 2});
    const KnownNuOracle oracle(two_contexts(all, part, 0.6));
    Accumulator start = Accumulator::tabular(K, 2);
    start.add(ArmIndex(0), 3.0, LossFunction::tabular(Eigen::Vector2d(0.2, 0.9)));
    start.add(ArmIndex(2), 1.0, LossFunction::tabular(Eigen::Vector2d(0.5, 0.1)));
    const Eigen::Matrix<double, 3, 2> table{{0.3, 0.8}, {0.6, 0.2}, {0.9, 0.4}};

    const int n = 200000;
    const double eta = 0.4;
    RngStream ctx_rng(4, 4);
    Eigen::Matrix<double, 3, 2> sum = Eigen::Matrix<double, 3, 2>::Zero();
    Eigen::Matrix<double, 3, 2> sq = Eigen::Matrix<double, 3, 2>::Zero();
    for (int i = 0; i < n; ++i) {
      KnownNuLearner learner(eta, start, oracle, RngStream(static_cast<std::uint64_t>(i), 9));
      const int c = ctx_rng.uniform() < 0.6 ? 0 : 1;
      const Context ctx = Context::finite(static_cast<std::uint64_t>(c), c == 0 ? all : part);
      learner.step(ctx, [&table](ArmIndex a) { return LossFunction::tabular(table.row(a.value()).transpose()); });
      const Eigen::MatrixXd delta = learner.accumulator().storage() - start.storage();
      sum += delta;
      sq += delta.cwiseProduct(delta);
    }
    const Eigen::Matrix<double, 3, 2> mean = sum / n;
    for (int k = 0; k < K; ++k)
      for (int c = 0; c < 2; ++c) {
        const double sd = std::sqrt(sq(k, c) / n - mean(k, c) * mean(k, c));
        CHECK(std::abs(mean(k, c) - table(k, c)) <= 4.0 * sd / std::sqrt(n));
      }
  }

  TEST_CASE("tiny denominators are skipped and counted") {
    // Arm 1 carries so much loss that its expected play underflows.
    const ActiveSet all = ActiveSet::full(2);
    const KnownNuOracle oracle(two_contexts(all, all, 0.5));
    Accumulator acc = Accumulator::tabular(2, 2);
    acc.add(ArmIndex(1), 1000.0, LossFunction::tabular(Eigen::Vector2d(1.0, 1.0)));
    KnownNuLearner learner(1.0, acc, oracle, RngStream(1, 1));
    // Force arm 1 through a context where it is the only active arm.
    const Context only1 = Context::finite(0, ActiveSet(2, {1}));
    learner.step(only1, [](ArmIndex) { return LossFunction::tabular(Eigen::Vector2d(0.5, 0.5)); });
    CHECK(learner.tiny_denominator_count() == 1);
    CHECK(learner.accumulator().storage() == acc.storage());
  }
}
