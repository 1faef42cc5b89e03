#include <doctest.h>

#include <cmath>

#include "crosslearn/verify.hpp"

using namespace crosslearn;

namespace {

// Same sum accumulated from the last term down.
double lemma_reverse(long k) {
  const auto kd = static_cast<double>(k);
  double total = 0.0;
  for (long i = k / 4; i >= k / 16; --i) {
    const double next = static_cast<double>(i) + 1.0;
    const double gap = 1.0 - 2.0 * std::sqrt(next / kd);
    total += std::exp(-static_cast<double>(i)) * next / ((gap > 0.0 ? gap : 0.0) + 16.0 / (kd + 1.0));
  }
  return total;
}

}  // namespace

TEST_SUITE("verify") {
  TEST_CASE("technical lemma values") {
    CHECK(technical_lemma_eval(16) == doctest::Approx(1.2827289597857106).epsilon(1e-13));
    CHECK(technical_lemma_eval(17) == doctest::Approx(1.3185872314324804).epsilon(1e-13));
    CHECK(technical_lemma_eval(31) == doctest::Approx(1.70179052443675).epsilon(1e-13));
    CHECK(technical_lemma_eval(100) == doctest::Approx(0.049389420608570761).epsilon(1e-13));
    CHECK(technical_lemma_eval(200) == doctest::Approx(2.3711704196480194e-4).epsilon(1e-12));
    CHECK(technical_lemma_eval(1000) == doctest::Approx(2.3299333452425395e-25).epsilon(1e-12));
    CHECK(technical_lemma_eval(10000) == doctest::Approx(7.2831276530062285e-269).epsilon(1e-12));
    CHECK_THROWS_AS(technical_lemma_eval(15), std::invalid_argument);
  }

  TEST_CASE("technical lemma: bound and independent summation") {
    double worst = 0.0;
    long worst_k = 0;
    for (long k = 16; k <= 200; ++k) {
      const double v = technical_lemma_eval(k);
      CHECK(v == doctest::Approx(lemma_reverse(k)).epsilon(1e-12));
      if (v > worst) {
        worst = v;
        worst_k = k;
      }
    }
    CHECK(worst <= 2.0);
    CHECK(worst_k == 31);
  }

  TEST_CASE("inverse-mean bound examples") {
    const auto half = inverse_mean_bound_check(UnitDistribution::bernoulli(0.5), 100, 100000, RngStream(1, 1));
    CHECK(half.rhs == 2.0);
    CHECK(half.lhs + half.ci_half_width <= 2.0);
    CHECK(half.pass);

    const auto point = inverse_mean_bound_check(UnitDistribution::point_mass(0.25), 64, 100000, RngStream(1, 1));
    CHECK(point.lhs == doctest::Approx(1.0 / (0.25 + 0.25)).epsilon(1e-12));
    CHECK(point.ci_half_width == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(point.pass);

    const auto rare = inverse_mean_bound_check(UnitDistribution::bernoulli(0.05), 400, 100000, RngStream(2, 2));
    CHECK(rare.pass);
    CHECK(rare.lhs < 20.0);
  }

  TEST_CASE("inverse-mean bound errors") {
    CHECK_THROWS_AS(inverse_mean_bound_check(UnitDistribution::point_mass(0.0), 10, 100000, RngStream(1, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(inverse_mean_bound_check(UnitDistribution::uniform(), 0, 100000, RngStream(1, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(inverse_mean_bound_check(UnitDistribution::uniform(), 10, 99999, RngStream(1, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(UnitDistribution::bernoulli(0.0), std::invalid_argument);
    CHECK_THROWS_AS(UnitDistribution::beta(0.0, 1.0), std::invalid_argument);
  }

  TEST_CASE("unit laws have the stated means") {
    RngStream rng(3, 3);
    for (const auto& law : {UnitDistribution::bernoulli(0.3), UnitDistribution::uniform(),
                            UnitDistribution::beta(2.0, 5.0), UnitDistribution::point_mass(0.7)}) {
      CAPTURE(law.name());
      double total = 0.0;
      for (int i = 0; i < 2000; ++i) total += law.sample_mean(100, rng);
      CHECK(total / 2000.0 == doctest::Approx(law.mean()).epsilon(0.01));
    }
    CHECK(inverse_mean_suite().size() == 32);
  }

  TEST_CASE("observation probability with and without fallback contexts") {
    RngStream rng(4, 4);
    for (bool dominating : {true, false}) {
      const FrozenEpoch st = random_frozen_epoch(5, 9, dominating, rng);
      for (std::size_t c = 0; c < st.nu.size(); ++c) {
        CHECK(st.play[c].support() == st.active[c]);
        if (dominating) CHECK_FALSE(needs_fallback(st.play[c], st.snapshot[c]));
      }
      const auto r = subsampling_check(st, 400000, RngStream(5, dominating ? 1 : 0));
      CHECK(r.pass);
      CHECK(r.expected.sum() == doctest::Approx(0.5).epsilon(1e-12));
    }
  }

  TEST_CASE("known-distribution unbiasedness check") {
    int passed = 0;
    for (int i = 0; i < 5; ++i) {
      const auto r = known_nu_unbiasedness_check(4, 6, 200000, RngStream(7, static_cast<std::uint64_t>(i)));
      CHECK(r.ci_half_width > 0.0);
      passed += r.pass;
    }
    CHECK(passed >= 4);
  }

  TEST_CASE("single-context audit: exact frequency estimates") {
    TabularSpec spec;
    spec.num_contexts = 1;
    spec.num_arms = 4;
    spec.gap = 0.4;
    const std::size_t T = 4000;
    const TabularEnv env(spec, T, RngStream(1, 1));
    const Params p = tune_parameters(4, T);
    const AuditRun run = audit_run(env, p, 3);
    REQUIRE_FALSE(run.epochs.empty());
    for (const EpochAudit& e : run.epochs) {
      CHECK(e.fhat.isApprox(e.f, 1e-12));
      CHECK(e.frequency_event);
      for (Eigen::Index k = 0; k < e.beta.size(); ++k) {
        CHECK(e.beta[k] > 2.0 / 3.0);
        CHECK(e.beta[k] <= 1.0 + 1e-12);
      }
    }
    const AuditSummary s = summarize({run});
    CHECK(s.runs == 1);
    CHECK(s.epochs == run.epochs.size());
    CHECK(s.frequency_event_fraction == 1.0);
  }

  TEST_CASE("audit counts rounds and fallbacks per epoch") {
    const TabularEnv env(synthetic_suite(), 1u << 12, RngStream(2, 0x1001));
    const Params p = tune_parameters(8, 1u << 12);
    const AuditRun run = audit_run(env, p, 2);
    const auto L = static_cast<std::size_t>(p.epoch_length);
    CHECK(run.epochs.size() == (1u << 12) / L - 1);
    std::size_t fallbacks = 0;
    for (const EpochAudit& e : run.epochs) {
      CHECK(e.rounds == L);
      fallbacks += e.fallbacks;
    }
    CHECK(fallbacks <= run.fallbacks);
    CHECK(run.rounds == 1u << 12);
  }
}
