#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <unordered_map>

#include "crosslearn/accumulator.hpp"
#include "crosslearn/envs.hpp"
#include "crosslearn/learner.hpp"
#include "crosslearn/rng.hpp"

namespace crosslearn {

/// E_{c~nu}[p(c, k)] over a weighted support (exact for finite context sets,
/// a quadrature rule otherwise). Arms inactive at c contribute p(c, k) = 0.
class KnownNuOracle {
 public:
  explicit KnownNuOracle(ContextDistribution distribution);

  Eigen::VectorXd expectation(const std::function<ProbVector(const Context&)>& policy) const;
  /// Expected play probabilities of the FTRL distribution on `acc`.
  Eigen::VectorXd expected_play(const Accumulator& acc, double eta) const;

  const ContextDistribution& distribution() const { return distribution_; }

 private:
  ContextDistribution distribution_;
};

/// Cross-learning with the context law known: plays FTRL on the accumulator
/// and adds the played arm's loss function with weight 1 / E_c[p_t(c, A_t)].
/// Denominators below 1e-9 are skipped and counted.
class KnownNuLearner final : public Learner {
 public:
  KnownNuLearner(double eta, Accumulator accumulator, KnownNuOracle oracle, RngStream rng);

  ArmIndex step(const Context& context, const FeedbackChannel& feedback) override;
  std::string_view name() const override { return "known_nu"; }

  std::size_t tiny_denominator_count() const { return tiny_denominators_; }
  const Accumulator& accumulator() const { return accumulator_; }

 private:
  double eta_;
  Accumulator accumulator_;
  KnownNuOracle oracle_;
  RngStream rng_;
  std::size_t tiny_denominators_ = 0;
};

/// Independent EXP3 per context id, without cross-learning. Each state keeps
/// importance-weighted cumulative losses and uses the anytime rate
/// sqrt(log K / (t_c K)), where t_c counts visits to context c.
class Exp3PerContext final : public Learner {
 public:
  struct State {
    Eigen::VectorXd cum_loss;
    std::uint64_t visits = 0;
  };

  Exp3PerContext(int num_arms, RngStream rng);

  ArmIndex step(const Context& context, const FeedbackChannel& feedback) override;
  std::string_view name() const override { return "exp3_per_context"; }

  /// nullptr if the context has never been seen.
  const State* state(std::uint64_t context_id) const;
  std::size_t num_states() const { return states_.size(); }

 private:
  int num_arms_;
  RngStream rng_;
  std::unordered_map<std::uint64_t, State> states_;
};

}  // namespace crosslearn
