#include "crosslearn/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace crosslearn {

KnownNuOracle::KnownNuOracle(ContextDistribution distribution) : distribution_(std::move(distribution)) {
  if (distribution_.support.empty() || distribution_.support.size() != distribution_.weights.size())
    throw std::invalid_argument("KnownNuOracle: empty or mismatched support");
  double total = 0.0;
  for (double w : distribution_.weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("KnownNuOracle: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("KnownNuOracle: weights must sum to 1");
}

Eigen::VectorXd KnownNuOracle::expectation(const std::function<ProbVector(const Context&)>& policy) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(distribution_.support.front().active.num_arms());
  for (std::size_t i = 0; i < distribution_.support.size(); ++i)
    out += distribution_.weights[i] * policy(distribution_.support[i]).weights();
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::VectorXd KnownNuOracle::expected_play(const Accumulator& acc, double eta) const {
  return expectation([&](const Context& c) { return ftrl_distribution(acc.eval(c), eta, c.active); });
}

KnownNuLearner::KnownNuLearner(double eta, Accumulator accumulator, KnownNuOracle oracle, RngStream rng)
    : eta_(eta), accumulator_(std::move(accumulator)), oracle_(std::move(oracle)), rng_(std::move(rng)) {
  if (!(eta_ > 0.0)) throw std::invalid_argument("KnownNuLearner: eta must be positive");
  if (oracle_.distribution().support.front().active.num_arms() != accumulator_.num_arms())
    throw std::invalid_argument("KnownNuLearner: oracle and accumulator disagree on K");
}

ArmIndex KnownNuLearner::step(const Context& context, const FeedbackChannel& feedback) {
  const ProbVector p = ftrl_distribution(accumulator_.eval(context), eta_, context.active);
  const ArmIndex arm = sample(p, rng_);
  const double denominator = oracle_.expected_play(accumulator_, eta_)[arm.value()];
  const LossFunction loss = feedback(arm);
  if (denominator < 1e-9) {
    ++tiny_denominators_;
    return arm;
  }
  accumulator_.add(arm, 1.0 / denominator, loss);
  return arm;
}

Exp3PerContext::Exp3PerContext(int num_arms, RngStream rng) : num_arms_(num_arms), rng_(std::move(rng)) {
  if (num_arms < 2) throw std::invalid_argument("Exp3PerContext: need K >= 2");
}

ArmIndex Exp3PerContext::step(const Context& context, const FeedbackChannel& feedback) {
  if (context.active.num_arms() != num_arms_)
    throw std::invalid_argument("Exp3PerContext: context active set has wrong arm count");
  auto [it, inserted] = states_.try_emplace(context.id);
  State& s = it->second;
  if (inserted) s.cum_loss = Eigen::VectorXd::Zero(num_arms_);
  ++s.visits;
  const double eta = std::sqrt(std::log(static_cast<double>(num_arms_)) /
                               (static_cast<double>(s.visits) * num_arms_));
  const ProbVector p = ftrl_distribution(s.cum_loss, eta, context.active);
  const ArmIndex arm = sample(p, rng_);
  const double loss = feedback(arm).eval(context);
  s.cum_loss[arm.value()] += loss / p[arm];
  return arm;
}

const Exp3PerContext::State* Exp3PerContext::state(std::uint64_t context_id) const {
  const auto it = states_.find(context_id);
  return it == states_.end() ? nullptr : &it->second;
}

}  // namespace crosslearn
