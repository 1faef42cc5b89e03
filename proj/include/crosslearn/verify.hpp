#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "crosslearn/crosslearn.hpp"
#include "crosslearn/envs.hpp"
#include "crosslearn/rng.hpp"

namespace crosslearn {

// ---------------------------------------------------------------- inverse-mean bound

/// A law on [0, 1] with positive mean.
class UnitDistribution {
 public:
  enum class Kind { Bernoulli, Uniform, Beta, PointMass };

  static UnitDistribution bernoulli(double mu);
  static UnitDistribution uniform();
  static UnitDistribution beta(double a, double b);
  static UnitDistribution point_mass(double mu);

  Kind kind() const { return kind_; }
  double mean() const;
  std::string name() const;
  /// Mean of t independent draws.
  double sample_mean(int t, RngStream& rng) const;

 private:
  UnitDistribution(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}
  Kind kind_;
  double a_;
  double b_;
};

struct InverseMeanCheck {
  double lhs = 0.0;           // Monte-Carlo E[1 / (mean_t + 16/t)]
  double rhs = 0.0;           // 1 / mu
  double ci_half_width = 0.0;  // 99%
  bool pass = false;           // lhs + hw <= rhs + 3 hw
};

/// Needs t >= 1 and n_trials >= 1e5; throws for a zero-mean law.
InverseMeanCheck inverse_mean_bound_check(const UnitDistribution& dist, int t, std::size_t n_trials,
                                          RngStream rng);

/// The 8 laws x 4 sample sizes of the standard suite.
struct InverseMeanCase {
  UnitDistribution dist;
  int t;
};
std::vector<InverseMeanCase> inverse_mean_suite();

// ---------------------------------------------------------------- technical lemma

/// f(k) = sum_{i=floor(k/16)}^{floor(k/4)} (i+1) e^{-i} / ((1 - 2 sqrt((i+1)/k))_+ + 16/(k+1)).
/// Throws for k < 16.
double technical_lemma_eval(long k);

// ---------------------------------------------------------------- subsampling

/// Frozen snapshot s, pair distribution p and context law for one epoch.
struct FrozenEpoch {
  std::vector<double> nu;
  std::vector<ActiveSet> active;
  std::vector<ProbVector> snapshot;  // s_e(c)
  std::vector<ProbVector> play;      // p(c)
};

/// Random state on K arms and C contexts with random active sets. With
/// `dominating` set every p(c) satisfies p >= s/2; otherwise some contexts
/// violate it and exercise the fallback.
FrozenEpoch random_frozen_epoch(int num_arms, int num_contexts, bool dominating, RngStream& rng);

struct SubsamplingCheck {
  Eigen::VectorXd observed;  // P(A = k and S = 1), empirical
  Eigen::VectorXd expected;  // E_c[s(c, k) / 2]
  double max_z = 0.0;        // largest |observed - expected| / stderr
  bool pass = false;         // max_z <= 4
};

/// Simulates L-rounds: c ~ nu, q = p(c) or s(c) by the fallback rule,
/// A ~ q, S ~ Bernoulli(s(c, A) / (2 q(c, A))).
SubsamplingCheck subsampling_check(const FrozenEpoch& state, std::size_t trials, RngStream rng);

struct UnbiasednessCheck {
  int arm = 0;
  int context = 0;
  double truth = 0.0;
  double estimate = 0.0;
  double ci_half_width = 0.0;  // 99%
  bool pass = false;
};

/// Known-distribution estimator l(c) / E_c'[p(c', k)] 1[A = k] on a random
/// frozen accumulator, checked at one random (k, c).
UnbiasednessCheck known_nu_unbiasedness_check(int num_arms, int num_contexts, std::size_t trials, RngStream rng);

// ---------------------------------------------------------------- audit

struct EpochAudit {
  int epoch = 0;
  Eigen::VectorXd f;
  Eigen::VectorXd fhat;
  Eigen::VectorXd beta;
  bool frequency_event = false;  // F_e
  bool loss_event = false;       // L_e
  double max_proxy_loss = 0.0;
  std::size_t rounds = 0;
  std::size_t fallbacks = 0;
};

/// Observer computing, per estimating epoch, the true observation
/// probabilities f_e = E_c[s_e(c, .) / 2], beta_e = (f + gamma)/(fhat + 1.5 gamma),
/// the concentration event for fhat and the proxy-loss event.
class Auditor final : public CrossLearnObserver {
 public:
  Auditor(const Params& params, ContextDistribution distribution);

  void on_epoch_begin(int epoch, const Eigen::VectorXd& fhat, const SnapshotHandle& snapshot) override;
  void on_loss_observed(int epoch, ArmIndex arm, const LossFunction& loss) override;
  void on_round(const RoundRecord& record) override;
  /// Closes the last open epoch.
  void finish();

  const std::vector<EpochAudit>& epochs() const { return epochs_; }

 private:
  void close_epoch();

  Params params_;
  ContextDistribution distribution_;
  std::vector<EpochAudit> epochs_;
  Eigen::MatrixXd proxy_;  // K x support: running sum of 2 l / (f + gamma)
  bool open_ = false;
};

struct AuditRun {
  std::vector<EpochAudit> epochs;
  std::size_t rounds = 0;
  std::size_t fallbacks = 0;
  bool good = false;  // every F_e and L_e held
};

AuditRun audit_run(const Environment& env, const Params& params, std::uint64_t seed);

struct AuditSummary {
  std::size_t runs = 0;
  std::size_t epochs = 0;
  double frequency_event_fraction = 0.0;
  double loss_event_fraction = 0.0;
  double good_run_fraction = 0.0;
  std::size_t good_epoch_arms = 0;  // (e, k) pairs in runs where every event held
  double beta_in_range_fraction = 0.0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  double fallback_fraction_good = 0.0;
  double fallback_fraction = 0.0;  // over all rounds of all runs
};

AuditSummary summarize(const std::vector<AuditRun>& runs);

// ---------------------------------------------------------------- suites

/// Synthetic tabular environment used by the scaling and audit checks.
TabularSpec synthetic_suite();

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

enum class VerifyScale { Quick, Full };

/// Inverse-mean suite, technical lemma, subsampling, known-distribution
/// unbiasedness and the audit, as PASS/FAIL rows.
std::vector<CheckRow> run_verify_suite(VerifyScale scale);

}  // namespace crosslearn
