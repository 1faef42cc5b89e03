#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crosslearn/accumulator.hpp"
#include "crosslearn/context.hpp"
#include "crosslearn/rng.hpp"

namespace crosslearn {

/// Context law as weighted support points. Finite context sets are exact;
/// continuous laws are a quadrature rule.
struct ContextDistribution {
  std::vector<Context> support;
  std::vector<double> weights;
  bool exact = true;
};

/// Regret of a run prefix against a hindsight comparator, in loss units.
class RegretTracker {
 public:
  virtual ~RegretTracker() = default;
  virtual void record(std::size_t t, const Context& context, ArmIndex played) = 0;
  virtual double regret() const = 0;
};

/// An oblivious environment with cross-learning feedback. Everything random
/// is drawn at construction or derived from an owned seed, so an environment
/// is immutable and can be shared read-only between runs. Rounds are 1-based.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view kind() const = 0;
  virtual int num_arms() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual Representation representation() const = 0;
  virtual Accumulator make_accumulator() const = 0;

  virtual Context context(std::size_t t) const = 0;
  /// The played arm's loss as a function of the context. Throws if the arm
  /// is not active in round t's context.
  virtual LossFunction reveal_feedback(std::size_t t, ArmIndex arm) const = 0;
  /// l_t(c, k).
  virtual double loss(std::size_t t, const Context& context, ArmIndex arm) const = 0;

  /// Whether contexts come from a finite set identified by Context::id.
  virtual bool finite_contexts() const = 0;
  /// Grouping key for the realized-context comparator.
  virtual std::uint64_t context_key(const Context& context) const { return context.id; }
  virtual ContextDistribution context_distribution() const = 0;

  /// Tracker used for reported regret. Defaults to the realized-context
  /// comparator.
  virtual std::unique_ptr<RegretTracker> make_regret_tracker() const;
  /// Factor converting loss-unit regret into the reported unit.
  virtual double regret_scale() const { return 1.0; }

  /// Writes the oblivious adversary's sequence as CSV.
  virtual void export_adversary_csv(std::ostream& out) const = 0;
};

/// Comparator: best fixed mapping from realized contexts to active arms,
///   sum_t l_t(c_t, A_t) - sum_c min_{k in A_c} sum_{t: c_t = c} l_t(c, k).
class RealizedRegretTracker final : public RegretTracker {
 public:
  explicit RealizedRegretTracker(const Environment& env) : env_(env) {}
  void record(std::size_t t, const Context& context, ArmIndex played) override;
  double regret() const override;

 private:
  struct Group {
    ActiveSet active;
    Eigen::VectorXd totals;
  };
  const Environment& env_;
  std::vector<Group> groups_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  double learner_loss_ = 0.0;
};

struct HistoryEntry {
  Context context;
  ArmIndex arm;
};

/// Realized-context hindsight regret of a full history (entry i is round i+1).
double hindsight_regret(std::span<const HistoryEntry> history, const Environment& env);

// ---------------------------------------------------------------- tabular

/// Dense loss tensor l[t][k][c], rounds 1-based.
struct LossTensor {
  std::size_t horizon = 0;
  int num_arms = 0;
  int num_contexts = 0;
  std::vector<double> values;

  LossTensor() = default;
  LossTensor(std::size_t horizon, int num_arms, int num_contexts);
  double& at(std::size_t t, int k, int c);
  double at(std::size_t t, int k, int c) const;
};

/// Reads `t,k,c,value` rows (optional header). Every cell must be present.
LossTensor read_loss_tensor_csv(std::istream& in);
void write_loss_tensor_csv(const LossTensor& tensor, std::ostream& out);

struct TabularSpec {
  enum class Means { Planted, Random };

  int num_contexts = 64;
  int num_arms = 8;
  Means means = Means::Planted;
  // Planted: arm (c * stride) mod K is best in context c with mean base - gap/2;
  // every other arm has mean base + gap/2.
  double base = 0.5;
  double gap = 0.2;
  int stride = 1;
  bool bernoulli_noise = true;
  // Common additive drift amplitude * sin(2 pi t / period), clamped to [0,1].
  double drift_amplitude = 0.0;
  double drift_period = 1000.0;
  // Context law; empty means uniform.
  std::vector<double> nu;
  // Probability that an arm is active in a context; 1 gives full sets.
  double active_prob = 1.0;
};

class TabularEnv final : public Environment {
 public:
  TabularEnv(const TabularSpec& spec, std::size_t horizon, RngStream stream);
  /// Explicit losses; `nu` and `active` have one entry per context.
  TabularEnv(LossTensor tensor, std::vector<double> nu, std::vector<ActiveSet> active,
             RngStream stream);

  std::string_view kind() const override { return "tabular"; }
  int num_arms() const override { return num_arms_; }
  std::size_t horizon() const override { return contexts_.size(); }
  Representation representation() const override { return Representation::Tabular; }
  Accumulator make_accumulator() const override;
  Context context(std::size_t t) const override;
  LossFunction reveal_feedback(std::size_t t, ArmIndex arm) const override;
  double loss(std::size_t t, const Context& context, ArmIndex arm) const override;
  bool finite_contexts() const override { return true; }
  ContextDistribution context_distribution() const override;
  void export_adversary_csv(std::ostream& out) const override;

  int num_contexts() const { return static_cast<int>(nu_.size()); }
  const std::vector<double>& nu() const { return nu_; }
  const ActiveSet& active_set(int c) const { return active_[static_cast<std::size_t>(c)]; }
  /// Mean loss of (k, c) before drift; only for generated environments.
  double mean(int k, int c) const { return means_(k, c); }

 private:
  void draw_contexts(std::size_t horizon, RngStream& stream);

  int num_arms_;
  std::vector<double> nu_;
  std::vector<ActiveSet> active_;
  std::vector<int> contexts_;
  // Generated losses.
  Eigen::MatrixXd means_;
  bool bernoulli_noise_ = true;
  double drift_amplitude_ = 0.0;
  double drift_period_ = 1.0;
  std::uint64_t loss_key_ = 0;
  // Explicit losses (used when non-empty).
  LossTensor tensor_;
};

// ---------------------------------------------------------------- auction

/// First-price auction loss rescaled into [0, 1]: (1 - (v - b) 1[b >= m]) / 2.
double auction_loss(double value, double bid, double highest_other);

/// Smallest K with K^3 >= T.
int cube_root_ceil(std::size_t horizon);

struct AuctionSpec {
  enum class Values { Uniform, Beta, Discrete };
  enum class Competition { Iid, Periodic, Drift };

  Values values = Values::Uniform;
  double beta_a = 2.0;
  double beta_b = 2.0;
  std::vector<double> discrete_values;
  std::vector<double> discrete_probs;

  Competition competition = Competition::Iid;
  double m_low = 0.0;  // iid: uniform on [m_low, m_high]
  double m_high = 1.0;
  double center = 0.5;  // periodic: center + amplitude * sin(2 pi t / period)
  double amplitude = 0.3;
  double period = 1000.0;
  double drift_step = 0.01;  // drift: reflected random walk from `center`

  int num_arms = 0;  // 0 means ceil(T^{1/3})
  int quadrature_nodes = 1024;
};

class AuctionEnv final : public Environment {
 public:
  AuctionEnv(const AuctionSpec& spec, std::size_t horizon, RngStream stream);

  std::string_view kind() const override { return "auction"; }
  int num_arms() const override { return num_arms_; }
  std::size_t horizon() const override { return values_.size(); }
  Representation representation() const override { return Representation::Affine; }
  Accumulator make_accumulator() const override { return Accumulator::affine(num_arms_); }
  Context context(std::size_t t) const override;
  /// Uses only whether the bid won: won gives (1 - v + b)/2, lost gives 1/2.
  LossFunction reveal_feedback(std::size_t t, ArmIndex arm) const override;
  double loss(std::size_t t, const Context& context, ArmIndex arm) const override;
  bool finite_contexts() const override { return discrete_; }
  std::uint64_t context_key(const Context& context) const override;
  ContextDistribution context_distribution() const override;
  /// Comparator: best grid-bid mapping in expectation over the value law.
  std::unique_ptr<RegretTracker> make_regret_tracker() const override;
  double regret_scale() const override { return 2.0; }
  void export_adversary_csv(std::ostream& out) const override;

  double bid(ArmIndex arm) const { return static_cast<double>(arm.value()) / num_arms_; }
  double highest_other_bid(std::size_t t) const { return competition_[t - 1]; }
  std::span<const double> competition() const { return competition_; }

 private:
  int num_arms_;
  bool discrete_ = false;
  ActiveSet all_;
  std::vector<double> values_;
  std::vector<std::uint64_t> value_ids_;
  std::vector<double> competition_;
  ContextDistribution distribution_;
};

/// Regret against the best mapping from values to grid bids under the value
/// law: learner loss minus E_v[min_k sum_t l_t(v, b_k)].
class AuctionExpectedTracker final : public RegretTracker {
 public:
  explicit AuctionExpectedTracker(const AuctionEnv& env);
  void record(std::size_t t, const Context& context, ArmIndex played) override;
  double regret() const override;

 private:
  const AuctionEnv& env_;
  ContextDistribution nodes_;
  std::vector<double> wins_;
  double rounds_ = 0.0;
  double learner_loss_ = 0.0;
};

// ---------------------------------------------------------------- sleeping

struct SleepingSpec {
  enum class Availability { Bernoulli, Categorical };

  int num_arms = 8;
  Availability availability = Availability::Bernoulli;
  std::vector<double> arm_probs;  // Bernoulli: P(k active); empty means 0.5 each
  std::vector<std::uint64_t> subsets;  // Categorical support (bitmasks)
  std::vector<double> subset_probs;
  std::vector<double> means;  // per-arm mean loss; empty means random in [0.1, 0.9]
  bool bernoulli_noise = true;
};

class SleepingEnv final : public Environment {
 public:
  SleepingEnv(const SleepingSpec& spec, std::size_t horizon, RngStream stream);

  std::string_view kind() const override { return "sleeping"; }
  int num_arms() const override { return num_arms_; }
  std::size_t horizon() const override { return masks_.size(); }
  Representation representation() const override { return Representation::Constant; }
  Accumulator make_accumulator() const override { return Accumulator::constant(num_arms_); }
  Context context(std::size_t t) const override;
  LossFunction reveal_feedback(std::size_t t, ArmIndex arm) const override;
  double loss(std::size_t t, const Context& context, ArmIndex arm) const override;
  bool finite_contexts() const override { return true; }
  ContextDistribution context_distribution() const override;
  void export_adversary_csv(std::ostream& out) const override;

  /// Canonical context id of an availability set.
  static std::uint64_t context_id(const ActiveSet& available) { return available.mask(); }
  double arm_loss(std::size_t t, int k) const;

 private:
  int num_arms_;
  std::vector<std::uint64_t> masks_;
  std::vector<double> means_;
  bool bernoulli_noise_;
  std::uint64_t loss_key_;
  ContextDistribution distribution_;
};

}  // namespace crosslearn
