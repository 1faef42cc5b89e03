#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosslearn/accumulator.hpp"
#include "crosslearn/learner.hpp"

namespace crosslearn {

/// Learner constants. `iota` only enters through the tuning formulas and the
/// validity conditions; the learner itself uses epoch_length, gamma and eta.
struct Params {
  double iota = 0.0;
  int epoch_length = 2;
  double gamma = 0.0;
  double eta = 0.0;
  int num_arms = 0;
  std::size_t horizon = 0;
};

/// Raised when a Params value breaks one of its validity conditions.
class ParamsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on an internal invariant breach (a bug, not bad input).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Standard tuning for horizon T and K arms:
///   iota  = 2 log(8KT)
///   L     = nearest even integer to sqrt(iota K T / log K), clamped to [2, T]
///   gamma = 16 iota / L
///   eta   = min(gamma / (2 (2 L gamma + iota)), log(2) / (5 L))
Params tune_parameters(int num_arms, std::size_t horizon);

/// Same formulas with `iota` supplied by the caller.
Params tune_parameters(int num_arms, std::size_t horizon, double iota);

/// Human-readable list of violated conditions; empty when `p` is valid.
std::vector<std::string> params_violations(const Params& p);

/// Throws ParamsError listing every violated condition.
void validate(const Params& p);

/// True when some active arm has p(k) < s(k)/2, so the round plays s instead
/// of p. Equality keeps p.
bool needs_fallback(const ProbVector& p, const ProbVector& s);

/// Subsampling probability s / (2 q). Throws InvariantError above 1 + 1e-12.
double bernoulli_param(double s_val, double q_val);

struct LossEstimate {
  double weight;
  LossFunction loss;
};

/// Importance weight 2 / (fhat_k + 1.5 gamma) attached to an observed loss.
LossEstimate emit_loss_estimate(double fhat_k, double gamma, LossFunction loss);

enum class RoundRole { Warmup, Frequency, Loss, Leftover };

std::string_view to_string(RoundRole role);

struct RoundRecord {
  std::size_t t = 0;
  int epoch = 1;
  std::uint64_t context_id = 0;
  double context_value = 0.0;
  ArmIndex arm;
  bool fallback = false;
  bool bern = false;
  RoundRole role = RoundRole::Warmup;
  double loss_value = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

/// Hooks for auditing a run. Default implementations do nothing.
class CrossLearnObserver {
 public:
  virtual ~CrossLearnObserver() = default;
  /// An estimating epoch e >= 2 starts with frozen fhat_e and snapshot s_e.
  virtual void on_epoch_begin(int /*epoch*/, const Eigen::VectorXd& /*fhat*/,
                              const SnapshotHandle& /*snapshot*/) {}
  /// An L-round of epoch e drew S = 1 for `arm`.
  virtual void on_loss_observed(int /*epoch*/, ArmIndex /*arm*/, const LossFunction& /*loss*/) {}
  /// Called once per round after its role is known.
  virtual void on_round(const RoundRecord& /*record*/) {}
};

/// Epoch bookkeeping. Snapshots s_e and s_{e+1} are live during epoch e;
/// s_{e+2} is frozen at the start of the epoch's final pair and promoted at
/// the boundary.
struct EpochState {
  int epoch = 1;
  Eigen::VectorXd fhat;       // fhat_e
  Eigen::VectorXd fhat_next;  // running fhat_{e+1}
  SnapshotHandle snap_current;
  SnapshotHandle snap_next;
  std::optional<SnapshotHandle> snap_pending;
};

/// Cross-learning learner for an unknown context distribution.
///
/// Rounds 1..L play the uniform snapshot and estimate fhat_2. Afterwards
/// rounds come in pairs sharing one FTRL distribution p. Each round plays
/// q = p(c) unless some active arm has p(c,k) < s_e(c,k)/2, in which case it
/// plays s_e(c). After a pair a random permutation assigns one round to
/// frequency estimation (fhat_{e+1}) and the other to loss estimation, which
/// keeps its loss with probability s_e(c,A)/(2 q(c,A)) and adds it to the
/// accumulator with weight 2/(fhat_{e,A} + 1.5 gamma).
///
/// Rounds past the last full epoch keep playing this way without producing
/// estimates.
class CrossLearner final : public Learner {
 public:
  struct Options {
    bool record_rounds = false;
  };

  CrossLearner(Params params, Accumulator accumulator, RngStream rng, Options options);
  CrossLearner(Params params, Accumulator accumulator, RngStream rng)
      : CrossLearner(params, std::move(accumulator), std::move(rng), Options{}) {}

  ArmIndex step(const Context& context, const FeedbackChannel& feedback) override;
  std::string_view name() const override { return "crosslearn"; }
  std::size_t fallback_count() const override { return fallbacks_; }

  void set_observer(CrossLearnObserver* observer) { observer_ = observer; }

  const Params& params() const { return params_; }
  const EpochState& state() const { return state_; }
  const Accumulator& accumulator() const { return accumulator_; }
  std::size_t rounds_played() const { return t_; }
  /// Populated when Options::record_rounds is set. Both rounds of a pair
  /// carry their final roles once the pair completes.
  const std::vector<RoundRecord>& records() const { return records_; }

 private:
  struct PendingRound {
    Context context;
    ArmIndex arm;
    double q_arm;
    LossFunction loss;
    RoundRecord record;
  };

  ArmIndex warmup_round(const Context& context, const FeedbackChannel& feedback);
  ArmIndex paired_round(const Context& context, const FeedbackChannel& feedback, bool estimating);
  void close_pair(PendingRound first, PendingRound second);
  void finish_epoch();
  void emit(const RoundRecord& record);

  Params params_;
  Accumulator accumulator_;
  RngStream rng_;
  Options options_;
  EpochState state_;
  std::size_t full_epochs_;
  std::size_t t_ = 0;
  std::size_t fallbacks_ = 0;
  std::optional<PendingRound> pending_;
  std::vector<RoundRecord> records_;
  CrossLearnObserver* observer_ = nullptr;
};

}  // namespace crosslearn
