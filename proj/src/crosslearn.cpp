#include "crosslearn/crosslearn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crosslearn {

namespace {

// Relative slack for conditions that the tuning formulas meet with equality.
constexpr double kEqualitySlack = 1e-12;

}  // namespace

Params tune_parameters(int num_arms, std::size_t horizon) {
  if (num_arms < 2) throw ParamsError("tune_parameters: need K >= 2");
  const double iota = 2.0 * std::log(8.0 * num_arms * static_cast<double>(horizon));
  return tune_parameters(num_arms, horizon, iota);
}

Params tune_parameters(int num_arms, std::size_t horizon, double iota) {
  if (num_arms < 2) throw ParamsError("tune_parameters: need K >= 2");
  if (horizon < static_cast<std::size_t>(num_arms)) throw ParamsError("tune_parameters: need T >= K");
  if (!(iota > 0.0) || !std::isfinite(iota)) throw ParamsError("tune_parameters: need iota > 0");

  const double k = num_arms;
  const double t = static_cast<double>(horizon);
  const double raw = std::sqrt(iota * k * t / std::log(k));
  const auto max_even = static_cast<double>(horizon - horizon % 2);
  const double length = std::clamp(2.0 * std::round(raw / 2.0), 2.0, max_even);

  Params p;
  p.iota = iota;
  p.epoch_length = static_cast<int>(length);
  p.gamma = 16.0 * iota / length;
  p.eta = std::min(p.gamma / (2.0 * (2.0 * length * p.gamma + iota)), std::log(2.0) / (5.0 * length));
  p.num_arms = num_arms;
  p.horizon = horizon;
  return p;
}

std::vector<std::string> params_violations(const Params& p) {
  std::vector<std::string> out;
  auto fail = [&out](const std::string& msg) { out.push_back(msg); };

  if (p.num_arms < 1) fail("K must be positive");
  if (p.horizon < 1) fail("T must be positive");
  if (p.epoch_length < 2 || p.epoch_length % 2 != 0) fail("L must be an even integer >= 2");
  if (p.horizon > 0 && static_cast<std::size_t>(p.epoch_length) > p.horizon) fail("L must not exceed T");
  if (!(p.iota > 0.0)) fail("iota must be positive");
  if (!(p.gamma > 0.0)) fail("gamma must be positive");
  if (!(p.eta > 0.0)) fail("eta must be positive");
  if (!out.empty()) return out;

  const double length = p.epoch_length;
  if (p.gamma < 16.0 * p.iota / length * (1.0 - kEqualitySlack)) fail("gamma >= 16 iota / L violated");
  if (p.eta > p.gamma / (2.0 * (2.0 * length * p.gamma + p.iota)) * (1.0 + kEqualitySlack))
    fail("eta <= gamma / (2 (2 L gamma + iota)) violated");
  if (p.iota < std::log(8.0 * p.num_arms / p.gamma)) fail("iota >= log(8K / gamma) violated");
  return out;
}

void validate(const Params& p) {
  const auto errors = params_violations(p);
  if (errors.empty()) return;
  std::ostringstream msg;
  msg << "invalid parameters:";
  for (const auto& e : errors) msg << ' ' << e << ';';
  throw ParamsError(msg.str());
}

bool needs_fallback(const ProbVector& p, const ProbVector& s) {
  for (int k : s.support().members())
    if (p.weights()[k] < s.weights()[k] / 2.0) return true;
  return false;
}

double bernoulli_param(double s_val, double q_val) {
  if (!(q_val > 0.0)) throw std::invalid_argument("bernoulli_param: q must be positive");
  if (s_val < 0.0) throw std::invalid_argument("bernoulli_param: s must be nonnegative");
  const double param = s_val / (2.0 * q_val);
  if (param > 1.0 + 1e-12) throw InvariantError("bernoulli_param: subsampling probability above 1");
  return std::min(param, 1.0);
}

LossEstimate emit_loss_estimate(double fhat_k, double gamma, LossFunction loss) {
  if (!(fhat_k >= 0.0)) throw std::invalid_argument("emit_loss_estimate: fhat must be nonnegative");
  if (!(gamma > 0.0)) throw std::invalid_argument("emit_loss_estimate: gamma must be positive");
  return {2.0 / (fhat_k + 1.5 * gamma), std::move(loss)};
}

std::string_view to_string(RoundRole role) {
  switch (role) {
    case RoundRole::Warmup: return "warmup";
    case RoundRole::Frequency: return "F";
    case RoundRole::Loss: return "L";
    case RoundRole::Leftover: return "leftover";
  }
  return "unknown";
}

CrossLearner::CrossLearner(Params params, Accumulator accumulator, RngStream rng, Options options)
    : params_(params),
      accumulator_(std::move(accumulator)),
      rng_(std::move(rng)),
      options_(options),
      state_{1,
             Eigen::VectorXd::Zero(params.num_arms),
             Eigen::VectorXd::Zero(params.num_arms),
             accumulator_.snapshot(params.eta),
             accumulator_.snapshot(params.eta),
             std::nullopt},
      full_epochs_(0) {
  if (params_.num_arms != accumulator_.num_arms())
    throw ParamsError("CrossLearner: accumulator arm count differs from K");
  if (params_.epoch_length < 2 || params_.epoch_length % 2 != 0 || !(params_.eta > 0.0) ||
      !(params_.gamma > 0.0) || params_.horizon < static_cast<std::size_t>(params_.epoch_length))
    throw ParamsError("CrossLearner: unusable parameters");
  full_epochs_ = params_.horizon / static_cast<std::size_t>(params_.epoch_length);
  if (options_.record_rounds) records_.reserve(params_.horizon);
}

ArmIndex CrossLearner::step(const Context& context, const FeedbackChannel& feedback) {
  if (t_ >= params_.horizon) throw std::logic_error("CrossLearner: step called past the horizon");
  if (context.active.num_arms() != params_.num_arms)
    throw std::invalid_argument("CrossLearner: context active set has wrong arm count");
  ++t_;
  const auto length = static_cast<std::size_t>(params_.epoch_length);
  if (t_ <= length) return warmup_round(context, feedback);
  return paired_round(context, feedback, t_ <= full_epochs_ * length);
}

ArmIndex CrossLearner::warmup_round(const Context& context, const FeedbackChannel& feedback) {
  const ProbVector q = state_.snap_current.eval(context);
  const ArmIndex arm = sample(q, rng_);
  const LossFunction loss = feedback(arm);

  state_.fhat_next += state_.snap_next.eval(context).weights() / (2.0 * params_.epoch_length);

  RoundRecord rec;
  rec.t = t_;
  rec.epoch = 1;
  rec.context_id = context.id;
  rec.context_value = context.value;
  rec.arm = arm;
  rec.role = RoundRole::Warmup;
  rec.loss_value = loss.eval(context);
  emit(rec);

  if (t_ == static_cast<std::size_t>(params_.epoch_length)) {
    state_.snap_pending = accumulator_.snapshot(params_.eta);
    finish_epoch();
  }
  return arm;
}

ArmIndex CrossLearner::paired_round(const Context& context, const FeedbackChannel& feedback,
                                    bool estimating) {
  const auto length = static_cast<std::size_t>(params_.epoch_length);
  const std::size_t offset = (t_ - 1) % length;
  const bool first_of_pair = offset % 2 == 0;

  // The accumulator only changes when a pair closes, so both rounds of a pair
  // see the same FTRL state.
  if (estimating && offset == length - 2) state_.snap_pending = accumulator_.snapshot(params_.eta);

  const ProbVector p = ftrl_distribution(accumulator_.eval(context), params_.eta, context.active);
  const ProbVector s = state_.snap_current.eval(context);
  const bool fallback = needs_fallback(p, s);
  const ProbVector& q = fallback ? s : p;
  const ArmIndex arm = sample(q, rng_);
  LossFunction loss = feedback(arm);
  if (fallback) ++fallbacks_;

  RoundRecord rec;
  rec.t = t_;
  rec.epoch = state_.epoch;
  rec.context_id = context.id;
  rec.context_value = context.value;
  rec.arm = arm;
  rec.fallback = fallback;
  rec.role = estimating ? RoundRole::Loss : RoundRole::Leftover;
  rec.loss_value = loss.eval(context);

  if (!estimating) {
    emit(rec);
    return arm;
  }

  PendingRound current{context, arm, q[arm], std::move(loss), rec};
  if (first_of_pair) {
    pending_ = std::move(current);
    return arm;
  }
  close_pair(std::move(*pending_), std::move(current));
  pending_.reset();
  if (offset == length - 1) finish_epoch();
  return arm;
}

void CrossLearner::close_pair(PendingRound first, PendingRound second) {
  const bool first_is_frequency = rng_.bernoulli(0.5);
  PendingRound& freq = first_is_frequency ? first : second;
  PendingRound& est = first_is_frequency ? second : first;

  // Frequency round: L/2 samples of s_{e+1}(c)/2.
  state_.fhat_next += state_.snap_next.eval(freq.context).weights() / params_.epoch_length;
  freq.record.role = RoundRole::Frequency;

  const double s_arm = state_.snap_current.eval(est.context)[est.arm];
  const bool keep = rng_.bernoulli(bernoulli_param(s_arm, est.q_arm));
  est.record.role = RoundRole::Loss;
  est.record.bern = keep;
  if (keep) {
    const int k = est.arm.value();
    LossEstimate estimate = emit_loss_estimate(state_.fhat[k], params_.gamma, est.loss);
    accumulator_.add(est.arm, estimate.weight, estimate.loss);
    if (observer_) observer_->on_loss_observed(state_.epoch, est.arm, est.loss);
  }

  emit(first.record);
  emit(second.record);
}

void CrossLearner::finish_epoch() {
  if (!state_.snap_pending) throw InvariantError("CrossLearner: epoch closed without a snapshot");
  state_.snap_current = std::move(state_.snap_next);
  state_.snap_next = std::move(*state_.snap_pending);
  state_.snap_pending.reset();
  state_.fhat = state_.fhat_next;
  state_.fhat_next.setZero();
  ++state_.epoch;
  if (observer_ && static_cast<std::size_t>(state_.epoch) <= full_epochs_)
    observer_->on_epoch_begin(state_.epoch, state_.fhat, state_.snap_current);
}

void CrossLearner::emit(const RoundRecord& record) {
  if (options_.record_rounds) records_.push_back(record);
  if (observer_) observer_->on_round(record);
}

}  // namespace crosslearn
