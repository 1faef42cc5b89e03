#include "crosslearn/envs.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace crosslearn {

namespace {

std::vector<double> normalized(std::vector<double> w, const char* what) {
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": negative weight");
    total += x;
  }
  if (!(total > 0.0)) throw std::invalid_argument(std::string(what) + ": weights sum to zero");
  for (double& x : w) x /= total;
  return w;
}

std::size_t sample_index(const std::vector<double>& cdf, RngStream& rng) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  return cdf;
}

double reflect_unit(double x) {
  while (x < 0.0 || x > 1.0) x = x < 0.0 ? -x : 2.0 - x;
  return x;
}

}  // namespace

// ---------------------------------------------------------------- regret

std::unique_ptr<RegretTracker> Environment::make_regret_tracker() const {
  return std::make_unique<RealizedRegretTracker>(*this);
}

void RealizedRegretTracker::record(std::size_t t, const Context& context, ArmIndex played) {
  const std::uint64_t key = env_.context_key(context);
  auto [it, inserted] = index_.try_emplace(key, groups_.size());
  if (inserted) groups_.push_back({context.active, Eigen::VectorXd::Zero(env_.num_arms())});
  Group& g = groups_[it->second];
  for (int k : g.active.members()) g.totals[k] += env_.loss(t, context, ArmIndex(k));
  learner_loss_ += env_.loss(t, context, played);
}

double RealizedRegretTracker::regret() const {
  double comparator = 0.0;
  for (const Group& g : groups_) {
    double best = std::numeric_limits<double>::infinity();
    for (int k : g.active.members()) best = std::min(best, g.totals[k]);
    comparator += best;
  }
  return learner_loss_ - comparator;
}

double hindsight_regret(std::span<const HistoryEntry> history, const Environment& env) {
  RealizedRegretTracker tracker(env);
  for (std::size_t i = 0; i < history.size(); ++i)
    tracker.record(i + 1, history[i].context, history[i].arm);
  return tracker.regret();
}

// ---------------------------------------------------------------- tabular

LossTensor::LossTensor(std::size_t horizon, int num_arms, int num_contexts)
    : horizon(horizon),
      num_arms(num_arms),
      num_contexts(num_contexts),
      values(horizon * static_cast<std::size_t>(num_arms) * static_cast<std::size_t>(num_contexts),
             0.0) {}

double& LossTensor::at(std::size_t t, int k, int c) {
  return values[((t - 1) * static_cast<std::size_t>(num_arms) + static_cast<std::size_t>(k)) *
                    static_cast<std::size_t>(num_contexts) +
                static_cast<std::size_t>(c)];
}

double LossTensor::at(std::size_t t, int k, int c) const {
  return const_cast<LossTensor*>(this)->at(t, k, c);
}

LossTensor read_loss_tensor_csv(std::istream& in) {
  struct Row {
    std::size_t t;
    int k, c;
    double v;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.find_first_of("tT") == 0) continue;  // header
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    Row r{};
    if (!(fields >> r.t >> r.k >> r.c >> r.v))
      throw std::invalid_argument("loss tensor CSV: malformed line " + std::to_string(line_no));
    if (r.t < 1 || r.k < 0 || r.c < 0 || r.v < 0.0 || r.v > 1.0)
      throw std::invalid_argument("loss tensor CSV: value out of range on line " + std::to_string(line_no));
    rows.push_back(r);
  }
  if (rows.empty()) throw std::invalid_argument("loss tensor CSV: no rows");
  std::size_t horizon = 0;
  int arms = 0, contexts = 0;
  for (const Row& r : rows) {
    horizon = std::max(horizon, r.t);
    arms = std::max(arms, r.k + 1);
    contexts = std::max(contexts, r.c + 1);
  }
  LossTensor tensor(horizon, arms, contexts);
  std::vector<char> seen(tensor.values.size(), 0);
  for (const Row& r : rows) {
    const auto idx = static_cast<std::size_t>(&tensor.at(r.t, r.k, r.c) - tensor.values.data());
    tensor.values[idx] = r.v;
    seen[idx] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw std::invalid_argument("loss tensor CSV: missing (t,k,c) cells");
  return tensor;
}

void write_loss_tensor_csv(const LossTensor& tensor, std::ostream& out) {
  out << "t,k,c,value\n";
  out.precision(17);
  for (std::size_t t = 1; t <= tensor.horizon; ++t)
    for (int k = 0; k < tensor.num_arms; ++k)
      for (int c = 0; c < tensor.num_contexts; ++c) out << t << ',' << k << ',' << c << ',' << tensor.at(t, k, c) << '\n';
}

TabularEnv::TabularEnv(const TabularSpec& spec, std::size_t horizon, RngStream stream)
    : num_arms_(spec.num_arms),
      bernoulli_noise_(spec.bernoulli_noise),
      drift_amplitude_(spec.drift_amplitude),
      drift_period_(spec.drift_period) {
  if (spec.num_arms < 1 || spec.num_contexts < 1) throw std::invalid_argument("TabularEnv: empty shape");
  if (!(spec.drift_period > 0.0)) throw std::invalid_argument("TabularEnv: drift period must be positive");
  const int C = spec.num_contexts;
  const int K = spec.num_arms;

  nu_ = spec.nu.empty() ? std::vector<double>(static_cast<std::size_t>(C), 1.0 / C)
                        : normalized(spec.nu, "TabularEnv nu");
  if (static_cast<int>(nu_.size()) != C) throw std::invalid_argument("TabularEnv: nu has wrong length");

  means_.resize(K, C);
  for (int c = 0; c < C; ++c) {
    const int best = static_cast<int>((static_cast<long long>(c) * spec.stride) % K);
    for (int k = 0; k < K; ++k) {
      const double m = spec.means == TabularSpec::Means::Planted
                           ? (k == best ? spec.base - spec.gap / 2.0 : spec.base + spec.gap / 2.0)
                           : stream.uniform();
      if (m < 0.0 || m > 1.0) throw std::invalid_argument("TabularEnv: mean loss outside [0,1]");
      means_(k, c) = m;
    }
  }

  active_.reserve(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    if (spec.active_prob >= 1.0) {
      active_.push_back(ActiveSet::full(K));
      continue;
    }
    std::vector<int> members;
    while (members.empty())
      for (int k = 0; k < K; ++k)
        if (stream.bernoulli(spec.active_prob)) members.push_back(k);
    active_.emplace_back(K, std::move(members));
  }

  loss_key_ = stream.next_u64();
  draw_contexts(horizon, stream);
}

TabularEnv::TabularEnv(LossTensor tensor, std::vector<double> nu, std::vector<ActiveSet> active,
                       RngStream stream)
    : num_arms_(tensor.num_arms), nu_(normalized(std::move(nu), "TabularEnv nu")),
      active_(std::move(active)), tensor_(std::move(tensor)) {
  if (static_cast<int>(nu_.size()) != tensor_.num_contexts || active_.size() != nu_.size())
    throw std::invalid_argument("TabularEnv: nu / active sets do not match the tensor's contexts");
  for (const auto& a : active_)
    if (a.num_arms() != num_arms_) throw std::invalid_argument("TabularEnv: active set arm count mismatch");
  means_ = Eigen::MatrixXd::Zero(num_arms_, tensor_.num_contexts);
  draw_contexts(tensor_.horizon, stream);
}

void TabularEnv::draw_contexts(std::size_t horizon, RngStream& stream) {
  const auto cdf = cumulative(nu_);
  contexts_.resize(horizon);
  for (auto& c : contexts_) c = static_cast<int>(sample_index(cdf, stream));
}

Accumulator TabularEnv::make_accumulator() const { return Accumulator::tabular(num_arms_, num_contexts()); }

Context TabularEnv::context(std::size_t t) const {
  const int c = contexts_.at(t - 1);
  return Context::finite(static_cast<std::uint64_t>(c), active_[static_cast<std::size_t>(c)]);
}

double TabularEnv::loss(std::size_t t, const Context& context, ArmIndex arm) const {
  const int k = arm.value();
  const auto c = static_cast<int>(context.id);
  if (!tensor_.values.empty()) return tensor_.at(t, k, c);
  double mean = means_(k, c);
  if (drift_amplitude_ != 0.0)
    mean = std::clamp(mean + drift_amplitude_ * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / drift_period_),
                      0.0, 1.0);
  if (!bernoulli_noise_) return mean;
  return counter_uniform(loss_key_, t, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(c)) < mean ? 1.0
                                                                                                            : 0.0;
}

LossFunction TabularEnv::reveal_feedback(std::size_t t, ArmIndex arm) const {
  const Context ctx = context(t);
  if (!ctx.active.contains(arm)) throw std::invalid_argument("TabularEnv: feedback requested for inactive arm");
  Eigen::VectorXd column(num_contexts());
  for (int c = 0; c < num_contexts(); ++c)
    column[c] = loss(t, Context::finite(static_cast<std::uint64_t>(c), active_[static_cast<std::size_t>(c)]), arm);
  return LossFunction::tabular(std::move(column));
}

ContextDistribution TabularEnv::context_distribution() const {
  ContextDistribution d;
  for (int c = 0; c < num_contexts(); ++c) {
    d.support.push_back(Context::finite(static_cast<std::uint64_t>(c), active_[static_cast<std::size_t>(c)]));
    d.weights.push_back(nu_[static_cast<std::size_t>(c)]);
  }
  return d;
}

void TabularEnv::export_adversary_csv(std::ostream& out) const {
  out << "t,k,c,value\n";
  out.precision(17);
  for (std::size_t t = 1; t <= horizon(); ++t)
    for (int k = 0; k < num_arms_; ++k)
      for (int c = 0; c < num_contexts(); ++c)
        out << t << ',' << k << ',' << c << ','
            << loss(t, Context::finite(static_cast<std::uint64_t>(c), active_[static_cast<std::size_t>(c)]), ArmIndex(k))
            << '\n';
}

// ---------------------------------------------------------------- auction

double auction_loss(double value, double bid, double highest_other) {
  if (value < 0.0 || value > 1.0 || bid < 0.0 || bid > 1.0 || highest_other < 0.0 || highest_other > 1.0)
    throw std::invalid_argument("auction_loss: arguments must lie in [0,1]");
  const double utility = bid >= highest_other ? value - bid : 0.0;
  return (1.0 - utility) / 2.0;
}

int cube_root_ceil(std::size_t horizon) {
  std::size_t k = 1;
  while (k * k * k < horizon) ++k;
  return static_cast<int>(k);
}

AuctionEnv::AuctionEnv(const AuctionSpec& spec, std::size_t horizon, RngStream stream)
    : num_arms_(spec.num_arms > 0 ? spec.num_arms : cube_root_ceil(horizon)),
      all_(ActiveSet::full(spec.num_arms > 0 ? spec.num_arms : cube_root_ceil(horizon))) {
  if (horizon == 0) throw std::invalid_argument("AuctionEnv: horizon must be positive");
  if (spec.quadrature_nodes < 512) throw std::invalid_argument("AuctionEnv: need at least 512 quadrature nodes");

  values_.resize(horizon);
  value_ids_.assign(horizon, 0);
  switch (spec.values) {
    case AuctionSpec::Values::Uniform: {
      for (auto& v : values_) v = stream.uniform();
      const int n = spec.quadrature_nodes;
      for (int i = 0; i < n; ++i) {
        distribution_.support.push_back(Context::continuous((i + 0.5) / n, all_));
        distribution_.weights.push_back(1.0 / n);
      }
      distribution_.exact = false;
      break;
    }
    case AuctionSpec::Values::Beta: {
      if (!(spec.beta_a > 0.0) || !(spec.beta_b > 0.0)) throw std::invalid_argument("AuctionEnv: bad beta shape");
      std::gamma_distribution<double> ga(spec.beta_a, 1.0), gb(spec.beta_b, 1.0);
      for (auto& v : values_) {
        const double x = ga(stream.engine());
        const double y = gb(stream.engine());
        v = x / (x + y);
      }
      const int n = spec.quadrature_nodes;
      std::vector<double> w;
      for (int i = 0; i < n; ++i) {
        const double x = (i + 0.5) / n;
        distribution_.support.push_back(Context::continuous(x, all_));
        w.push_back(std::pow(x, spec.beta_a - 1.0) * std::pow(1.0 - x, spec.beta_b - 1.0));
      }
      distribution_.weights = normalized(std::move(w), "AuctionEnv beta density");
      distribution_.exact = false;
      break;
    }
    case AuctionSpec::Values::Discrete: {
      if (spec.discrete_values.empty() || spec.discrete_values.size() != spec.discrete_probs.size())
        throw std::invalid_argument("AuctionEnv: discrete values and probabilities must match");
      for (double v : spec.discrete_values)
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("AuctionEnv: value outside [0,1]");
      const auto probs = normalized(spec.discrete_probs, "AuctionEnv discrete probs");
      const auto cdf = cumulative(probs);
      for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t i = sample_index(cdf, stream);
        values_[t] = spec.discrete_values[i];
        value_ids_[t] = i;
      }
      for (std::size_t i = 0; i < probs.size(); ++i) {
        distribution_.support.push_back({i, spec.discrete_values[i], all_});
        distribution_.weights.push_back(probs[i]);
      }
      discrete_ = true;
      break;
    }
  }

  // The highest competing bids are fixed before any round is played.
  competition_.resize(horizon);
  switch (spec.competition) {
    case AuctionSpec::Competition::Iid:
      if (!(spec.m_low >= 0.0 && spec.m_high <= 1.0 && spec.m_low <= spec.m_high))
        throw std::invalid_argument("AuctionEnv: bad iid competition range");
      for (auto& m : competition_) m = spec.m_low + (spec.m_high - spec.m_low) * stream.uniform();
      break;
    case AuctionSpec::Competition::Periodic:
      if (!(spec.period > 0.0)) throw std::invalid_argument("AuctionEnv: period must be positive");
      for (std::size_t t = 0; t < horizon; ++t)
        competition_[t] = std::clamp(
            spec.center + spec.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t + 1) / spec.period),
            0.0, 1.0);
      break;
    case AuctionSpec::Competition::Drift: {
      double m = std::clamp(spec.center, 0.0, 1.0);
      for (auto& x : competition_) {
        x = m;
        m = reflect_unit(m + spec.drift_step * (2.0 * stream.uniform() - 1.0));
      }
      break;
    }
  }
}

Context AuctionEnv::context(std::size_t t) const { return {value_ids_.at(t - 1), values_.at(t - 1), all_}; }

LossFunction AuctionEnv::reveal_feedback(std::size_t t, ArmIndex arm) const {
  if (!all_.contains(arm)) throw std::invalid_argument("AuctionEnv: feedback requested for inactive arm");
  const double b = bid(arm);
  if (b >= highest_other_bid(t)) return LossFunction::affine((1.0 + b) / 2.0, -0.5);
  return LossFunction::affine(0.5, 0.0);
}

double AuctionEnv::loss(std::size_t t, const Context& context, ArmIndex arm) const {
  return auction_loss(context.value, bid(arm), highest_other_bid(t));
}

std::uint64_t AuctionEnv::context_key(const Context& context) const {
  return discrete_ ? context.id : std::bit_cast<std::uint64_t>(context.value);
}

ContextDistribution AuctionEnv::context_distribution() const { return distribution_; }

std::unique_ptr<RegretTracker> AuctionEnv::make_regret_tracker() const {
  return std::make_unique<AuctionExpectedTracker>(*this);
}

void AuctionEnv::export_adversary_csv(std::ostream& out) const {
  out << "t,m\n";
  out.precision(17);
  for (std::size_t t = 1; t <= horizon(); ++t) out << t << ',' << highest_other_bid(t) << '\n';
}

AuctionExpectedTracker::AuctionExpectedTracker(const AuctionEnv& env)
    : env_(env), nodes_(env.context_distribution()), wins_(static_cast<std::size_t>(env.num_arms()), 0.0) {}

void AuctionExpectedTracker::record(std::size_t t, const Context& context, ArmIndex played) {
  rounds_ += 1.0;
  learner_loss_ += env_.loss(t, context, played);
  const double m = env_.highest_other_bid(t);
  for (int k = 0; k < env_.num_arms(); ++k)
    if (env_.bid(ArmIndex(k)) >= m) wins_[static_cast<std::size_t>(k)] += 1.0;
}

double AuctionExpectedTracker::regret() const {
  // sum_t l_t(v, b_k) = (rounds - (v - b_k) * wins_k) / 2
  double comparator = 0.0;
  for (std::size_t i = 0; i < nodes_.support.size(); ++i) {
    const double v = nodes_.support[i].value;
    double best_utility = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < env_.num_arms(); ++k)
      best_utility = std::max(best_utility, (v - env_.bid(ArmIndex(k))) * wins_[static_cast<std::size_t>(k)]);
    comparator += nodes_.weights[i] * (rounds_ - best_utility) / 2.0;
  }
  return learner_loss_ - comparator;
}

// ---------------------------------------------------------------- sleeping

SleepingEnv::SleepingEnv(const SleepingSpec& spec, std::size_t horizon, RngStream stream)
    : num_arms_(spec.num_arms), bernoulli_noise_(spec.bernoulli_noise), loss_key_(0) {
  const int K = spec.num_arms;
  if (K < 1 || K > 63) throw std::invalid_argument("SleepingEnv: need 1 <= K <= 63");
  const std::uint64_t all_mask = (1ULL << K) - 1;

  if (spec.means.empty()) {
    for (int k = 0; k < K; ++k) means_.push_back(0.1 + 0.8 * stream.uniform());
  } else {
    if (static_cast<int>(spec.means.size()) != K) throw std::invalid_argument("SleepingEnv: means length != K");
    for (double m : spec.means)
      if (m < 0.0 || m > 1.0) throw std::invalid_argument("SleepingEnv: mean outside [0,1]");
    means_ = spec.means;
  }
  loss_key_ = stream.next_u64();

  masks_.resize(horizon);
  if (spec.availability == SleepingSpec::Availability::Bernoulli) {
    std::vector<double> q = spec.arm_probs.empty() ? std::vector<double>(static_cast<std::size_t>(K), 0.5)
                                                   : spec.arm_probs;
    if (static_cast<int>(q.size()) != K) throw std::invalid_argument("SleepingEnv: arm_probs length != K");
    double none = 1.0;
    for (double x : q) {
      if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("SleepingEnv: availability outside [0,1]");
      none *= 1.0 - x;
    }
    if (none >= 1.0) throw std::invalid_argument("SleepingEnv: no arm can ever be active");
    // Conditioned on a nonempty set: rejection sampling.
    for (auto& m : masks_) {
      std::uint64_t mask = 0;
      while (mask == 0) {
        mask = 0;
        for (int k = 0; k < K; ++k)
          if (stream.bernoulli(q[static_cast<std::size_t>(k)])) mask |= 1ULL << k;
      }
      m = mask;
    }
    if (K <= 16) {
      for (std::uint64_t mask = 1; mask <= all_mask; ++mask) {
        double p = 1.0;
        for (int k = 0; k < K; ++k) p *= ((mask >> k) & 1ULL) ? q[static_cast<std::size_t>(k)] : 1.0 - q[static_cast<std::size_t>(k)];
        if (p == 0.0) continue;
        distribution_.support.push_back(Context::finite(mask, ActiveSet::from_mask(K, mask)));
        distribution_.weights.push_back(p / (1.0 - none));
      }
    }
  } else {
    if (spec.subsets.empty() || spec.subsets.size() != spec.subset_probs.size())
      throw std::invalid_argument("SleepingEnv: subsets and probabilities must match");
    for (auto m : spec.subsets)
      if (m == 0 || (m & ~all_mask) != 0) throw std::invalid_argument("SleepingEnv: invalid availability subset");
    const auto probs = normalized(spec.subset_probs, "SleepingEnv subset probs");
    const auto cdf = cumulative(probs);
    for (auto& m : masks_) m = spec.subsets[sample_index(cdf, stream)];
    for (std::size_t i = 0; i < probs.size(); ++i) {
      distribution_.support.push_back(Context::finite(spec.subsets[i], ActiveSet::from_mask(K, spec.subsets[i])));
      distribution_.weights.push_back(probs[i]);
    }
  }
}

Context SleepingEnv::context(std::size_t t) const {
  const std::uint64_t mask = masks_.at(t - 1);
  return Context::finite(mask, ActiveSet::from_mask(num_arms_, mask));
}

double SleepingEnv::arm_loss(std::size_t t, int k) const {
  const double mean = means_[static_cast<std::size_t>(k)];
  if (!bernoulli_noise_) return mean;
  return counter_uniform(loss_key_, t, static_cast<std::uint64_t>(k), 0) < mean ? 1.0 : 0.0;
}

LossFunction SleepingEnv::reveal_feedback(std::size_t t, ArmIndex arm) const {
  if (((masks_.at(t - 1) >> arm.value()) & 1ULL) == 0)
    throw std::invalid_argument("SleepingEnv: feedback requested for inactive arm");
  return LossFunction::constant(arm_loss(t, arm.value()));
}

double SleepingEnv::loss(std::size_t t, const Context& /*context*/, ArmIndex arm) const {
  return arm_loss(t, arm.value());
}

ContextDistribution SleepingEnv::context_distribution() const {
  if (distribution_.support.empty())
    throw std::logic_error("SleepingEnv: context law enumeration needs K <= 16");
  return distribution_;
}

void SleepingEnv::export_adversary_csv(std::ostream& out) const {
  out << "t,k,value\n";
  for (std::size_t t = 1; t <= horizon(); ++t)
    for (int k = 0; k < num_arms_; ++k) out << t << ',' << k << ',' << arm_loss(t, k) << '\n';
}

}  // namespace crosslearn
