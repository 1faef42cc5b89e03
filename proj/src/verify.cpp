#include "crosslearn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "crosslearn/baselines.hpp"

namespace crosslearn {

namespace {

constexpr double kZ99 = 2.5758293035489004;

// Compensated running sum of x and x^2.
class MomentSum {
 public:
  void add(double x) {
    kahan(sum_, carry_, x);
    kahan(sq_, sq_carry_, x * x);
    ++n_;
  }
  double mean() const { return sum_ / static_cast<double>(n_); }
  double variance() const {
    const double m = mean();
    return std::max(0.0, sq_ / static_cast<double>(n_) - m * m) * static_cast<double>(n_) /
           static_cast<double>(n_ - 1);
  }
  double stderr_of_mean() const { return std::sqrt(variance() / static_cast<double>(n_)); }

 private:
  static void kahan(double& sum, double& carry, double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double sum_ = 0.0, carry_ = 0.0, sq_ = 0.0, sq_carry_ = 0.0;
  std::size_t n_ = 0;
};

std::vector<double> random_simplex(std::size_t n, RngStream& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) total += (x = expo(rng.engine()));
  for (double& x : w) x /= total;
  return w;
}

std::size_t draw(const std::vector<double>& cdf, RngStream& rng) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform());
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cdf_of(const std::vector<double>& w) {
  std::vector<double> cdf(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) cdf[i] = (acc += w[i]);
  return cdf;
}

ActiveSet random_active(int num_arms, double keep, RngStream& rng) {
  std::vector<int> members;
  while (members.empty())
    for (int k = 0; k < num_arms; ++k)
      if (rng.bernoulli(keep)) members.push_back(k);
  return ActiveSet(num_arms, std::move(members));
}

ProbVector random_distribution(const ActiveSet& active, double scale, RngStream& rng) {
  Eigen::VectorXd losses(active.num_arms());
  for (int k = 0; k < active.num_arms(); ++k) losses[k] = scale * rng.uniform();
  return ftrl_distribution(losses, 1.0, active);
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- inverse-mean bound

UnitDistribution UnitDistribution::bernoulli(double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("bernoulli: need 0 < mu <= 1");
  return {Kind::Bernoulli, mu, 0.0};
}

UnitDistribution UnitDistribution::uniform() { return {Kind::Uniform, 0.0, 0.0}; }

UnitDistribution UnitDistribution::beta(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("beta: shapes must be positive");
  return {Kind::Beta, a, b};
}

UnitDistribution UnitDistribution::point_mass(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("point_mass: need mu in [0, 1]");
  return {Kind::PointMass, mu, 0.0};
}

double UnitDistribution::mean() const {
  switch (kind_) {
    case Kind::Bernoulli: return a_;
    case Kind::Uniform: return 0.5;
    case Kind::Beta: return a_ / (a_ + b_);
    case Kind::PointMass: return a_;
  }
  return 0.0;
}

std::string UnitDistribution::name() const {
  char buf[64];
  switch (kind_) {
    case Kind::Bernoulli: std::snprintf(buf, sizeof buf, "Bernoulli(%g)", a_); break;
    case Kind::Uniform: std::snprintf(buf, sizeof buf, "Uniform[0,1]"); break;
    case Kind::Beta: std::snprintf(buf, sizeof buf, "Beta(%g,%g)", a_, b_); break;
    case Kind::PointMass: std::snprintf(buf, sizeof buf, "PointMass(%g)", a_); break;
  }
  return buf;
}

double UnitDistribution::sample_mean(int t, RngStream& rng) const {
  switch (kind_) {
    case Kind::Bernoulli: {
      std::binomial_distribution<int> binom(t, a_);
      return static_cast<double>(binom(rng.engine())) / t;
    }
    case Kind::Uniform: {
      double total = 0.0;
      for (int i = 0; i < t; ++i) total += rng.uniform();
      return total / t;
    }
    case Kind::Beta: {
      std::gamma_distribution<double> ga(a_, 1.0), gb(b_, 1.0);
      double total = 0.0;
      for (int i = 0; i < t; ++i) {
        const double x = ga(rng.engine());
        total += x / (x + gb(rng.engine()));
      }
      return total / t;
    }
    case Kind::PointMass: return a_;
  }
  return 0.0;
}

InverseMeanCheck inverse_mean_bound_check(const UnitDistribution& dist, int t, std::size_t n_trials,
                                          RngStream rng) {
  if (!(dist.mean() > 0.0)) throw std::invalid_argument("inverse_mean_bound_check: mean must be positive");
  if (t < 1) throw std::invalid_argument("inverse_mean_bound_check: need t >= 1");
  if (n_trials < 100000) throw std::invalid_argument("inverse_mean_bound_check: need at least 1e5 trials");
  MomentSum acc;
  const double floor = 16.0 / t;
  for (std::size_t i = 0; i < n_trials; ++i) acc.add(1.0 / (dist.sample_mean(t, rng) + floor));
  InverseMeanCheck out;
  out.lhs = acc.mean();
  out.rhs = 1.0 / dist.mean();
  out.ci_half_width = kZ99 * acc.stderr_of_mean();
  out.pass = out.lhs + out.ci_half_width <= out.rhs + 3.0 * out.ci_half_width;
  return out;
}

std::vector<InverseMeanCase> inverse_mean_suite() {
  std::vector<UnitDistribution> laws;
  for (double mu : {0.02, 0.05, 0.1, 0.3, 0.5, 0.9}) laws.push_back(UnitDistribution::bernoulli(mu));
  laws.push_back(UnitDistribution::uniform());
  laws.push_back(UnitDistribution::beta(2.0, 5.0));
  std::vector<InverseMeanCase> out;
  for (const auto& law : laws)
    for (int t : {16, 64, 256, 1024}) out.push_back({law, t});
  return out;
}

// ---------------------------------------------------------------- technical lemma

double technical_lemma_eval(long k) {
  if (k < 16) throw std::invalid_argument("technical_lemma_eval: need k >= 16");
  const auto kd = static_cast<double>(k);
  double total = 0.0;
  for (long i = k / 16; i <= k / 4; ++i) {
    const auto next = static_cast<double>(i + 1);
    const double gap = std::max(0.0, 1.0 - 2.0 * std::sqrt(next / kd));
    total += next / (gap + 16.0 / (kd + 1.0)) * std::exp(-static_cast<double>(i));
  }
  return total;
}

// ---------------------------------------------------------------- subsampling

FrozenEpoch random_frozen_epoch(int num_arms, int num_contexts, bool dominating, RngStream& rng) {
  FrozenEpoch st;
  st.nu = random_simplex(static_cast<std::size_t>(num_contexts), rng);
  for (int c = 0; c < num_contexts; ++c) {
    ActiveSet active = random_active(num_arms, 0.7, rng);
    ProbVector s = random_distribution(active, 4.0, rng);
    ProbVector other = random_distribution(active, 8.0, rng);
    // A mixture with weight 1/2 on s keeps p >= s/2 everywhere.
    const bool mix = dominating || rng.bernoulli(0.5);
    Eigen::VectorXd w = mix ? Eigen::VectorXd(0.5 * s.weights() + 0.5 * other.weights()) : other.weights();
    st.play.emplace_back(w / w.sum(), active);
    st.snapshot.push_back(std::move(s));
    st.active.push_back(std::move(active));
  }
  return st;
}

SubsamplingCheck subsampling_check(const FrozenEpoch& state, std::size_t trials, RngStream rng) {
  const std::size_t C = state.nu.size();
  if (C == 0 || trials == 0) throw std::invalid_argument("subsampling_check: empty state");
  const int K = state.snapshot.front().num_arms();
  const auto cdf = cdf_of(state.nu);

  std::vector<const ProbVector*> q(C);
  for (std::size_t c = 0; c < C; ++c)
    q[c] = needs_fallback(state.play[c], state.snapshot[c]) ? &state.snapshot[c] : &state.play[c];

  Eigen::VectorXd hits = Eigen::VectorXd::Zero(K);
  for (std::size_t i = 0; i < trials; ++i) {
    const std::size_t c = draw(cdf, rng);
    const ArmIndex arm = sample(*q[c], rng);
    if (rng.bernoulli(bernoulli_param(state.snapshot[c][arm], (*q[c])[arm]))) hits[arm.value()] += 1.0;
  }

  SubsamplingCheck out;
  const auto n = static_cast<double>(trials);
  out.observed = hits / n;
  out.expected = Eigen::VectorXd::Zero(K);
  for (std::size_t c = 0; c < C; ++c) out.expected += state.nu[c] * state.snapshot[c].weights() / 2.0;
  for (int k = 0; k < K; ++k) {
    const double f = out.expected[k];
    const double se = std::sqrt(f * (1.0 - f) / n);
    const double diff = std::abs(out.observed[k] - f);
    const double z = se > 0.0 ? diff / se : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    out.max_z = std::max(out.max_z, z);
  }
  out.pass = out.max_z <= 4.0;
  return out;
}

UnbiasednessCheck known_nu_unbiasedness_check(int num_arms, int num_contexts, std::size_t trials, RngStream rng) {
  const auto C = static_cast<std::size_t>(num_contexts);
  ContextDistribution law;
  law.weights = random_simplex(C, rng);
  for (int c = 0; c < num_contexts; ++c)
    law.support.push_back(Context::finite(static_cast<std::uint64_t>(c), random_active(num_arms, 0.7, rng)));

  Accumulator acc = Accumulator::tabular(num_arms, num_contexts);
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd table(num_contexts);
    for (int c = 0; c < num_contexts; ++c) table[c] = rng.uniform();
    acc.add(ArmIndex(static_cast<int>(rng.below(static_cast<std::uint64_t>(num_arms)))), 3.0 * rng.uniform(),
            LossFunction::tabular(table));
  }
  const double eta = 0.1 + 0.9 * rng.uniform();
  const KnownNuOracle oracle(law);
  const Eigen::VectorXd denominators = oracle.expected_play(acc, eta);

  std::vector<int> candidates;
  for (int k = 0; k < num_arms; ++k)
    if (denominators[k] > 1e-9) candidates.push_back(k);
  UnbiasednessCheck out;
  out.arm = candidates[rng.below(candidates.size())];
  out.context = static_cast<int>(rng.below(C));
  out.truth = rng.uniform();  // l_k(c) at the probed pair

  std::vector<ProbVector> play;
  for (const Context& c : law.support) play.push_back(ftrl_distribution(acc.eval(c), eta, c.active));
  const auto cdf = cdf_of(law.weights);
  MomentSum est;
  for (std::size_t i = 0; i < trials; ++i) {
    const std::size_t c = draw(cdf, rng);
    const ArmIndex arm = sample(play[c], rng);
    est.add(arm.value() == out.arm ? out.truth / denominators[out.arm] : 0.0);
  }
  out.estimate = est.mean();
  out.ci_half_width = kZ99 * est.stderr_of_mean();
  out.pass = std::abs(out.estimate - out.truth) <= out.ci_half_width;
  return out;
}

// ---------------------------------------------------------------- audit

Auditor::Auditor(const Params& params, ContextDistribution distribution)
    : params_(params), distribution_(std::move(distribution)) {
  if (distribution_.support.empty()) throw std::invalid_argument("Auditor: empty context law");
}

void Auditor::on_epoch_begin(int epoch, const Eigen::VectorXd& fhat, const SnapshotHandle& snapshot) {
  if (open_) close_epoch();
  const int K = params_.num_arms;
  const double L = params_.epoch_length;
  EpochAudit a;
  a.epoch = epoch;
  a.fhat = fhat;
  a.f = Eigen::VectorXd::Zero(K);
  for (std::size_t i = 0; i < distribution_.support.size(); ++i)
    a.f += distribution_.weights[i] * snapshot.eval(distribution_.support[i]).weights() / 2.0;
  a.beta = (a.f.array() + params_.gamma) / (a.fhat.array() + 1.5 * params_.gamma);
  a.frequency_event = true;
  for (int k = 0; k < K; ++k) {
    const double radius = 2.0 * std::max(std::sqrt(a.f[k] * params_.iota / L), params_.iota / L);
    if (std::abs(a.fhat[k] - a.f[k]) > radius) a.frequency_event = false;
  }
  epochs_.push_back(std::move(a));
  proxy_ = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(distribution_.support.size()));
  open_ = true;
}

void Auditor::on_loss_observed(int epoch, ArmIndex arm, const LossFunction& loss) {
  if (!open_ || epochs_.back().epoch != epoch) return;
  const double scale = 2.0 / (epochs_.back().f[arm.value()] + params_.gamma);
  for (std::size_t i = 0; i < distribution_.support.size(); ++i)
    proxy_(arm.value(), static_cast<Eigen::Index>(i)) += scale * loss.eval(distribution_.support[i]);
}

void Auditor::on_round(const RoundRecord& record) {
  if (!open_ || epochs_.back().epoch != record.epoch) return;
  ++epochs_.back().rounds;
  if (record.fallback) ++epochs_.back().fallbacks;
}

void Auditor::finish() {
  if (open_) close_epoch();
}

void Auditor::close_epoch() {
  EpochAudit& a = epochs_.back();
  a.max_proxy_loss = proxy_.size() > 0 ? proxy_.maxCoeff() : 0.0;
  a.loss_event = a.max_proxy_loss <= params_.epoch_length + params_.iota / params_.gamma;
  open_ = false;
}

AuditRun audit_run(const Environment& env, const Params& params, std::uint64_t seed) {
  CrossLearner learner(params, env.make_accumulator(), RngStream(seed, 0x2001));
  Auditor auditor(params, env.context_distribution());
  learner.set_observer(&auditor);
  for (std::size_t t = 1; t <= env.horizon(); ++t)
    learner.step(env.context(t), [&env, t](ArmIndex a) { return env.reveal_feedback(t, a); });
  auditor.finish();

  AuditRun run;
  run.epochs = auditor.epochs();
  run.rounds = env.horizon();
  run.fallbacks = learner.fallback_count();
  run.good = std::all_of(run.epochs.begin(), run.epochs.end(),
                         [](const EpochAudit& a) { return a.frequency_event && a.loss_event; });
  return run;
}

AuditSummary summarize(const std::vector<AuditRun>& runs) {
  AuditSummary s;
  s.runs = runs.size();
  std::size_t freq = 0, loss = 0, good_runs = 0, beta_ok = 0, good_rounds = 0, good_fallbacks = 0;
  std::size_t rounds = 0, fallbacks = 0;
  s.beta_min = std::numeric_limits<double>::infinity();
  s.beta_max = -std::numeric_limits<double>::infinity();
  for (const AuditRun& r : runs) {
    rounds += r.rounds;
    fallbacks += r.fallbacks;
    if (r.good) ++good_runs;
    for (const EpochAudit& a : r.epochs) {
      ++s.epochs;
      freq += a.frequency_event;
      loss += a.loss_event;
      if (!r.good) continue;
      good_rounds += a.rounds;
      good_fallbacks += a.fallbacks;
      for (Eigen::Index k = 0; k < a.beta.size(); ++k) {
        ++s.good_epoch_arms;
        beta_ok += a.beta[k] >= 0.5 && a.beta[k] <= 2.0;
        s.beta_min = std::min(s.beta_min, a.beta[k]);
        s.beta_max = std::max(s.beta_max, a.beta[k]);
      }
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  s.frequency_event_fraction = ratio(freq, s.epochs);
  s.loss_event_fraction = ratio(loss, s.epochs);
  s.good_run_fraction = ratio(good_runs, s.runs);
  s.beta_in_range_fraction = ratio(beta_ok, s.good_epoch_arms);
  s.fallback_fraction_good = ratio(good_fallbacks, good_rounds);
  s.fallback_fraction = ratio(fallbacks, rounds);
  return s;
}

// ---------------------------------------------------------------- suites

TabularSpec synthetic_suite() {
  TabularSpec s;
  s.num_contexts = 64;
  s.num_arms = 8;
  s.means = TabularSpec::Means::Planted;
  s.base = 0.5;
  s.gap = 0.2;
  s.stride = 1;
  s.bernoulli_noise = true;
  return s;
}

std::vector<CheckRow> run_verify_suite(VerifyScale scale) {
  const bool full = scale == VerifyScale::Full;
  std::vector<CheckRow> rows;

  {
    const std::size_t trials = 100000;
    int passed = 0, total = 0;
    std::string worst;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::uint64_t id = 0;
    for (const auto& cs : inverse_mean_suite()) {
      const auto r = inverse_mean_bound_check(cs.dist, cs.t, trials, RngStream(0x1e44a1, id++));
      ++total;
      passed += r.pass;
      const double margin = r.rhs - r.lhs;
      if (margin < worst_margin) {
        worst_margin = margin;
        worst = cs.dist.name() + " t=" + std::to_string(cs.t) + fmt(": %.4f vs 1/mu=%.4f", r.lhs, r.rhs);
      }
    }
    rows.push_back({"inverse-mean bound", passed == total,
                    std::to_string(passed) + "/" + std::to_string(total) + " pass; tightest " + worst});
  }

  {
    double worst = 0.0;
    long worst_k = 16;
    std::vector<long> ks;
    for (long k = 16; k <= 200; ++k) ks.push_back(k);
    ks.push_back(1000);
    ks.push_back(10000);
    for (long k : ks) {
      const double v = technical_lemma_eval(k);
      if (v > worst) {
        worst = v;
        worst_k = k;
      }
    }
    rows.push_back({"technical lemma f(k) <= 2", worst <= 2.0,
                    fmt("max f(k) = %.6f at k=", worst) + std::to_string(worst_k)});
  }

  {
    const std::size_t trials = full ? 1000000 : 100000;
    RngStream rng(0x5ab5, 1);
    double worst = 0.0;
    bool ok = true;
    for (int i = 0; i < 10; ++i) {
      const FrozenEpoch st = random_frozen_epoch(6, 12, true, rng);
      const auto r = subsampling_check(st, trials, RngStream(0x5ab5, 100 + static_cast<std::uint64_t>(i)));
      ok = ok && r.pass;
      worst = std::max(worst, r.max_z);
    }
    rows.push_back({"observation probability", ok, fmt("10 frozen states, max |z| = %.3f (limit 4)", worst)});
  }

  {
    const std::size_t trials = full ? 1000000 : 100000;
    int passed = 0;
    for (int i = 0; i < 20; ++i)
      passed += known_nu_unbiasedness_check(5, 8, trials, RngStream(0xe51, static_cast<std::uint64_t>(i))).pass;
    rows.push_back({"known-distribution unbiasedness", passed == 20, std::to_string(passed) + "/20 states within 99% CI"});
  }

  {
    const std::size_t horizon = full ? (1u << 15) : (1u << 13);
    const int n_runs = full ? 100 : 10;
    std::vector<AuditRun> runs;
    for (int i = 0; i < n_runs; ++i) {
      const auto seed = static_cast<std::uint64_t>(i + 1);
      const TabularEnv env(synthetic_suite(), horizon, RngStream(seed, 0x1001));
      runs.push_back(audit_run(env, tune_parameters(env.num_arms(), horizon), seed));
    }
    const AuditSummary s = summarize(runs);
    rows.push_back({"fallback rarity", s.fallback_fraction <= 1e-3,
                    fmt("fallback fraction %.2e over %g runs", s.fallback_fraction, static_cast<double>(s.runs))});
    rows.push_back({"beta range on good runs", s.good_epoch_arms > 0 && s.beta_in_range_fraction == 1.0,
                    fmt("%.4f of (e,k) in [1/2,2], beta in [%.3f, %.3f], good runs %.3f", s.beta_in_range_fraction,
                        s.beta_min, s.beta_max, s.good_run_fraction)});
  }
  return rows;
}

}  // namespace crosslearn
