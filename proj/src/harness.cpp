#include "crosslearn/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "crosslearn/baselines.hpp"

namespace crosslearn {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

bool parse_noise(const json& obj) {
  const auto noise = get_or<std::string>(obj, "noise", "bernoulli");
  if (noise == "bernoulli") return true;
  if (noise == "none") return false;
  throw ConfigError("noise must be 'bernoulli' or 'none'");
}

TabularSpec parse_tabular(const json& e) {
  check_keys(e, {"kind", "contexts", "arms", "means", "base", "gap", "stride", "noise", "drift_amplitude",
                 "drift_period", "nu", "active_prob"},
             "env");
  TabularSpec s;
  s.num_contexts = get_or(e, "contexts", s.num_contexts);
  s.num_arms = get_or(e, "arms", s.num_arms);
  const auto means = get_or<std::string>(e, "means", "planted");
  if (means == "planted") s.means = TabularSpec::Means::Planted;
  else if (means == "random") s.means = TabularSpec::Means::Random;
  else throw ConfigError("env.means must be 'planted' or 'random'");
  s.base = get_or(e, "base", s.base);
  s.gap = get_or(e, "gap", s.gap);
  s.stride = get_or(e, "stride", s.stride);
  s.bernoulli_noise = parse_noise(e);
  s.drift_amplitude = get_or(e, "drift_amplitude", s.drift_amplitude);
  s.drift_period = get_or(e, "drift_period", s.drift_period);
  s.nu = get_or(e, "nu", s.nu);
  s.active_prob = get_or(e, "active_prob", s.active_prob);
  if (s.num_contexts < 1 || s.num_arms < 2) throw ConfigError("env: need contexts >= 1 and arms >= 2");
  if (!s.nu.empty() && static_cast<int>(s.nu.size()) != s.num_contexts)
    throw ConfigError("env.nu must have one weight per context");
  if (!(s.active_prob > 0.0 && s.active_prob <= 1.0)) throw ConfigError("env.active_prob must be in (0, 1]");
  return s;
}

AuctionSpec parse_auction(const json& e) {
  check_keys(e, {"kind", "values", "beta", "discrete_values", "discrete_probs", "competition", "m_low", "m_high",
                 "center", "amplitude", "period", "drift_step", "quadrature_nodes"},
             "env");
  AuctionSpec s;
  const auto values = get_or<std::string>(e, "values", "uniform");
  if (values == "uniform") s.values = AuctionSpec::Values::Uniform;
  else if (values == "beta") s.values = AuctionSpec::Values::Beta;
  else if (values == "discrete") s.values = AuctionSpec::Values::Discrete;
  else throw ConfigError("env.values must be 'uniform', 'beta' or 'discrete'");
  if (e.contains("beta")) {
    const auto ab = get_or<std::vector<double>>(e, "beta", {});
    if (ab.size() != 2) throw ConfigError("env.beta must be [a, b]");
    s.beta_a = ab[0];
    s.beta_b = ab[1];
  }
  s.discrete_values = get_or(e, "discrete_values", s.discrete_values);
  s.discrete_probs = get_or(e, "discrete_probs", s.discrete_probs);
  const auto comp = get_or<std::string>(e, "competition", "iid");
  if (comp == "iid") s.competition = AuctionSpec::Competition::Iid;
  else if (comp == "periodic") s.competition = AuctionSpec::Competition::Periodic;
  else if (comp == "drift") s.competition = AuctionSpec::Competition::Drift;
  else throw ConfigError("env.competition must be 'iid', 'periodic' or 'drift'");
  s.m_low = get_or(e, "m_low", s.m_low);
  s.m_high = get_or(e, "m_high", s.m_high);
  s.center = get_or(e, "center", s.center);
  s.amplitude = get_or(e, "amplitude", s.amplitude);
  s.period = get_or(e, "period", s.period);
  s.drift_step = get_or(e, "drift_step", s.drift_step);
  s.quadrature_nodes = get_or(e, "quadrature_nodes", s.quadrature_nodes);
  return s;
}

SleepingSpec parse_sleeping(const json& e) {
  check_keys(e, {"kind", "arms", "availability", "arm_probs", "subsets", "subset_probs", "means", "noise"}, "env");
  SleepingSpec s;
  s.num_arms = get_or(e, "arms", s.num_arms);
  const auto avail = get_or<std::string>(e, "availability", "bernoulli");
  if (avail == "bernoulli") s.availability = SleepingSpec::Availability::Bernoulli;
  else if (avail == "categorical") s.availability = SleepingSpec::Availability::Categorical;
  else throw ConfigError("env.availability must be 'bernoulli' or 'categorical'");
  s.arm_probs = get_or(e, "arm_probs", s.arm_probs);
  if (e.contains("subsets")) {
    for (const auto& subset : e.at("subsets")) {
      std::uint64_t mask = 0;
      for (int k : subset.get<std::vector<int>>()) {
        if (k < 0 || k >= 63) throw ConfigError("env.subsets: arm index out of range");
        mask |= 1ULL << k;
      }
      s.subsets.push_back(mask);
    }
  }
  s.subset_probs = get_or(e, "subset_probs", s.subset_probs);
  s.means = get_or(e, "means", s.means);
  s.bernoulli_noise = parse_noise(e);
  return s;
}

void format_double(std::ostream& out, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.write(buf, res.ptr - buf);
}

}  // namespace

std::string_view to_string(EnvSpec::Kind kind) {
  switch (kind) {
    case EnvSpec::Kind::Tabular: return "tabular";
    case EnvSpec::Kind::Auction: return "auction";
    case EnvSpec::Kind::Sleeping: return "sleeping";
  }
  return "unknown";
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, {"env", "algorithms", "T", "K", "seeds", "overrides", "output", "record_wall_time", "threads"},
             "config");

  ExperimentConfig cfg;
  if (!root.contains("env")) throw ConfigError("config: missing 'env'");
  const json& env = root.at("env");
  if (!env.is_object()) throw ConfigError("env: expected an object");
  const auto kind = get_or<std::string>(env, "kind", "");
  if (kind == "tabular") {
    cfg.env.kind = EnvSpec::Kind::Tabular;
    cfg.env.tabular = parse_tabular(env);
  } else if (kind == "auction") {
    cfg.env.kind = EnvSpec::Kind::Auction;
    cfg.env.auction = parse_auction(env);
  } else if (kind == "sleeping") {
    cfg.env.kind = EnvSpec::Kind::Sleeping;
    cfg.env.sleeping = parse_sleeping(env);
  } else {
    throw ConfigError("env.kind must be 'tabular', 'auction' or 'sleeping'");
  }

  cfg.algorithms = get_or<std::vector<std::string>>(root, "algorithms", {});
  if (cfg.algorithms.empty()) throw ConfigError("config: 'algorithms' must be a nonempty list");
  std::set<std::string> seen;
  for (const auto& a : cfg.algorithms) {
    if (std::find(std::begin(kKnownAlgorithms), std::end(kKnownAlgorithms), a) == std::end(kKnownAlgorithms))
      throw ConfigError("config: unknown algorithm '" + a + "'");
    if (!seen.insert(a).second) throw ConfigError("config: duplicate algorithm '" + a + "'");
  }

  if (!root.contains("T")) throw ConfigError("config: missing 'T'");
  for (const auto& t : root.at("T")) {
    if (!t.is_number_integer() || t.get<long long>() <= 0) throw ConfigError("config: T entries must be positive integers");
    cfg.horizons.push_back(t.get<std::size_t>());
  }
  if (cfg.horizons.empty()) throw ConfigError("config: T grid is empty");
  for (std::size_t i = 1; i < cfg.horizons.size(); ++i)
    if (cfg.horizons[i] <= cfg.horizons[i - 1]) throw ConfigError("config: T grid must be strictly ascending");

  cfg.num_arms = get_or(root, "K", 0);
  if (cfg.num_arms < 0) throw ConfigError("config: K must be nonnegative");
  if (cfg.num_arms > 0 && cfg.env.kind == EnvSpec::Kind::Tabular) cfg.env.tabular.num_arms = cfg.num_arms;
  if (cfg.num_arms > 0 && cfg.env.kind == EnvSpec::Kind::Sleeping) cfg.env.sleeping.num_arms = cfg.num_arms;
  if (cfg.num_arms > 0 && cfg.env.kind == EnvSpec::Kind::Auction) cfg.env.auction.num_arms = cfg.num_arms;

  if (!root.contains("seeds")) throw ConfigError("config: missing 'seeds'");
  const json& seeds = root.at("seeds");
  if (seeds.is_object()) {
    check_keys(seeds, {"first", "count"}, "seeds");
    const auto first = get_or<std::uint64_t>(seeds, "first", 1);
    const auto count = get_or<std::uint64_t>(seeds, "count", 0);
    for (std::uint64_t i = 0; i < count; ++i) cfg.seeds.push_back(first + i);
  } else {
    cfg.seeds = get_or<std::vector<std::uint64_t>>(root, "seeds", {});
  }
  if (cfg.seeds.empty()) throw ConfigError("config: seeds must be nonempty");

  if (root.contains("overrides")) {
    const json& o = root.at("overrides");
    check_keys(o, {"iota", "L", "gamma", "eta", "unsafe"}, "overrides");
    if (o.contains("iota")) cfg.overrides.iota = get_or(o, "iota", 0.0);
    if (o.contains("L")) cfg.overrides.epoch_length = get_or(o, "L", 0);
    if (o.contains("gamma")) cfg.overrides.gamma = get_or(o, "gamma", 0.0);
    if (o.contains("eta")) cfg.overrides.eta = get_or(o, "eta", 0.0);
    cfg.overrides.unsafe = get_or(o, "unsafe", false);
  }

  cfg.output = get_or<std::string>(root, "output", "");
  cfg.record_wall_time = get_or(root, "record_wall_time", false);
  cfg.threads = get_or(root, "threads", 0);
  if (cfg.threads < 0) throw ConfigError("config: threads must be nonnegative");

  // Catch environment and parameter problems before any run starts.
  for (std::size_t horizon : cfg.horizons) {
    std::unique_ptr<Environment> probe;
    try {
      probe = make_environment(cfg.env, cfg.num_arms, std::min<std::size_t>(horizon, 1), cfg.seeds.front());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("env: ") + e.what());
    }
    const int arms = cfg.env.kind == EnvSpec::Kind::Auction && cfg.num_arms == 0 ? cube_root_ceil(horizon)
                                                                                  : probe->num_arms();
    for (const auto& algo : cfg.algorithms) {
      if (algo == "exp3_per_context" && !probe->finite_contexts())
        throw ConfigError("exp3_per_context needs a finite context set");
      if (algo == "known_nu") {
        try {
          probe->context_distribution();
        } catch (const std::logic_error& e) {
          throw ConfigError(std::string("known_nu: ") + e.what());
        }
      }
      if (algo == "crosslearn" || algo == "known_nu") {
        try {
          resolve_params(arms, horizon, cfg.overrides);
        } catch (const ParamsError& e) {
          throw ConfigError("T=" + std::to_string(horizon) + ": " + e.what());
        }
      }
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::uint64_t env_stream_id(EnvSpec::Kind kind) {
  switch (kind) {
    case EnvSpec::Kind::Tabular: return 0x1001;
    case EnvSpec::Kind::Auction: return 0x1002;
    case EnvSpec::Kind::Sleeping: return 0x1003;
  }
  return 0x1000;
}

std::uint64_t algo_stream_id(const std::string& algo) {
  if (algo == "crosslearn") return 0x2001;
  if (algo == "known_nu") return 0x2002;
  if (algo == "exp3_per_context") return 0x2003;
  throw ConfigError("unknown algorithm '" + algo + "'");
}

std::unique_ptr<Environment> make_environment(const EnvSpec& spec, int num_arms, std::size_t horizon,
                                              std::uint64_t seed) {
  RngStream stream(seed, env_stream_id(spec.kind));
  switch (spec.kind) {
    case EnvSpec::Kind::Tabular: {
      TabularSpec s = spec.tabular;
      if (num_arms > 0) s.num_arms = num_arms;
      return std::make_unique<TabularEnv>(s, horizon, stream);
    }
    case EnvSpec::Kind::Auction: {
      AuctionSpec s = spec.auction;
      if (num_arms > 0) s.num_arms = num_arms;
      return std::make_unique<AuctionEnv>(s, horizon, stream);
    }
    case EnvSpec::Kind::Sleeping: {
      SleepingSpec s = spec.sleeping;
      if (num_arms > 0) s.num_arms = num_arms;
      return std::make_unique<SleepingEnv>(s, horizon, stream);
    }
  }
  throw ConfigError("unknown environment kind");
}

Params resolve_params(int num_arms, std::size_t horizon, const ParamOverrides& overrides) {
  Params p = overrides.iota ? tune_parameters(num_arms, horizon, *overrides.iota)
                            : tune_parameters(num_arms, horizon);
  if (overrides.epoch_length) {
    const double length = *overrides.epoch_length;
    p.epoch_length = *overrides.epoch_length;
    p.gamma = 16.0 * p.iota / length;
    p.eta = std::min(p.gamma / (2.0 * (2.0 * length * p.gamma + p.iota)), std::log(2.0) / (5.0 * length));
  }
  if (overrides.gamma) p.gamma = *overrides.gamma;
  if (overrides.eta) p.eta = *overrides.eta;
  if (!overrides.unsafe) {
    validate(p);
    return p;
  }
  // Unsafe mode still needs parameters the learner can run with.
  if (p.epoch_length < 2 || p.epoch_length % 2 != 0 || static_cast<std::size_t>(p.epoch_length) > horizon ||
      !(p.gamma > 0.0) || !(p.eta > 0.0))
    throw ParamsError("invalid parameters: need an even L in [2, T] and positive gamma, eta");
  return p;
}

std::unique_ptr<Learner> make_learner(const std::string& algo, const Environment& env,
                                      const ParamOverrides& overrides, std::uint64_t seed) {
  RngStream rng(seed, algo_stream_id(algo));
  if (algo == "crosslearn")
    return std::make_unique<CrossLearner>(resolve_params(env.num_arms(), env.horizon(), overrides),
                                          env.make_accumulator(), std::move(rng));
  if (algo == "known_nu") {
    const Params p = resolve_params(env.num_arms(), env.horizon(), overrides);
    return std::make_unique<KnownNuLearner>(p.eta, env.make_accumulator(),
                                            KnownNuOracle(env.context_distribution()), std::move(rng));
  }
  if (!env.finite_contexts()) throw ConfigError("exp3_per_context needs a finite context set");
  return std::make_unique<Exp3PerContext>(env.num_arms(), std::move(rng));
}

std::vector<std::size_t> checkpoints(std::size_t horizon) {
  std::vector<std::size_t> out;
  for (std::size_t c = 1; c < horizon; c *= 2) out.push_back(c);
  if (horizon > 0) out.push_back(horizon);
  return out;
}

RunResult run_once(const Environment& env, Learner& learner) {
  RunResult r;
  r.env = std::string(env.kind());
  r.algo = std::string(learner.name());
  r.horizon = env.horizon();
  const auto marks = checkpoints(env.horizon());
  auto tracker = env.make_regret_tracker();
  std::size_t next = 0;
  for (std::size_t t = 1; t <= env.horizon(); ++t) {
    const Context ctx = env.context(t);
    const ArmIndex arm = learner.step(ctx, [&env, t](ArmIndex a) { return env.reveal_feedback(t, a); });
    tracker->record(t, ctx, arm);
    if (t == marks[next]) {
      r.regret.emplace_back(t, env.regret_scale() * tracker->regret());
      ++next;
    }
  }
  r.fallback_count = learner.fallback_count();
  return r;
}

int resolve_thread_count(int requested) {
  int n = requested;
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* cap = std::getenv("CROSSLEARN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && v > 0) n = std::min(n, static_cast<int>(v));
  }
  return std::max(1, n);
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config) {
  const std::size_t n_algos = config.algorithms.size();
  const std::size_t n_groups = config.horizons.size() * config.seeds.size();
  std::vector<RunResult> results(n_groups * n_algos);

  // One task per (T, seed): the environment is built once and shared by
  // every algorithm.
  auto run_group = [&](std::size_t g) {
    const std::size_t horizon = config.horizons[g / config.seeds.size()];
    const std::uint64_t seed = config.seeds[g % config.seeds.size()];
    const auto env = make_environment(config.env, config.num_arms, horizon, seed);
    for (std::size_t a = 0; a < n_algos; ++a) {
      const auto start = std::chrono::steady_clock::now();
      auto learner = make_learner(config.algorithms[a], *env, config.overrides, seed);
      RunResult r = run_once(*env, *learner);
      const auto stop = std::chrono::steady_clock::now();
      r.run_id = g * n_algos + a;
      r.seed = seed;
      r.algo = config.algorithms[a];
      if (config.record_wall_time) r.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      results[r.run_id] = std::move(r);
    }
  };

  const int threads = std::min<int>(resolve_thread_count(config.threads), static_cast<int>(n_groups));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t g; (g = next.fetch_add(1)) < n_groups;) {
      try {
        run_group(g);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

void write_csv(const std::vector<RunResult>& results, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const RunResult& r : results) {
    for (const auto& [checkpoint, regret] : r.regret) {
      out << r.run_id << ',' << r.seed << ',' << r.algo << ',' << r.env << ',' << r.horizon << ',' << checkpoint
          << ',';
      format_double(out, regret);
      out << ',' << r.fallback_count << ',';
      format_double(out, r.wall_ms);
      out << '\n';
    }
  }
}

std::vector<CsvRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ConfigError("results CSV: unexpected header");
  std::vector<CsvRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) f.push_back(field);
    if (f.size() != 9) throw ConfigError("results CSV: wrong field count on line " + std::to_string(line_no));
    try {
      rows.push_back({std::stoull(f[0]), std::stoull(f[1]), f[2], f[3], std::stoull(f[4]), std::stoull(f[5]),
                      std::stod(f[6]), std::stoull(f[7]), std::stod(f[8])});
    } catch (const std::exception&) {
      throw ConfigError("results CSV: malformed number on line " + std::to_string(line_no));
    }
  }
  return rows;
}

LineFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("ols: need at least 3 points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("ols: x values are all equal");
  LineFit fit{};
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
  return fit;
}

std::pair<double, double> bootstrap_mean_ci(const std::vector<double>& samples, int resamples, double level,
                                            std::uint64_t seed) {
  if (samples.empty() || resamples < 1) throw std::invalid_argument("bootstrap: nothing to resample");
  RngStream rng(seed, 0xb007);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (double& m : means) {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) total += samples[rng.below(samples.size())];
    m = total / static_cast<double>(samples.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  const auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
    return means[std::min(idx, means.size() - 1)];
  };
  return {at(tail), at(1.0 - tail)};
}

std::vector<ScalingFit> fit_scaling(const std::vector<CsvRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::vector<double>>> groups;
  for (const CsvRow& r : rows)
    if (r.checkpoint == r.horizon) groups[{r.algo, r.env}][r.horizon].push_back(r.cum_regret);
  if (groups.empty()) throw std::invalid_argument("scaling: no final-checkpoint rows");

  std::vector<ScalingFit> fits;
  for (const auto& [key, by_horizon] : groups) {
    const std::string label = key.first + "/" + key.second;
    if (by_horizon.size() < 4) throw std::invalid_argument("scaling: " + label + " needs at least 4 T values");
    ScalingFit fit;
    fit.algo = key.first;
    fit.env = key.second;
    std::vector<double> x, y;
    for (const auto& [horizon, regrets] : by_horizon) {
      if (regrets.size() < 10)
        throw std::invalid_argument("scaling: " + label + " needs at least 10 seeds at T=" + std::to_string(horizon));
      const double mean = std::accumulate(regrets.begin(), regrets.end(), 0.0) / static_cast<double>(regrets.size());
      if (!(mean > 0.0))
        throw std::invalid_argument("scaling: " + label + " has nonpositive mean regret at T=" + std::to_string(horizon));
      const auto [lo, hi] = bootstrap_mean_ci(regrets, 10000, 0.95, mix64(horizon));
      fit.points.push_back({horizon, regrets.size(), mean, lo, hi});
      x.push_back(std::log(static_cast<double>(horizon)));
      y.push_back(std::log(mean));
    }
    const LineFit line = ols(x, y);
    fit.slope = line.slope;
    fit.slope_stderr = line.slope_stderr;
    fit.intercept = line.intercept;
    fits.push_back(std::move(fit));
  }
  return fits;
}

}  // namespace crosslearn
