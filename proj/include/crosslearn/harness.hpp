#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosslearn/crosslearn.hpp"
#include "crosslearn/envs.hpp"
#include "crosslearn/learner.hpp"

namespace crosslearn {

/// Raised for malformed or inconsistent experiment configs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EnvSpec {
  enum class Kind { Tabular, Auction, Sleeping };
  Kind kind = Kind::Tabular;
  TabularSpec tabular;
  AuctionSpec auction;
  SleepingSpec sleeping;
};

std::string_view to_string(EnvSpec::Kind kind);

struct ParamOverrides {
  std::optional<double> iota;
  std::optional<int> epoch_length;
  std::optional<double> gamma;
  std::optional<double> eta;
  bool unsafe = false;
};

struct ExperimentConfig {
  EnvSpec env;
  std::vector<std::string> algorithms;
  std::vector<std::size_t> horizons;
  int num_arms = 0;  // 0 keeps the environment's own K
  std::vector<std::uint64_t> seeds;
  ParamOverrides overrides;
  std::string output;
  bool record_wall_time = false;
  int threads = 0;  // 0: CROSSLEARN_THREADS or hardware concurrency
};

/// Parses and validates a JSON config. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

inline constexpr const char* kKnownAlgorithms[] = {"crosslearn", "known_nu", "exp3_per_context"};

/// Stream ids separating environment and learner randomness.
std::uint64_t env_stream_id(EnvSpec::Kind kind);
std::uint64_t algo_stream_id(const std::string& algo);

std::unique_ptr<Environment> make_environment(const EnvSpec& spec, int num_arms, std::size_t horizon,
                                              std::uint64_t seed);

/// Tuned parameters for (K, T) with the overrides applied. L overrides
/// re-derive gamma and eta from the tuning formulas; explicit gamma and eta
/// overrides replace them. Validated unless `unsafe` is set.
Params resolve_params(int num_arms, std::size_t horizon, const ParamOverrides& overrides);

std::unique_ptr<Learner> make_learner(const std::string& algo, const Environment& env,
                                      const ParamOverrides& overrides, std::uint64_t seed);

/// Powers of two below T, then T.
std::vector<std::size_t> checkpoints(std::size_t horizon);

struct RunResult {
  std::size_t run_id = 0;
  std::uint64_t seed = 0;
  std::string algo;
  std::string env;
  std::size_t horizon = 0;
  std::vector<std::pair<std::size_t, double>> regret;  // (checkpoint, cumulative regret)
  std::size_t fallback_count = 0;
  double wall_ms = 0.0;
};

/// One run: drives `learner` through `env` and records regret at the
/// checkpoints in the environment's reporting unit.
RunResult run_once(const Environment& env, Learner& learner);

/// Runs every (T, seed, algorithm) combination. Results are ordered by run
/// id (T-major, then seed, then algorithm) whatever the thread count.
std::vector<RunResult> run_experiment(const ExperimentConfig& config);

int resolve_thread_count(int requested);

inline constexpr const char* kCsvHeader =
    "run_id,seed,algo,env,T,checkpoint,cum_regret,fallback_count,wall_ms";

void write_csv(const std::vector<RunResult>& results, std::ostream& out);

struct CsvRow {
  std::size_t run_id;
  std::uint64_t seed;
  std::string algo;
  std::string env;
  std::size_t horizon;
  std::size_t checkpoint;
  double cum_regret;
  std::size_t fallback_count;
  double wall_ms;
};

std::vector<CsvRow> read_csv(std::istream& in);

struct ScalingPoint {
  std::size_t horizon;
  std::size_t num_seeds;
  double mean;
  double ci_low;   // bootstrap 95%
  double ci_high;
};

struct ScalingFit {
  std::string algo;
  std::string env;
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
};

/// OLS of log(mean regret) on log(T) using x-y pairs.
struct LineFit {
  double slope;
  double slope_stderr;
  double intercept;
};
LineFit ols(const std::vector<double>& x, const std::vector<double>& y);

/// Percentile bootstrap CI of the mean.
std::pair<double, double> bootstrap_mean_ci(const std::vector<double>& samples, int resamples,
                                            double level, std::uint64_t seed);

/// Fits one exponent per (algo, env) from final-checkpoint regrets. Needs at
/// least 4 horizons with at least 10 seeds each and positive mean regret.
std::vector<ScalingFit> fit_scaling(const std::vector<CsvRow>& rows);

}  // namespace crosslearn
