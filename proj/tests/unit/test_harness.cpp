#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "crosslearn/harness.hpp"

using namespace crosslearn;

namespace {

const char* kSmallConfig = R"({
  "env": {"kind": "tabular", "contexts": 6, "arms": 3},
  "algorithms": ["crosslearn", "known_nu", "exp3_per_context"],
  "T": [256, 1000],
  "seeds": {"first": 11, "count": 5},
  "overrides": {"iota": 0.5, "unsafe": true}
})";

std::string csv_of(const std::vector<RunResult>& results) {
  std::ostringstream out;
  write_csv(results, out);
  return out.str();
}

std::vector<CsvRow> power_law_rows(double exponent, double scale) {
  std::vector<CsvRow> rows;
  std::size_t id = 0;
  for (std::size_t T : {1000, 4000, 16000, 64000, 256000})
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      // Symmetric spread around the power law keeps the mean exact.
      const double spread = (seed % 2 ? 1.0 : -1.0) * 0.1 * static_cast<double>(seed / 2);
      const double regret = scale * std::pow(static_cast<double>(T), exponent) * (1.0 + spread / 10.0);
      rows.push_back({id++, seed, "algo", "env", T, T, regret, 0, 0.0});
      rows.push_back({id++, seed, "algo", "env", T, T / 2, 1.0, 0, 0.0});  // ignored
    }
  return rows;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config parsing") {
    const ExperimentConfig cfg = parse_config(kSmallConfig);
    CHECK(cfg.env.kind == EnvSpec::Kind::Tabular);
    CHECK(cfg.env.tabular.num_contexts == 6);
    CHECK(cfg.env.tabular.num_arms == 3);
    CHECK(cfg.algorithms.size() == 3);
    CHECK(cfg.horizons == std::vector<std::size_t>{256, 1000});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{11, 12, 13, 14, 15});
    REQUIRE(cfg.overrides.iota);
    CHECK(*cfg.overrides.iota == 0.5);
    CHECK(cfg.overrides.unsafe);
    CHECK_FALSE(cfg.record_wall_time);

    const ExperimentConfig auction = parse_config(R"({
      "env": {"kind": "auction", "values": "beta", "beta": [2, 3], "competition": "periodic", "period": 50},
      "algorithms": ["crosslearn"], "T": [64], "seeds": [1, 2]})");
    CHECK(auction.env.auction.values == AuctionSpec::Values::Beta);
    CHECK(auction.env.auction.beta_b == 3.0);
    CHECK(auction.env.auction.competition == AuctionSpec::Competition::Periodic);

    const ExperimentConfig sleeping = parse_config(R"({
      "env": {"kind": "sleeping", "arms": 4, "availability": "categorical",
              "subsets": [[0, 1], [2, 3]], "subset_probs": [0.5, 0.5]},
      "algorithms": ["known_nu"], "T": [64], "seeds": [1]})");
    CHECK(sleeping.env.sleeping.subsets == std::vector<std::uint64_t>{3, 12});
  }

  TEST_CASE("config errors") {
    const char* bad[] = {
        "not json",
        R"({"env": {"kind": "tabular"}, "algorithms": ["crosslearn"], "T": [0], "seeds": [1]})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["crosslearn"], "T": [100, 50], "seeds": [1]})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["crosslearn"], "T": [100], "seeds": []})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["ucb"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["exp3_per_context", "exp3_per_context"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "tabular", "colour": 1}, "algorithms": ["crosslearn"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["crosslearn"], "T": [100], "seeds": [1], "extra": 1})",
        R"({"env": {"kind": "galaxy"}, "algorithms": ["crosslearn"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "auction"}, "algorithms": ["exp3_per_context"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "sleeping", "arms": 20}, "algorithms": ["known_nu"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "tabular", "gap": 3}, "algorithms": ["crosslearn"], "T": [100], "seeds": [1]})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["crosslearn"], "T": [100000], "seeds": [1],
            "overrides": {"iota": 0.1}})",
        R"({"env": {"kind": "tabular"}, "algorithms": ["crosslearn"], "T": [100], "seeds": [1],
            "overrides": {"L": 7, "unsafe": true}})",
    };
    for (const char* text : bad) {
      CAPTURE(text);
      CHECK_THROWS_AS(parse_config(text), ConfigError);
    }
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("run cardinality, order and determinism across thread counts") {
    ExperimentConfig cfg = parse_config(kSmallConfig);
    cfg.threads = 1;
    const auto serial = run_experiment(cfg);
    REQUIRE(serial.size() == 2 * 5 * 3);
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(serial[i].run_id == i);
      CHECK(serial[i].horizon == cfg.horizons[i / 15]);
      CHECK(serial[i].seed == cfg.seeds[(i / 3) % 5]);
      CHECK(serial[i].algo == cfg.algorithms[i % 3]);
      CHECK(serial[i].wall_ms == 0.0);
      CHECK(serial[i].regret.back().first == serial[i].horizon);
    }
    cfg.threads = 4;
    CHECK(csv_of(run_experiment(cfg)) == csv_of(serial));
  }

  TEST_CASE("algorithms share the environment of their (T, seed) group") {
    ExperimentConfig cfg = parse_config(kSmallConfig);
    cfg.threads = 1;
    const auto results = run_experiment(cfg);
    // Same env and same learner stream: re-running one algorithm alone reproduces its row.
    ExperimentConfig solo = cfg;
    solo.algorithms = {"exp3_per_context"};
    const auto alone = run_experiment(solo);
    for (std::size_t g = 0; g < 10; ++g) CHECK(alone[g].regret == results[3 * g + 2].regret);
  }

  TEST_CASE("CSV format") {
    ExperimentConfig cfg = parse_config(kSmallConfig);
    cfg.algorithms = {"crosslearn"};
    cfg.horizons = {256};
    cfg.seeds = {1};
    const std::string text = csv_of(run_experiment(cfg));
    std::istringstream in(text);
    std::string header;
    std::getline(in, header);
    CHECK(header == "run_id,seed,algo,env,T,checkpoint,cum_regret,fallback_count,wall_ms");
    std::istringstream again(text);
    const auto rows = read_csv(again);
    REQUIRE(rows.size() == checkpoints(256).size());
    CHECK(rows.back().checkpoint == 256);
    CHECK(rows.front().algo == "crosslearn");
    CHECK(rows.front().env == "tabular");

    std::vector<RunResult> one(1);
    one[0].algo = "a";
    one[0].env = "e";
    one[0].horizon = 4;
    one[0].regret = {{4, 0.1}};
    one[0].wall_ms = 2.5;
    CHECK(csv_of(one) == std::string(kCsvHeader) + "\n0,0,a,e,4,4,0.1,0,2.5\n");

    std::istringstream wrong("run_id,seed\n");
    CHECK_THROWS_AS(read_csv(wrong), ConfigError);
    std::istringstream short_row(std::string(kCsvHeader) + "\n1,2,3\n");
    CHECK_THROWS_AS(read_csv(short_row), ConfigError);
  }

  TEST_CASE("checkpoints") {
    CHECK(checkpoints(1) == std::vector<std::size_t>{1});
    CHECK(checkpoints(8) == std::vector<std::size_t>{1, 2, 4, 8});
    CHECK(checkpoints(10) == std::vector<std::size_t>{1, 2, 4, 8, 10});
  }

  TEST_CASE("scaling fit recovers planted exponents") {
    for (double exponent : {0.5, 2.0 / 3.0}) {
      const auto fits = fit_scaling(power_law_rows(exponent, 3.0));
      REQUIRE(fits.size() == 1);
      CHECK(fits[0].slope == doctest::Approx(exponent).epsilon(1e-12));
      CHECK(fits[0].slope_stderr < 1e-10);
      CHECK(std::exp(fits[0].intercept) == doctest::Approx(3.0).epsilon(1e-10));
      REQUIRE(fits[0].points.size() == 5);
      for (const auto& p : fits[0].points) {
        CHECK(p.num_seeds == 12);
        CHECK(p.ci_low <= p.mean);
        CHECK(p.mean <= p.ci_high);
      }
    }
  }

  TEST_CASE("scaling fit errors") {
    auto rows = power_law_rows(0.5, 1.0);
    std::erase_if(rows, [](const CsvRow& r) { return r.horizon == 1000 || r.horizon == 4000; });
    CHECK_THROWS_AS(fit_scaling(rows), std::invalid_argument);
    rows = power_law_rows(0.5, 1.0);
    std::erase_if(rows, [](const CsvRow& r) { return r.horizon == 1000 && r.seed >= 5; });
    CHECK_THROWS_AS(fit_scaling(rows), std::invalid_argument);
    rows = power_law_rows(0.5, 1.0);
    for (auto& r : rows) r.cum_regret = -1.0;
    CHECK_THROWS_AS(fit_scaling(rows), std::invalid_argument);
    CHECK_THROWS_AS(fit_scaling({}), std::invalid_argument);
    CHECK_THROWS_AS(ols({1, 2}, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(ols({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
  }

  TEST_CASE("ols against a hand computation") {
    const LineFit fit = ols({0, 1, 2, 3}, {1, 3, 2, 5});
    CHECK(fit.slope == doctest::Approx(1.1).epsilon(1e-14));
    CHECK(fit.intercept == doctest::Approx(1.1).epsilon(1e-14));
    // rss = 2.7, stderr = sqrt(2.7 / 2 / 5)
    CHECK(fit.slope_stderr == doctest::Approx(std::sqrt(0.27)).epsilon(1e-14));
  }

  TEST_CASE("bootstrap interval") {
    std::vector<double> xs;
    RngStream rng(3, 3);
    for (int i = 0; i < 400; ++i) xs.push_back(rng.uniform());
    const auto [lo, hi] = bootstrap_mean_ci(xs, 10000, 0.95, 1);
    double mean = 0.0;
    for (double x : xs) mean += x / 400.0;
    const double se = std::sqrt(1.0 / 12.0 / 400.0);
    CHECK(lo < mean);
    CHECK(hi > mean);
    CHECK((hi - lo) == doctest::Approx(2 * 1.96 * se).epsilon(0.1));
    CHECK(bootstrap_mean_ci(xs, 100, 0.95, 7) == bootstrap_mean_ci(xs, 100, 0.95, 7));
    CHECK(bootstrap_mean_ci({2.0, 2.0}, 50, 0.9, 1) == std::pair{2.0, 2.0});
    CHECK_THROWS_AS(bootstrap_mean_ci({}, 10, 0.95, 1), std::invalid_argument);
  }

  TEST_CASE("parameter overrides") {
    const Params tuned = resolve_params(4, 10000, {});
    CHECK(tuned.iota == tune_parameters(4, 10000).iota);

    ParamOverrides L_only;
    L_only.epoch_length = 500;
    const Params p = resolve_params(4, 10000, L_only);
    CHECK(p.epoch_length == 500);
    CHECK(p.gamma == doctest::Approx(16.0 * p.iota / 500));
    CHECK(p.eta == doctest::Approx(std::min(p.gamma / (2 * (1000 * p.gamma + p.iota)), std::log(2.0) / 2500)));

    ParamOverrides bad_eta;
    bad_eta.eta = 0.5;
    CHECK_THROWS_AS(resolve_params(4, 10000, bad_eta), ParamsError);
    bad_eta.unsafe = true;
    CHECK(resolve_params(4, 10000, bad_eta).eta == 0.5);
    bad_eta.epoch_length = 20001;
    CHECK_THROWS_AS(resolve_params(4, 10000, bad_eta), ParamsError);
  }

  TEST_CASE("stream ids and learner construction") {
    const std::set<std::uint64_t> ids{env_stream_id(EnvSpec::Kind::Tabular), env_stream_id(EnvSpec::Kind::Auction),
                                      env_stream_id(EnvSpec::Kind::Sleeping), algo_stream_id("crosslearn"),
                                      algo_stream_id("known_nu"), algo_stream_id("exp3_per_context")};
    CHECK(ids.size() == 6);
    CHECK_THROWS_AS(algo_stream_id("ucb"), ConfigError);
    EnvSpec spec;
    spec.kind = EnvSpec::Kind::Auction;
    const auto env = make_environment(spec, 0, 1000, 1);
    CHECK(env->num_arms() == 10);
    CHECK_THROWS_AS(make_learner("exp3_per_context", *env, {}, 1), ConfigError);
    CHECK(make_learner("crosslearn", *env, {}, 1)->name() == "crosslearn");
  }

  TEST_CASE("thread count cap") {
    CHECK(resolve_thread_count(3) >= 1);
    ::setenv("CROSSLEARN_THREADS", "2", 1);
    CHECK(resolve_thread_count(8) == 2);
    CHECK(resolve_thread_count(1) == 1);
    ::setenv("CROSSLEARN_THREADS", "junk", 1);
    CHECK(resolve_thread_count(5) == 5);
    ::unsetenv("CROSSLEARN_THREADS");
  }
}
