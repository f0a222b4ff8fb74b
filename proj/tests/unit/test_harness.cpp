#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "rsopt/errors.hpp"
#include "rsopt/harness.hpp"

using namespace rsopt;

namespace {

const char* kSmall = R"({
  // Two-regime quad_exp at toy budgets.
  "problem": "quad_exp",
  "methods": ["RSOBSO", "NOPSO"],
  "macros": 2,
  "seed": 5,
  "h": 40, "u": 2, "t_max": 3, "m": 10, "N_MC": 8, "n0": 3,
  "burn_in": 20,
  "regimes": 2,
  "ei": {"restarts": 3, "seed_points": 10},
  "fit": {"starts": 2, "max_evals_per_start": 30},
  "prior": {"rate": {"shape": 1, "rate": 1}},
  "truth": {"emissions": [{"rate": 1}, {"rate": 0.1}], "transition": [[0.9, 0.1], [0.1, 0.9]]}
})";

GapTrace trace(Method m, int macro, std::vector<double> cum, std::vector<int> regimes) {
  GapTrace t;
  t.method = m;
  t.macro = macro;
  double prev = 0.0;
  for (std::size_t i = 0; i < cum.size(); ++i) {
    t.rows.push_back({static_cast<int>(i), {1.0}, regimes[i], cum[i] - prev, cum[i]});
    prev = cum[i];
  }
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("experiment config parsing") {
  const auto spec = parse_experiment(kSmall);
  CHECK(spec.problem == "quad_exp");
  CHECK(spec.methods == std::vector<Method>{Method::RSOBSO, Method::NOPSO});
  CHECK(spec.macros == 2);
  CHECK(spec.run.h == 40);
  CHECK(spec.run.n_mc == 8);
  CHECK(spec.run.ei.restarts == 3);
  REQUIRE(spec.truth);
  CHECK(spec.truth->emissions[1].rate() == 0.1);
  CHECK(spec.truth->transition(0, 1) == 0.1);
}

TEST_CASE("config errors are reported") {
  std::string bad = kSmall;
  bad.replace(bad.find("\"macros\""), 8, "\"macroz\"");
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);
  CHECK_THROWS_AS(parse_experiment(R"({"problem": "quad_exp", "h": 10})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment(R"({"problem": "quad_exp", "h": -1, "truth": {"emissions": [{"rate": 1}], "transition": [[1]]}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_theta(R"({"emissions": [{"rate": 1}], "transition": [[0.5, 0.5]]})", EmissionKind::Exponential, 1.0),
                  ConfigError);
  CHECK_THROWS_AS(load_experiment("/nonexistent/exp.json"), ConfigError);
}

TEST_CASE("gap report of a single trace and of identical traces") {
  const auto one = gap_report({trace(Method::RSOBSO, 0, {1.0, 3.0}, {0, 1})});
  REQUIRE(one.size() == 2);
  CHECK(one[1].mean_cum_gap == 3.0);
  CHECK(one[1].se == 0.0);
  CHECK(one[1].regime == 1);

  const auto two = gap_report({trace(Method::NOPSO, 0, {2.0, 5.0}, {0, 0}), trace(Method::NOPSO, 1, {2.0, 5.0}, {0, 1})});
  CHECK(two[1].se == 0.0);
  CHECK(two[1].regime == -1);
  CHECK(two[0].regime == 0);
}

TEST_CASE("gap report matches hand arithmetic on three traces") {
  const auto rows = gap_report({trace(Method::NOBSO, 0, {1.0, 3.0}, {0, 0}), trace(Method::RSOBSO, 0, {0.5, 0.5}, {0, 0}),
                                trace(Method::NOBSO, 1, {2.0, 3.0}, {0, 0}), trace(Method::NOBSO, 2, {4.0, 6.0}, {0, 0})});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == Method::NOBSO);
  CHECK(rows[2].method == Method::RSOBSO);
  CHECK(std::abs(rows[0].mean_cum_gap - 7.0 / 3.0) < 1e-12);
  CHECK(std::abs(rows[0].se - std::sqrt(7.0) / 3.0) < 1e-12);
  CHECK(std::abs(rows[1].mean_cum_gap - 4.0) < 1e-12);
  CHECK(std::abs(rows[1].se - 1.0) < 1e-12);
}

TEST_CASE("traces CSV round trip") {
  const auto dir = testing::scratch_dir("traces");
  std::vector<GapTrace> traces{trace(Method::RSOBSO, 0, {0.1, 0.35}, {1, 0}), trace(Method::NOKSO, 3, {1.0 / 3.0, 2.5}, {0, 0})};
  traces[1].seed = 123456789012345ULL;
  traces[1].rows[1].x_hat = {2.0 / 7.0};
  write_traces_csv(traces, dir / "t.csv");
  const auto back = read_traces_csv(dir / "t.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].method == Method::NOKSO);
  CHECK(back[1].macro == 3);
  CHECK(back[1].seed == 123456789012345ULL);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(back[i].rows.size() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(back[i].rows[r].x_hat == traces[i].rows[r].x_hat);
      CHECK(back[i].rows[r].gap == traces[i].rows[r].gap);
      CHECK(back[i].rows[r].cum_gap == traces[i].rows[r].cum_gap);
      CHECK(back[i].rows[r].regime == traces[i].rows[r].regime);
    }
  }
}

TEST_CASE("experiment run: traces, parity, prefix sums and outputs") {
  auto spec = parse_experiment(kSmall);
  spec.out_dir = testing::scratch_dir("experiment");
  spec.threads = 2;
  const auto res = run_experiment(spec);
  CHECK(res.ok());
  REQUIRE(res.traces.size() == 4);
  for (const auto& t : res.traces) {
    REQUIRE(t.rows.size() == 3);
    double cum = 0.0;
    for (const auto& r : t.rows) {
      cum += r.gap;
      CHECK(r.cum_gap == cum);
      CHECK(r.gap >= -1e-12);
      CHECK(r.regime >= 0);
    }
  }
  for (const char* f : {"traces.csv", "summary.csv", "timing.log", "streams/macro_0.csv", "streams/macro_1.csv",
                        "runs/RSOBSO_0/stages.csv", "runs/NOPSO_1/design.csv"}) {
    CHECK(std::filesystem::exists(spec.out_dir / f));
  }
  CHECK_FALSE(std::filesystem::exists(spec.out_dir / "failures.csv"));
  CHECK(slurp(spec.out_dir / "summary.csv").rfind("method,stage,mean_cum_gap,se,regime\n", 0) == 0);

  const auto s0 = experiment_stream(spec, 0);
  CHECK(s0.values == read_stream_csv(spec.out_dir / "streams/macro_0.csv").values);
  CHECK(s0.values != experiment_stream(spec, 1).values);
  CHECK(s0.size() == required_observations(spec.run));

  auto solo = spec;
  solo.methods = {Method::RSOBSO};
  solo.out_dir = testing::scratch_dir("experiment-solo");
  CHECK(experiment_stream(solo, 0).values == s0.values);
  const auto alone = run_experiment(solo);
  REQUIRE(alone.traces.size() == 2);
  for (const auto& t : res.traces) {
    if (t.method != Method::RSOBSO) continue;
    const auto& u = alone.traces[static_cast<std::size_t>(t.macro)];
    CHECK(u.seed == t.seed);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      CHECK(u.rows[i].x_hat == t.rows[i].x_hat);
      CHECK(u.rows[i].gap == t.rows[i].gap);
    }
  }
  CHECK(std::filesystem::exists(solo.out_dir / "runs/RSOBSO_1/stages.csv"));
}

TEST_CASE("experiment output is reproducible across thread counts") {
  auto a = parse_experiment(kSmall);
  a.macros = 1;
  a.out_dir = testing::scratch_dir("repro-a");
  auto b = a;
  b.threads = 3;
  b.out_dir = testing::scratch_dir("repro-b");
  run_experiment(a);
  run_experiment(b);
  for (const char* f : {"traces.csv", "summary.csv", "streams/macro_0.csv", "runs/RSOBSO_0/stages.csv", "runs/NOPSO_0/design.csv"}) {
    CHECK(slurp(a.out_dir / f) == slurp(b.out_dir / f));
  }
}

TEST_CASE("one macro and one method give exactly one trace") {
  auto spec = parse_experiment(kSmall);
  spec.macros = 1;
  spec.methods = {Method::NOPSO};
  spec.run.t_max = 1;
  const auto res = run_experiment(spec);
  CHECK(res.traces.size() == 1);
  CHECK(res.summary.size() == 1);
}

TEST_CASE("consistency study: point mass at the truth has no error") {
  const QuadExpProblem p;
  const auto truth = testing::two_regime_exponential(1.0, 0.1, 0.9);
  const std::vector<double> x{4.0};
  ConsistencyOptions opt;
  opt.macros = 3;
  opt.point_mass = true;
  const auto rows = consistency_study(p, truth, x, {20, 50}, 1, opt);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.errors.size() == 3);
    CHECK(r.mean_abs_error < 1e-12);
  }
  CHECK_THROWS_AS(consistency_study(InventoryProblem{}, truth, std::vector<double>{5.0, 80.0}, {20}, 1, opt), Unavailable);
}
