#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "rsopt/errors.hpp"
#include "rsopt/optimizer.hpp"

using namespace rsopt;

namespace {

RunConfig small_config(Method method = Method::RSOBSO) {
  RunConfig c;
  c.method = method;
  c.h = 60;
  c.t_max = 3;
  c.u = 2;
  c.m = 20;
  c.n_mc = 10;
  c.burn_in = 30;
  c.n0 = 3;
  c.regimes = 2;
  c.seed = 7;
  c.prior.rate = {1.0, 1.0};
  c.ei.restarts = 4;
  c.ei.seed_points = 12;
  c.fit.starts = 2;
  c.fit.max_evals_per_start = 40;
  c.hdp_steps = 20;
  c.hdp_burn_in = 20;
  return c;
}

ObservationStream one_regime_stream(double rate, std::size_t t, std::uint64_t seed) {
  return simulate(ThetaVector({Emission::exponential(rate)}, TransitionMatrix::identity(1)), t, seed);
}

void check_same(const RunResult& a, const RunResult& b) {
  REQUIRE(a.stages.size() == b.stages.size());
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    CHECK(a.stages[i].x_hat == b.stages[i].x_hat);
    CHECK(a.stages[i].mu_hat == b.stages[i].mu_hat);
    CHECK(a.stages[i].n_points == b.stages[i].n_points);
  }
  REQUIRE(a.design.size() == b.design.size());
  for (std::size_t i = 0; i < a.design.size(); ++i) {
    CHECK(a.design[i].x == b.design[i].x);
    CHECK(a.design[i].lambda == b.design[i].lambda);
    CHECK(a.design[i].y_bar == b.design[i].y_bar);
  }
}

/// Quadratic problem whose simulator fails after a fixed number of calls.
class FailingProblem final : public Problem {
 public:
  explicit FailingProblem(int ok_calls) : ok_calls_(ok_calls) {}
  std::string name() const override { return "failing"; }
  Box bounds() const override { return inner_.bounds(); }
  EmissionKind emission_kind() const override { return EmissionKind::Exponential; }
  std::vector<double> simulate(std::span<const double> x, const InputSampler& sampler, int m, Rng& rng) const override {
    if (calls_++ >= ok_calls_) throw Error("simulator crashed");
    return inner_.simulate(x, sampler, m, rng);
  }

 private:
  QuadExpProblem inner_;
  int ok_calls_;
  mutable int calls_ = 0;
};

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : {Method::RSOBSO, Method::RSOPSO, Method::NOBSO, Method::NOPSO, Method::NOKSO, Method::HDPHMM_RSOBSO}) {
    CHECK(method_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(method_from_string("SGD"), ConfigError);
}

TEST_CASE("configuration errors surface before any stage") {
  const QuadExpProblem p;
  auto c = small_config();
  CHECK_THROWS_AS(run_method(p, one_regime_stream(1.0, 10, 1), c), ConfigError);
  c.n_mc = 0;
  CHECK_THROWS_AS(run_method(p, one_regime_stream(1.0, 100, 1), c), ConfigError);
  CHECK(required_observations(small_config()) == 63);
}

TEST_CASE("design accounting after every stage") {
  const QuadExpProblem p;
  const auto stream = simulate(testing::two_regime_exponential(1.0, 0.1, 0.9), 80, 3);
  for (Method m : {Method::RSOBSO, Method::RSOPSO, Method::NOBSO, Method::NOPSO, Method::NOKSO}) {
    const auto r = run_method(p, stream, small_config(m));
    REQUIRE(r.stages.size() == 3);
    CHECK(r.initial_points == 6);
    for (const auto& s : r.stages) {
      CHECK(s.n_points == 6 + static_cast<std::size_t>(s.t + 1) * 2);
      CHECK(p.bounds().contains(s.x_hat));
    }
    CHECK(r.design.size() == 12);
    const std::size_t dl = m == Method::NOKSO ? 0 : 1;
    for (const auto& d : r.design) CHECK(d.lambda.size() == dl);
  }
}

TEST_CASE("without acquisition the decision is the best initial design point") {
  const QuadExpProblem p;
  auto c = small_config();
  c.u = 0;
  c.polish = false;
  c.t_max = 1;
  const auto r = run_method(p, simulate(testing::two_regime_exponential(), 80, 2), c);
  REQUIRE(r.stages.size() == 1);
  CHECK(r.stages[0].n_points == 6);
  const bool found = std::any_of(r.design.begin(), r.design.end(), [&](const DesignPoint& d) { return d.x == r.stages[0].x_hat; });
  CHECK(found);
}

TEST_CASE("runs are deterministic given the seed") {
  const QuadExpProblem p;
  const auto stream = simulate(testing::two_regime_exponential(), 80, 5);
  check_same(run_method(p, stream, small_config()), run_method(p, stream, small_config()));
  auto other = small_config();
  other.seed = 8;
  CHECK(run_method(p, stream, other).design[0].y_bar != run_method(p, stream, small_config()).design[0].y_bar);
}

TEST_CASE("single-regime run lands near the posterior-mean optimum") {
  const QuadExpProblem p;
  const auto stream = one_regime_stream(0.2, 120, 11);
  auto c = small_config();
  c.regimes = 1;
  c.u = 30;
  c.t_max = 5;
  c.m = 50;
  c.n0 = 10;
  c.n_mc = 30;
  c.h = 100;
  c.ei = EiOptions{};
  c.fit = FitOptions{};
  const auto r = run_method(p, stream, c);
  for (const auto& s : r.stages) {
    double sum = 0.0;
    const std::size_t n = static_cast<std::size_t>(c.h + s.t);
    for (std::size_t i = 0; i < n; ++i) sum += stream.values[i].value;
    const double rate_hat = (c.prior.rate.shape + static_cast<double>(n)) / (c.prior.rate.rate + sum);
    CHECK(std::abs(s.x_hat[0] * rate_hat - 1.0) < 0.10);
  }
}

TEST_CASE("point-mass posterior collapses every parametric method") {
  const QuadExpProblem p;
  const auto stream = one_regime_stream(0.25, 80, 4);
  auto c = small_config();
  c.regimes = 1;
  c.fixed_theta = ThetaVector({Emission::exponential(0.25)}, TransitionMatrix::identity(1));
  c.method = Method::RSOBSO;
  const auto base = run_method(p, stream, c);
  for (Method m : {Method::RSOPSO, Method::NOBSO, Method::NOPSO}) {
    c.method = m;
    check_same(base, run_method(p, stream, c));
  }

  auto two = small_config();
  two.fixed_theta = testing::two_regime_exponential(1.0, 0.1, 0.8);
  const auto rs = run_method(p, stream, two);
  two.method = Method::RSOPSO;
  check_same(rs, run_method(p, stream, two));
}

TEST_CASE("regime-count inference: threshold overflow and ordering") {
  const auto stream = simulate(testing::two_regime_exponential(1.0, 0.05), 70, 9);
  PriorSpec prior;
  prior.rate = {1.0, 1.0};
  const auto over = infer_regime_count(stream, 5, 10, 1.1, prior, 1, 5);
  CHECK(over.clamped);
  CHECK(over.r_hat == 1);
  for (int s : over.counts) CHECK(s == 0);

  const auto rc = infer_regime_count(stream, 10, 50, 1.0 / std::sqrt(70.0), prior, 2, 50);
  CHECK(rc.counts.size() == 50);
  CHECK(1 <= rc.r_hat);
  CHECK(rc.r_hat <= rc.s_max);
  CHECK(rc.s_max <= 10);
  CHECK(rc.r_hat >= 2);
  CHECK(rc.r_hat <= 4);
  CHECK_THROWS(infer_regime_count(stream, 1, 10, 0.1, prior, 1));
}

// Known deviation: with Gamma(5,1) concentrations the non-sticky sampler
// splits one regime over near-identical components.
TEST_CASE("regime-count inference on single-regime data" * doctest::may_fail()) {
  PriorSpec prior;
  prior.rate = {1.0, 1.0};
  const auto stream = one_regime_stream(1.0, 200, 12);
  const auto rc = infer_regime_count(stream, 10, 100, 1.0 / std::sqrt(200.0), prior, 3, 100);
  CHECK(rc.r_hat <= 2);
}

TEST_CASE("forcing the regime count reduces HDP-HMM RSOBSO to RSOBSO") {
  const QuadExpProblem p;
  const auto stream = simulate(testing::two_regime_exponential(), 80, 6);
  auto c = small_config(Method::HDPHMM_RSOBSO);
  c.force_regimes = 2;
  check_same(run_method(p, stream, c), run_method(p, stream, small_config(Method::RSOBSO)));
}

TEST_CASE("HDP-HMM RSOBSO raises the truncation to S_max + 1") {
  const QuadExpProblem p;
  const auto stream = simulate(testing::two_regime_exponential(1.0, 0.05), 80, 8);
  const auto r = run_method(p, stream, small_config(Method::HDPHMM_RSOBSO));
  REQUIRE(r.stages.size() == 3);
  CHECK(r.stages[0].n_max == 10);
  for (std::size_t t = 0; t + 1 < r.stages.size(); ++t) CHECK(r.stages[t + 1].n_max == r.stages[t].s_max + 1);
  for (const auto& s : r.stages) {
    CHECK(s.regimes_used >= 1);
    CHECK(s.regimes_used <= s.s_max);
    CHECK(s.s_max <= s.n_max);
  }
}

TEST_CASE("a failing stage aborts with the completed stages") {
  auto c = small_config();
  // 6 initial evaluations, 2 per stage: the 11th call is in stage 2.
  const FailingProblem p(10);
  const auto stream = simulate(testing::two_regime_exponential(), 80, 1);
  try {
    run_method(p, stream, c);
    FAIL("expected StageFailure");
  } catch (const StageFailure& e) {
    CHECK(e.stage() == 2);
    CHECK(e.partial().stages.size() == 2);
    CHECK(e.partial().design.size() == 10);
    CHECK(std::string(e.what()).find("simulator crashed") != std::string::npos);
  }
}

TEST_CASE("stage atoms per method") {
  const auto stream = testing::scalar_stream({0.5, 2.0, 1.0});
  const auto d = PosteriorDraws::point_mass(testing::two_regime_exponential(), stream, 3);
  CHECK(stage_atoms(Method::RSOBSO, d).size() == 6);
  CHECK(stage_atoms(Method::RSOPSO, d).size() == 2);
  const auto k = stage_atoms(Method::NOKSO, d);
  REQUIRE(k.size() == 1);
  CHECK(k[0].lambda.empty());
  CHECK(k[0].weight == 1.0);
}
