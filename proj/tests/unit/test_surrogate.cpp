#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rsopt/errors.hpp"
#include "rsopt/random.hpp"
#include "rsopt/surrogate.hpp"
#include "../support/oracles.hpp"

using namespace rsopt;

namespace {

KernelHyperparams hyper_1d(double sigma2 = 1.0, double lx = 1.0, double ll = 1.0, double noise = 0.0) {
  KernelHyperparams h;
  h.sigma_g2 = sigma2;
  h.lengthscales_x = {lx};
  h.lengthscales_lambda = {ll};
  h.noise_var = noise;
  return h;
}

DesignPoint dp(double x, double lambda, double y, int m = 1, double y_var = 0.0) { return {{x}, {lambda}, y, m, y_var}; }

std::vector<DesignPoint> five_point() {
  return {dp(0.0, 1.0, 1.0), dp(0.7, 1.2, -0.5), dp(1.5, 0.8, 0.3), dp(2.2, 1.0, 2.0), dp(3.0, 1.4, -1.0)};
}

}  // namespace

TEST_CASE("kernel hyperparameters are validated") {
  auto h = hyper_1d();
  h.sigma_g2 = 0.0;
  CHECK_THROWS(h.validate());
  h = hyper_1d();
  h.noise_var = -1.0;
  CHECK_THROWS(h.validate());
}

TEST_CASE("single noiseless point is interpolated") {
  const SurrogateModel gp({dp(0.5, 2.0, 3.25)}, hyper_1d(2.0));
  const Point p{{0.5}, {2.0}};
  const auto [m, k] = gp.posterior_mean_cov(p, p);
  CHECK(std::abs(m - 3.25) < 1e-8);
  CHECK(std::abs(k) < 1e-8);
}

TEST_CASE("far queries revert to the prior") {
  const SurrogateModel gp(five_point(), hyper_1d(1.7, 0.5, 0.5));
  const Point far{{40.0}, {30.0}};
  CHECK(std::abs(gp.mean(far)) < 1e-6);
  CHECK(std::abs(gp.variance(far) - 1.7) < 1e-6);
}

TEST_CASE("posterior matches a dense linear solve") {
  const auto h = hyper_1d(1.3, 0.8, 0.6);
  const SurrogateModel gp(five_point(), h);
  // The mean solves the unjittered system; the covariance uses the jittered factor.
  const oracle::DenseGp exact{five_point(), h, 0.0};
  const oracle::DenseGp dense{five_point(), h, gp.jitter()};
  for (double x = -0.5; x <= 3.5; x += 0.37) {
    const Point p{{x}, {1.1}};
    const Point q{{3.0 - x}, {0.9}};
    const auto [m, k] = gp.posterior_mean_cov(p, q);
    CHECK(std::abs(m - exact.mean(p)) < 1e-8);
    CHECK(std::abs(k - dense.cov(p, q)) < 1e-8);
  }
  CHECK((gp.factor_product() - gp.covariance_matrix()).cwiseAbs().maxCoeff() < 1e-8 * gp.covariance_matrix().cwiseAbs().maxCoeff());
}

TEST_CASE("covariance symmetry and the prior-variance bound") {
  const auto h = hyper_1d(0.9, 0.5, 0.7, 0.05);
  const SurrogateModel gp(five_point(), h);
  Rng rng(derive_seed(2));
  for (int i = 0; i < 200; ++i) {
    const Point p{{uniform(rng, -1, 4)}, {uniform(rng, 0.5, 1.5)}};
    const Point q{{uniform(rng, -1, 4)}, {uniform(rng, 0.5, 1.5)}};
    CHECK(std::abs(gp.posterior_mean_cov(p, q).second - gp.posterior_mean_cov(q, p).second) < 1e-12);
    CHECK(gp.variance(p) <= h.sigma_g2 + 1e-8);
    CHECK(gp.variance(p) >= 0.0);
  }
}

TEST_CASE("adding a point never raises the posterior variance") {
  const auto h = hyper_1d(1.0, 0.6, 0.5, 0.01);
  SurrogateModel gp(five_point(), h);
  std::vector<double> before;
  for (double x = -1.0; x <= 4.0; x += 0.25) before.push_back(gp.variance({{x}, {1.0}}));
  gp.add_point(dp(1.1, 1.05, 0.4));
  std::size_t i = 0;
  for (double x = -1.0; x <= 4.0; x += 0.25) CHECK(gp.variance({{x}, {1.0}}) <= before[i++] + 1e-8);
}

TEST_CASE("incremental update equals a full rebuild") {
  const auto h = hyper_1d(1.0, 0.9, 0.4, 0.02);
  SurrogateModel inc(five_point(), h);
  auto all = five_point();
  for (const auto& p : {dp(0.35, 1.1, 0.2), dp(2.6, 0.7, -0.4), dp(1.9, 1.3, 1.1)}) {
    inc.add_point(p);
    all.push_back(p);
  }
  const SurrogateModel full(all, h);
  REQUIRE(inc.size() == full.size());
  for (double x = -0.5; x <= 3.5; x += 0.1) {
    const Point p{{x}, {1.0}};
    CHECK(std::abs(inc.mean(p) - full.mean(p)) < 1e-10);
    CHECK(std::abs(inc.variance(p) - full.variance(p)) < 1e-10);
  }

  inc.add_point(dp(0.35, 1.1, 0.2));
  CHECK(std::isfinite(inc.mean({{0.35}, {1.1}})));
}

TEST_CASE("new noiseless point is interpolated after add_point") {
  SurrogateModel gp(five_point(), hyper_1d(1.0, 0.5, 0.5));
  gp.add_point(dp(1.1, 0.95, 7.0));
  CHECK(std::abs(gp.mean({{1.1}, {0.95}}) - 7.0) < 1e-6);
}

TEST_CASE("noisy duplicate points average by precision") {
  const double s = 1.5;
  const double n = 0.4;
  const SurrogateModel gp({dp(0.0, 1.0, 2.0), dp(0.0, 1.0, 4.0)}, hyper_1d(s, 1.0, 1.0, n));
  CHECK(gp.jitter() <= 1e-9 * s);
  CHECK(gp.mean({{0.0}, {1.0}}) == doctest::Approx(s * 6.0 / (2.0 * s + n)).epsilon(1e-10));
  CHECK(gp.variance({{0.0}, {1.0}}) == doctest::Approx(s - 2.0 * s * s / (2.0 * s + n)).epsilon(1e-10));
}

TEST_CASE("noiseless duplicate escalates the jitter") {
  const SurrogateModel gp({dp(0.0, 1.0, 2.0), dp(0.0, 1.0, 2.0)}, hyper_1d());
  CHECK(gp.jitter() > 0.0);
  CHECK(gp.jitter() <= 1e-4);
  CHECK(std::abs(gp.mean({{0.0}, {1.0}}) - 2.0) < 1e-4);
}

TEST_CASE("replication counts scale the noise term") {
  auto h = hyper_1d(1.0, 1.0, 1.0, 0.8);
  const SurrogateModel one({dp(0.0, 1.0, 1.0, 1)}, h);
  const SurrogateModel four({dp(0.0, 1.0, 1.0, 4)}, h);
  CHECK(one.mean({{0.0}, {1.0}}) == doctest::Approx(1.0 / 1.8));
  CHECK(four.mean({{0.0}, {1.0}}) == doctest::Approx(1.0 / 1.2));

  h.per_point_noise = true;
  const SurrogateModel own({dp(0.0, 1.0, 1.0, 4, 2.0), dp(5.0, 1.0, 1.0, 1, 9.0)}, h);
  CHECK(own.covariance_matrix()(0, 0) == doctest::Approx(1.0 + 0.5).epsilon(1e-8));
  CHECK(own.covariance_matrix()(1, 1) == doctest::Approx(1.0 + 0.8).epsilon(1e-8));
  CHECK(own.noise_at({{0.2}, {1.0}}) == 2.0);
  CHECK(own.noise_at({{4.5}, {1.0}}) == 0.8);
  CHECK(one.noise_at({{4.5}, {1.0}}) == 0.8);
}

TEST_CASE("pooled noise variance") {
  CHECK(pooled_noise_var({dp(0, 1, 0, 1, 5.0)}) == 0.0);
  CHECK(pooled_noise_var({dp(0, 1, 0, 3, 2.0), dp(1, 1, 0, 5, 5.0)}) == doctest::Approx((2 * 2.0 + 4 * 5.0) / 6.0));
}

TEST_CASE("truncation keeps the newest points") {
  SurrogateModel gp(five_point(), hyper_1d());
  gp.truncate_oldest(2);
  REQUIRE(gp.size() == 2);
  CHECK(gp.design()[0].y_bar == 2.0);
  CHECK(gp.design()[1].y_bar == -1.0);
}

TEST_CASE("aggregate collapses to the GP for a single atom") {
  const auto h = hyper_1d(1.2, 0.7, 0.5, 0.01);
  const SurrogateModel gp(five_point(), h);
  const AggregateModel agg(gp, {Atom{{1.05}, 1.0}});
  for (double x = -0.5; x <= 3.5; x += 0.3) {
    const std::vector<double> xv{x};
    const std::vector<double> x2{x + 0.4};
    CHECK(agg.mean(xv) == doctest::Approx(gp.mean({xv, {1.05}})).epsilon(1e-12));
    CHECK(std::abs(agg.cov(xv, x2) - gp.posterior_mean_cov({xv, {1.05}}, {x2, {1.05}}).second) < 1e-12);
  }
}

TEST_CASE("aggregate matches the direct double sum over three draws of two regimes") {
  const auto h = hyper_1d(1.1, 0.8, 0.45, 0.02);
  const SurrogateModel gp(five_point(), h);
  const double w[3][2] = {{0.3, 0.7}, {0.55, 0.45}, {0.9, 0.1}};
  const double lam[3][2] = {{0.85, 1.3}, {0.9, 1.25}, {0.8, 1.4}};
  std::vector<Atom> atoms;
  for (int i = 0; i < 3; ++i) {
    for (int l = 0; l < 2; ++l) atoms.push_back({{lam[i][l]}, w[i][l] / 3.0});
  }
  const AggregateModel agg(gp, atoms);
  const oracle::DenseGp exact{five_point(), h, 0.0};
  const oracle::DenseGp dense{five_point(), h, gp.jitter()};
  for (double x = -0.5; x <= 3.5; x += 0.5) {
    const std::vector<double> xv{x};
    const std::vector<double> x2{1.7 - 0.3 * x};
    CHECK(std::abs(agg.mean(xv) - oracle::aggregate_mean(exact, atoms, xv)) < 1e-10);
    CHECK(std::abs(agg.cov(xv, x2) - oracle::aggregate_cov(dense, atoms, xv, x2)) < 1e-10);

    double mean_sum = 0.0;
    double cov_sum = 0.0;
    for (const auto& a : atoms) {
      mean_sum += a.weight * gp.mean({xv, a.lambda});
      for (const auto& b : atoms) cov_sum += a.weight * b.weight * gp.posterior_mean_cov({xv, a.lambda}, {x2, b.lambda}).second;
    }
    CHECK(std::abs(agg.mean(xv) - mean_sum) < 1e-12);
    CHECK(std::abs(agg.cov(xv, x2) - cov_sum) < 1e-12);
  }
}

TEST_CASE("aggregate with all weight on one regime averages that regime only") {
  const auto h = hyper_1d(1.0, 0.7, 0.5);
  const SurrogateModel gp(five_point(), h);
  const AggregateModel agg(gp, {Atom{{0.9}, 0.5}, Atom{{2.0}, 0.0}, Atom{{1.2}, 0.5}, Atom{{2.5}, 0.0}});
  const std::vector<double> x{1.3};
  CHECK(std::abs(agg.mean(x) - 0.5 * (gp.mean({x, {0.9}}) + gp.mean({x, {1.2}}))) < 1e-12);
}

TEST_CASE("aggregate mean is linear in the outputs") {
  const auto h = hyper_1d(1.0, 0.7, 0.5, 0.03);
  auto scaled = five_point();
  for (auto& p : scaled) p.y_bar *= -3.5;
  const std::vector<Atom> atoms{{{0.9}, 0.4}, {{1.3}, 0.6}};
  const AggregateModel a(SurrogateModel(five_point(), h), atoms);
  const AggregateModel b(SurrogateModel(scaled, h), atoms);
  for (double x = -0.5; x <= 3.5; x += 0.5) {
    const std::vector<double> xv{x};
    CHECK(b.mean(xv) == doctest::Approx(-3.5 * a.mean(xv)).epsilon(1e-12));
  }
}

TEST_CASE("aggregate add_point matches a fresh aggregate") {
  const auto h = hyper_1d(1.0, 0.7, 0.5, 0.03);
  const std::vector<Atom> atoms{{{0.9}, 0.4}, {{1.3}, 0.6}};
  AggregateModel inc(SurrogateModel(five_point(), h), atoms);
  inc.add_point(dp(1.0, 1.1, 0.5));
  auto all = five_point();
  all.push_back(dp(1.0, 1.1, 0.5));
  const AggregateModel full(SurrogateModel(all, h), atoms);
  for (double x = -0.5; x <= 3.5; x += 0.5) {
    const std::vector<double> xv{x};
    CHECK(std::abs(inc.mean(xv) - full.mean(xv)) < 1e-10);
    CHECK(std::abs(inc.cov(xv, xv) - full.cov(xv, xv)) < 1e-10);
  }
}

TEST_CASE("atoms from posterior draws carry w / N_MC") {
  const auto stream = testing::scalar_stream({0.5, 3.0});
  const auto d = PosteriorDraws::point_mass(testing::two_regime_exponential(1.0, 0.1), stream, 4);
  const auto atoms = atoms_from_draws(d);
  REQUIRE(atoms.size() == 8);
  double total = 0.0;
  for (const auto& a : atoms) total += a.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(atoms[0].lambda == std::vector<double>{1.0});
  CHECK(atoms[0].weight == doctest::Approx(d.weights[0](0) / 4.0));
}

TEST_CASE("fit recovers the lengthscale of a sampled GP") {
  KernelHyperparams truth;
  truth.sigma_g2 = 1.0;
  truth.lengthscales_x = {1.0};
  std::vector<DesignPoint> design;
  for (int i = 0; i < 60; ++i) design.push_back({{10.0 * i / 59.0}, {}, 0.0, 1, 0.0});
  Eigen::MatrixXd k(60, 60);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 60; ++j) {
      k(i, j) = oracle::kernel(truth, {design[static_cast<std::size_t>(i)].x, {}}, {design[static_cast<std::size_t>(j)].x, {}});
    }
    k(i, i) += 1e-8;
  }
  const Eigen::MatrixXd l = k.llt().matrixL();
  Rng rng(derive_seed(61));
  Eigen::VectorXd z(60);
  for (auto& v : z) v = standard_normal(rng);
  const Eigen::VectorXd y = l * z;
  for (int i = 0; i < 60; ++i) design[static_cast<std::size_t>(i)].y_bar = y(i);

  FitOptions opt;
  opt.pool_noise = false;
  opt.noise_var = 1e-6;
  const auto fit = fit_hyperparams(design, default_bounds(design), 3, opt);
  CHECK(fit.lengthscales_x[0] >= 0.5);
  CHECK(fit.lengthscales_x[0] <= 2.0);
  CHECK(fit.lengthscales_lambda.empty());

  const auto again = fit_hyperparams(design, default_bounds(design), 3, opt);
  CHECK(again.sigma_g2 == fit.sigma_g2);
  CHECK(again.lengthscales_x == fit.lengthscales_x);
}

TEST_CASE("constant outputs drive the signal variance to its lower bound") {
  std::vector<DesignPoint> design;
  for (int i = 0; i < 12; ++i) design.push_back(dp(i * 0.5, 1.0 + 0.1 * i, 4.0));
  const auto b = default_bounds(design);
  const auto fit = fit_hyperparams(design, b, 1);
  CHECK(fit.sigma_g2 <= b.sigma_lo * 1.01);
  CHECK(fit.mean_offset == doctest::Approx(4.0));
  CHECK_THROWS_AS(fit_hyperparams({dp(0, 1, 0)}, b, 1), InsufficientSamples);
}

TEST_CASE("design CSV round trip") {
  const auto dir = testing::scratch_dir("design");
  std::vector<DesignPoint> d{{{0.1, 2.0}, {0.05}, 3.5, 10, 1.25}, {{1.0 / 3.0, -2.0}, {1.0}, -7.0, 1, 0.0}};
  write_design_csv(d, dir / "d.csv");
  const auto back = read_design_csv(dir / "d.csv");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].x == d[i].x);
    CHECK(back[i].lambda == d[i].lambda);
    CHECK(back[i].y_bar == d[i].y_bar);
    CHECK(back[i].m == d[i].m);
    CHECK(back[i].y_var == d[i].y_var);
  }
}
