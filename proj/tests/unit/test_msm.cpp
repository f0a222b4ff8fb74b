#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "rsopt/errors.hpp"
#include "rsopt/msm.hpp"
#include "rsopt/random.hpp"
#include "../support/oracles.hpp"

using namespace rsopt;

namespace {

ThetaVector random_theta(int r, Rng& rng) {
  std::vector<Emission> e;
  for (int k = 0; k < r; ++k) e.push_back(Emission::exponential(uniform(rng, 0.05, 3.0)));
  Eigen::MatrixXd a(r, r);
  for (int i = 0; i < r; ++i) {
    std::vector<double> ones(static_cast<std::size_t>(r), 1.0);
    a.row(i) = dirichlet_draw(rng, ones).transpose();
  }
  std::vector<double> ones(static_cast<std::size_t>(r), 1.0);
  return ThetaVector(std::move(e), TransitionMatrix::normalized(a), dirichlet_draw(rng, ones));
}

Eigen::MatrixXd four_regime_transition() {
  Eigen::MatrixXd a(4, 4);
  a << 0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.05, 0.05, 0.1, 0.8;
  return a;
}

}  // namespace

TEST_CASE("emission densities and support") {
  const auto e = Emission::exponential(2.0);
  CHECK(e.density({0.5, 0}) == doctest::Approx(2.0 * std::exp(-1.0)));
  CHECK(e.density({-1.0, 0}) == 0.0);
  CHECK_THROWS_AS(Emission::exponential(0.0), std::invalid_argument);
  CHECK_THROWS_AS(Emission::gaussian(0.0, -1.0), std::invalid_argument);
  const auto b = Emission::bivariate(0.0, 1.0, 1.0, 2.0);
  CHECK(b.density({0.0, 1.0}) == doctest::Approx(1.0 / (2.0 * M_PI * 2.0)));
}

TEST_CASE("transition matrix rows must sum to one") {
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  CHECK_THROWS(TransitionMatrix(bad));
  const auto n = TransitionMatrix::normalized(bad);
  CHECK(n.matrix().row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single regime filter is degenerate") {
  const ThetaVector th({Emission::exponential(1.0)}, TransitionMatrix::identity(1));
  const auto s = filter(th, testing::scalar_stream({0.3, 7.0, 2.0}));
  CHECK(s.probs.size() == 1);
  CHECK(s.probs(0) == 1.0);
  CHECK(s.t == 3);
}

TEST_CASE("absorbing chain stays in its start regime") {
  const ThetaVector th({Emission::exponential(1.0), Emission::exponential(0.1)}, TransitionMatrix::identity(2),
                       Eigen::Vector2d(1.0, 0.0));
  const auto s = filter(th, testing::scalar_stream({0.1, 30.0, 12.0, 0.5}));
  CHECK(s.probs(0) == doctest::Approx(1.0));
  CHECK(s.probs(1) == doctest::Approx(0.0));
}

TEST_CASE("filter matches path enumeration on a three-observation stream") {
  const auto th = testing::two_regime_exponential(1.0, 0.1, 0.9);
  const auto stream = testing::scalar_stream({0.2, 5.0, 12.0});
  const auto f = filter(th, stream);
  const auto e = oracle::filter_by_enumeration(th, stream);
  for (int k = 0; k < 2; ++k) CHECK(std::abs(f.probs(k) - e(k)) < 1e-10);
}

TEST_CASE("filter and likelihood match enumeration on random instances") {
  Rng rng(derive_seed(11));
  for (int r = 1; r <= 3; ++r) {
    for (std::size_t t = 1; t <= 6; ++t) {
      for (int rep = 0; rep < 5; ++rep) {
        const auto th = random_theta(r, rng);
        const auto stream = simulate(th, t, derive_seed(rng()));
        const auto f = filter(th, stream);
        const auto e = oracle::filter_by_enumeration(th, stream);
        CHECK((f.probs - e).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(std::abs(log_likelihood(th, stream) - oracle::log_likelihood_by_enumeration(th, stream)) < 1e-9);
        CHECK(f.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.probs.minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("filter tolerates observations deep in the tail") {
  const auto th = testing::two_regime_exponential(5.0, 0.01, 0.9);
  const auto f = filter(th, testing::scalar_stream({500.0, 900.0, 0.001}));
  CHECK(f.probs.sum() == doctest::Approx(1.0));
  CHECK(std::isfinite(f.probs(0)));
}

TEST_CASE("observation outside the support raises AllZeroLikelihood with its index") {
  const auto th = testing::two_regime_exponential();
  try {
    filter(th, testing::scalar_stream({1.0, 2.0, -3.0}));
    FAIL("expected AllZeroLikelihood");
  } catch (const AllZeroLikelihood& e) {
    CHECK(e.index() == 2);
  }
}

TEST_CASE("predictive weights") {
  Eigen::MatrixXd a(2, 2);
  a << 0.7, 0.3, 0.2, 0.8;
  const ThetaVector th({Emission::exponential(1.0), Emission::exponential(0.5)}, TransitionMatrix(a));
  FilterState s{Eigen::Vector2d(1.0, 0.0), 1};
  const auto w = predictive_weights(s, th);
  CHECK(w(0) == doctest::Approx(0.7));
  CHECK(w(1) == doctest::Approx(0.3));

  Eigen::MatrixXd sym(2, 2);
  sym << 0.6, 0.4, 0.4, 0.6;
  const ThetaVector ts({Emission::exponential(1.0), Emission::exponential(0.5)}, TransitionMatrix(sym));
  const auto w2 = predictive_weights(FilterState{Eigen::Vector2d(0.5, 0.5), 1}, ts);
  CHECK(w2(0) == doctest::Approx(0.5));

  Eigen::MatrixXd a3(3, 3);
  a3 << 0.7, 0.15, 0.15, 0.15, 0.7, 0.15, 0.1, 0.1, 0.8;
  const ThetaVector t3({Emission::gaussian_known_var(2, 3), Emission::gaussian_known_var(4, 3), Emission::gaussian_known_var(10, 3)},
                       TransitionMatrix(a3));
  const auto f = filter(t3, simulate(t3, 5, 3));
  const Eigen::VectorXd direct = a3.transpose() * f.probs;
  CHECK((predictive_weights(f, t3) - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity transition leaves the filter unchanged") {
  const ThetaVector th({Emission::exponential(1.0), Emission::exponential(0.2)}, TransitionMatrix::identity(2));
  const auto f = filter(th, testing::scalar_stream({0.4, 3.0}));
  CHECK((predictive_weights(f, th) - f.probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("log likelihood of independent single-regime observations") {
  const ThetaVector th({Emission::exponential(1.0)}, TransitionMatrix::identity(1));
  CHECK(log_likelihood(th, testing::scalar_stream({1.0})) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(log_likelihood(th, testing::scalar_stream({1.0, 2.0})) == doctest::Approx(-3.0).epsilon(1e-14));
}

TEST_CASE("log likelihood is invariant under consistent relabeling") {
  Rng rng(derive_seed(5));
  for (int rep = 0; rep < 10; ++rep) {
    const auto th = random_theta(3, rng);
    const auto stream = simulate(th, 12, derive_seed(rng()));
    const std::vector<int> perm{2, 0, 1};
    std::vector<Emission> e;
    Eigen::MatrixXd a(3, 3);
    Eigen::VectorXd init(3);
    for (int i = 0; i < 3; ++i) {
      e.push_back(th.emissions[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
      init(i) = th.initial(perm[static_cast<std::size_t>(i)]);
      for (int j = 0; j < 3; ++j) a(i, j) = th.transition(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const ThetaVector permuted(std::move(e), TransitionMatrix(a), init);
    CHECK(std::abs(log_likelihood(th, stream) - log_likelihood(permuted, stream)) < 1e-10);
  }
}

TEST_CASE("simulate: absorbing chain, determinism and transition frequencies") {
  const ThetaVector absorbing({Emission::exponential(1.0), Emission::exponential(0.1)}, TransitionMatrix::identity(2),
                              Eigen::Vector2d(1.0, 0.0));
  const auto s = simulate(absorbing, 100, 1);
  REQUIRE(s.regimes);
  for (int r : *s.regimes) CHECK(r == 0);

  const ThetaVector th({Emission::exponential(1.0 / 30), Emission::exponential(1.0 / 20), Emission::exponential(0.1),
                        Emission::exponential(1.0)},
                       TransitionMatrix(four_regime_transition()));
  const auto a = simulate(th, 100000, 42);
  const auto b = simulate(th, 100000, 42);
  CHECK(a.values == b.values);
  CHECK(*a.regimes == *b.regimes);

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(4, 4);
  for (std::size_t i = 1; i < a.size(); ++i) counts((*a.regimes)[i - 1], (*a.regimes)[i]) += 1.0;
  for (int i = 0; i < 4; ++i) {
    const double row = counts.row(i).sum();
    for (int j = 0; j < 4; ++j) CHECK(std::abs(counts(i, j) / row - four_regime_transition()(i, j)) < 0.02);
  }
}

TEST_CASE("stream CSV round trip keeps values and labels") {
  const auto dir = testing::scratch_dir("msm-csv");
  const auto th = testing::two_regime_exponential();
  const auto s = simulate(th, 25, 9);
  write_stream_csv(s, dir / "s.csv");
  const auto back = read_stream_csv(dir / "s.csv");
  CHECK(back.values == s.values);
  REQUIRE(back.regimes);
  CHECK(*back.regimes == *s.regimes);

  ObservationStream bi;
  bi.dim = 2;
  bi.values = {{0.01, -0.02}, {0.03, 0.04}};
  write_stream_csv(bi, dir / "b.csv");
  const auto bb = read_stream_csv(dir / "b.csv");
  CHECK(bb.dim == 2);
  CHECK(bb.values == bi.values);
  CHECK_FALSE(bb.regimes);
}
