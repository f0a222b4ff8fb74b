#include "rsopt/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <boost/math/distributions/normal.hpp>

#include "rsopt/csv.hpp"
#include "rsopt/errors.hpp"

namespace rsopt {
namespace {

struct Suff {
  double n = 0.0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double v) {
    n += 1.0;
    sum += v;
    sumsq += v * v;
  }
  double mean() const { return sum / n; }
  double sd() const {
    if (n < 2.0) return 0.0;
    const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
    return std::sqrt(var);
  }
  // Σ (x - m)^2
  double centered_ss(double m) const { return sumsq - 2.0 * m * sum + n * m * m; }
};

double clamp_inside(double v, const UniformPrior& u) {
  const double pad = 1e-6 * (u.hi - u.lo);
  return std::clamp(v, u.lo + pad, u.hi - pad);
}

// Slice update of (mean, sd) for one Gaussian coordinate. `sd_known` < 0
// means the sd is also sampled.
/// Exact draw from N(mu, sd²) restricted to [lo, hi] by inverting the CDF
/// on the side of the interval nearer the mode.
double truncated_normal(Rng& rng, double mu, double sd, double lo, double hi) {
  double a = (lo - mu) / sd;
  double b = (hi - mu) / sd;
  const bool flip = a > 0.0;
  if (flip) {
    std::tie(a, b) = std::pair(-b, -a);
  }
  const boost::math::normal_distribution<double> z;
  const double pa = boost::math::cdf(z, a);
  const double pb = boost::math::cdf(z, b);
  double v = 0.0;
  if (pb - pa <= 0.0) {
    v = b;
  } else {
    const double u = pa + uniform01(rng) * (pb - pa);
    v = u <= 0.0 ? b : std::clamp(boost::math::quantile(z, u), a, b);
  }
  if (flip) v = -v;
  return std::clamp(mu + sd * v, lo, hi);
}

std::pair<double, double> gaussian_update(const Suff& s, double mean0, double sd0, bool sd_known,
                                          const PriorSpec& prior, Rng& rng) {
  double mean = clamp_inside(mean0, prior.mean);
  double sd = sd0;
  if (!sd_known) sd = clamp_inside(sd0, prior.sd);

  mean = truncated_normal(rng, s.sum / s.n, sd / std::sqrt(s.n), prior.mean.lo, prior.mean.hi);

  if (!sd_known) {
    const double ss = s.centered_ss(mean);
    auto sd_logf = [&](double v) { return -s.n * std::log(v) - ss / (2.0 * v * v); };
    const double sd_width = std::max(2.0 * sd / std::sqrt(std::max(s.n, 1.0)), 1e-8 * (prior.sd.hi - prior.sd.lo));
    sd = slice_sample(sd, sd_logf, sd_width, prior.sd.lo, prior.sd.hi, rng);
  }
  return {mean, sd};
}

std::vector<double> canonical_key(const Emission& e) {
  switch (e.kind()) {
    case EmissionKind::Exponential: return {e.rate()};
    case EmissionKind::GaussianKnownVar:
    case EmissionKind::GaussianUnknown: return {e.mean()};
    case EmissionKind::DiagonalBivariateGaussian: {
      auto p = e.params();
      return {p[0], p[1]};
    }
  }
  return {};
}

double log_gamma_prior(double x, const GammaPrior& g) {
  return (g.shape - 1.0) * std::log(x) - g.rate * x;
}

}  // namespace

// ---------------------------------------------------------------- PriorSpec

void PriorSpec::validate() const {
  auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!pos(transition_concentration)) throw ConfigError("transition prior concentration must be > 0");
  if (!pos(rate.shape) || !pos(rate.rate)) throw ConfigError("rate prior hyperparameters must be > 0");
  if (!(mean.lo < mean.hi)) throw ConfigError("mean prior needs lo < hi");
  if (!(sd.lo < sd.hi) || !(sd.lo > 0.0)) throw ConfigError("sd prior needs 0 < lo < hi");
  if (!pos(known_sd)) throw ConfigError("known sd must be > 0");
  if (!pos(hdp.gamma.shape) || !pos(hdp.gamma.rate) || !pos(hdp.alpha.shape) || !pos(hdp.alpha.rate)) {
    throw ConfigError("HDP concentration priors must be > 0");
  }
  if (hdp.truncation < 2) throw ConfigError("HDP truncation must be >= 2");
}

Emission PriorSpec::sample_emission(Rng& rng) const {
  switch (kind) {
    case EmissionKind::Exponential: return Emission::exponential(gamma_draw(rng, rate.shape, rate.rate));
    case EmissionKind::GaussianKnownVar: return Emission::gaussian_known_var(uniform(rng, mean.lo, mean.hi), known_sd);
    case EmissionKind::GaussianUnknown:
      return Emission::gaussian(uniform(rng, mean.lo, mean.hi), uniform(rng, sd.lo, sd.hi));
    case EmissionKind::DiagonalBivariateGaussian: {
      const double m1 = uniform(rng, mean.lo, mean.hi);
      const double m2 = uniform(rng, mean.lo, mean.hi);
      const double s1 = uniform(rng, sd.lo, sd.hi);
      const double s2 = uniform(rng, sd.lo, sd.hi);
      return Emission::bivariate(m1, m2, s1, s2);
    }
  }
  throw std::invalid_argument("unknown emission kind");
}

// --------------------------------------------------------------------- FFBS

LabelPath ffbs_sample_states(const ThetaVector& theta, const ObservationStream& stream, Rng& rng) {
  const std::size_t n = stream.size();
  if (n == 0) throw std::invalid_argument("FFBS on an empty stream");
  const int r = theta.regimes();
  std::vector<Eigen::VectorXd> filtered;
  filtered.reserve(n);
  FilterState state = start_filter(theta);
  for (const auto& obs : stream.values) {
    state = filter_step(state, theta, obs);
    filtered.push_back(state.probs);
  }

  LabelPath labels(n);
  std::vector<double> w(static_cast<std::size_t>(r));
  for (int k = 0; k < r; ++k) w[static_cast<std::size_t>(k)] = filtered.back()[k];
  labels[n - 1] = static_cast<int>(categorical_draw(rng, w));
  const auto& a = theta.transition.matrix();
  for (std::size_t t = n - 1; t-- > 0;) {
    const int next = labels[t + 1];
    for (int k = 0; k < r; ++k) w[static_cast<std::size_t>(k)] = a(k, next) * filtered[t][k];
    labels[t] = static_cast<int>(categorical_draw(rng, w));
  }
  return labels;
}

LabelPath ffbs_sample_states(const ThetaVector& theta, const ObservationStream& stream, std::uint64_t seed) {
  Rng rng(seed);
  return ffbs_sample_states(theta, stream, rng);
}

// -------------------------------------------------------------- transitions

Eigen::MatrixXd transition_counts(std::span<const int> labels, int regimes) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(regimes, regimes);
  for (std::size_t t = 1; t < labels.size(); ++t) {
    const int from = labels[t - 1];
    const int to = labels[t];
    if (from < 0 || from >= regimes || to < 0 || to >= regimes) {
      throw std::invalid_argument("label out of range in transition counts");
    }
    n(from, to) += 1.0;
  }
  return n;
}

TransitionMatrix sample_transition_rows(std::span<const int> labels, int regimes, const PriorSpec& prior,
                                        Rng& rng) {
  const Eigen::MatrixXd n = transition_counts(labels, regimes);
  Eigen::MatrixXd a(regimes, regimes);
  std::vector<double> conc(static_cast<std::size_t>(regimes));
  for (int i = 0; i < regimes; ++i) {
    for (int j = 0; j < regimes; ++j) conc[static_cast<std::size_t>(j)] = prior.transition_concentration + n(i, j);
    a.row(i) = dirichlet_draw(rng, conc).transpose();
  }
  return TransitionMatrix::normalized(std::move(a));
}

TransitionMatrix sample_transition_rows(std::span<const int> labels, int regimes, const PriorSpec& prior,
                                        std::uint64_t seed) {
  Rng rng(seed);
  return sample_transition_rows(labels, regimes, prior, rng);
}

// ---------------------------------------------------------------- emissions

std::vector<Emission> sample_emission_params(std::span<const int> labels, const ObservationStream& stream,
                                             const PriorSpec& prior, const ThetaVector& current, Rng& rng) {
  if (labels.size() != stream.size()) throw std::invalid_argument("labels do not partition the stream");
  const int r = current.regimes();
  std::vector<Suff> first(static_cast<std::size_t>(r));
  std::vector<Suff> second(static_cast<std::size_t>(r));
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const auto k = static_cast<std::size_t>(labels[t]);
    first[k].add(stream.values[t].value);
    second[k].add(stream.values[t].value2);
  }

  std::vector<Emission> out;
  out.reserve(static_cast<std::size_t>(r));
  for (int k = 0; k < r; ++k) {
    const auto& s1 = first[static_cast<std::size_t>(k)];
    const auto& cur = current.emissions[static_cast<std::size_t>(k)];
    if (s1.n == 0.0) {
      out.push_back(prior.sample_emission(rng));
      continue;
    }
    switch (prior.kind) {
      case EmissionKind::Exponential:
        out.push_back(Emission::exponential(gamma_draw(rng, prior.rate.shape + s1.n, prior.rate.rate + s1.sum)));
        break;
      case EmissionKind::GaussianKnownVar: {
        auto [m, sd] = gaussian_update(s1, cur.mean(), prior.known_sd, true, prior, rng);
        out.push_back(Emission::gaussian_known_var(m, sd));
        break;
      }
      case EmissionKind::GaussianUnknown: {
        auto [m, sd] = gaussian_update(s1, cur.mean(), cur.sd(), false, prior, rng);
        out.push_back(Emission::gaussian(m, sd));
        break;
      }
      case EmissionKind::DiagonalBivariateGaussian: {
        auto p = cur.params();
        auto [m1, sd1] = gaussian_update(s1, p[0], p[2], false, prior, rng);
        auto [m2, sd2] = gaussian_update(second[static_cast<std::size_t>(k)], p[1], p[3], false, prior, rng);
        out.push_back(Emission::bivariate(m1, m2, sd1, sd2));
        break;
      }
    }
  }
  return out;
}

std::vector<Emission> sample_emission_params(std::span<const int> labels, const ObservationStream& stream,
                                             const PriorSpec& prior, const ThetaVector& current,
                                             std::uint64_t seed) {
  Rng rng(seed);
  return sample_emission_params(labels, stream, prior, current, rng);
}

// --------------------------------------------------------------- relabeling

std::vector<int> canonical_order(const ThetaVector& theta) {
  std::vector<int> perm(static_cast<std::size_t>(theta.regimes()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<double>> keys;
  for (const auto& e : theta.emissions) keys.push_back(canonical_key(e));
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)]; });
  return perm;
}

ThetaVector permute_regimes(const ThetaVector& theta, std::span<const int> perm) {
  const int r = theta.regimes();
  std::vector<Emission> e;
  Eigen::MatrixXd a(r, r);
  Eigen::VectorXd init(r);
  for (int k = 0; k < r; ++k) {
    const int ok = perm[static_cast<std::size_t>(k)];
    e.push_back(theta.emissions[static_cast<std::size_t>(ok)]);
    init[k] = theta.initial[ok];
    for (int l = 0; l < r; ++l) a(k, l) = theta.transition(ok, perm[static_cast<std::size_t>(l)]);
  }
  return ThetaVector(std::move(e), TransitionMatrix(std::move(a)), std::move(init));
}

Eigen::VectorXd permute_vector(const Eigen::VectorXd& v, std::span<const int> perm) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) out[k] = v[perm[static_cast<std::size_t>(k)]];
  return out;
}

LabelPath permute_labels(std::span<const int> labels, std::span<const int> perm) {
  std::vector<int> inverse(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inverse[static_cast<std::size_t>(perm[k])] = static_cast<int>(k);
  LabelPath out;
  out.reserve(labels.size());
  for (int s : labels) out.push_back(inverse[static_cast<std::size_t>(s)]);
  return out;
}

// ----------------------------------------------------------- Gibbs sampler

ThetaVector quantile_start(const ObservationStream& stream, int regimes, const PriorSpec& prior) {
  if (regimes < 1) throw std::invalid_argument("need at least one regime");
  std::vector<std::size_t> idx(stream.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return stream.values[a].value < stream.values[b].value;
  });
  std::vector<Emission> emissions;
  const std::size_t n = idx.size();
  for (int k = 0; k < regimes; ++k) {
    const std::size_t b = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(regimes);
    const std::size_t e = n * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(regimes);
    Suff s1, s2;
    for (std::size_t i = b; i < e; ++i) {
      s1.add(stream.values[idx[i]].value);
      s2.add(stream.values[idx[i]].value2);
    }
    const bool empty = s1.n == 0.0;
    const double sd_fallback = prior.sd.mean();
    auto pick_sd = [&](const Suff& s) {
      const double v = s.sd();
      return clamp_inside(v > 0.0 ? v : sd_fallback, prior.sd);
    };
    switch (prior.kind) {
      case EmissionKind::Exponential: {
        const double m = empty ? 0.0 : s1.mean();
        emissions.push_back(Emission::exponential(m > 0.0 ? 1.0 / m : prior.rate.mean()));
        break;
      }
      case EmissionKind::GaussianKnownVar:
        emissions.push_back(Emission::gaussian_known_var(clamp_inside(empty ? prior.mean.mean() : s1.mean(), prior.mean),
                                                         prior.known_sd));
        break;
      case EmissionKind::GaussianUnknown:
        emissions.push_back(Emission::gaussian(clamp_inside(empty ? prior.mean.mean() : s1.mean(), prior.mean),
                                               pick_sd(s1)));
        break;
      case EmissionKind::DiagonalBivariateGaussian:
        emissions.push_back(Emission::bivariate(clamp_inside(empty ? prior.mean.mean() : s1.mean(), prior.mean),
                                                clamp_inside(empty ? prior.mean.mean() : s2.mean(), prior.mean),
                                                pick_sd(s1), pick_sd(s2)));
        break;
    }
  }
  const Eigen::MatrixXd a = Eigen::MatrixXd::Constant(regimes, regimes, 1.0 / regimes);
  return ThetaVector(std::move(emissions), TransitionMatrix::normalized(a));
}

GibbsSampler::GibbsSampler(ObservationStream stream, int regimes, PriorSpec prior, std::uint64_t seed)
    : GibbsSampler(stream, quantile_start(stream, regimes, prior), prior, seed) {}

GibbsSampler::GibbsSampler(ObservationStream stream, ThetaVector start, PriorSpec prior, std::uint64_t seed)
    : stream_(std::move(stream)), prior_(prior), rng_(seed), theta_(std::move(start)) {
  prior_.validate();
  if (stream_.size() == 0) throw std::invalid_argument("posterior needs at least one observation");
}

void GibbsSampler::sweep() {
  labels_ = ffbs_sample_states(theta_, stream_, rng_);
  TransitionMatrix a = sample_transition_rows(labels_, theta_.regimes(), prior_, rng_);
  std::vector<Emission> e = sample_emission_params(labels_, stream_, prior_, theta_, rng_);
  theta_ = ThetaVector(std::move(e), std::move(a), theta_.initial);
}

PosteriorDraws PosteriorDraws::point_mass(const ThetaVector& theta, const ObservationStream& stream, std::size_t n) {
  PosteriorDraws out;
  const Eigen::VectorXd w = predictive_weights(filter(theta, stream), theta);
  for (std::size_t i = 0; i < n; ++i) {
    out.draws.push_back(theta);
    out.weights.push_back(w);
  }
  return out;
}

PosteriorDraws posterior_draws(const ObservationStream& stream, int regimes, const PriorSpec& prior,
                               const GibbsOptions& options, std::uint64_t seed) {
  if (options.n_mc < 1 || options.burn_in < 0 || options.thin < 1) {
    throw std::invalid_argument("invalid Gibbs options");
  }
  GibbsSampler sampler(stream, regimes, prior, seed);
  for (int i = 0; i < options.burn_in; ++i) sampler.sweep();

  PosteriorDraws out;
  out.burn_in = options.burn_in;
  out.thin = options.thin;
  for (int i = 0; i < options.n_mc; ++i) {
    for (int j = 0; j < options.thin; ++j) sampler.sweep();
    const auto perm = canonical_order(sampler.theta());
    ThetaVector draw = permute_regimes(sampler.theta(), perm);
    out.weights.push_back(predictive_weights(filter(draw, stream), draw));
    out.draws.push_back(std::move(draw));
  }
  return out;
}

PlugInEstimate plug_in_estimate(const PosteriorDraws& draws) {
  if (draws.size() == 0) throw std::invalid_argument("plug-in estimate of empty draws");
  const int r = draws.regimes();
  const auto n = static_cast<double>(draws.size());
  const EmissionKind kind = draws.kind();
  const int d = free_param_count(kind);

  std::vector<std::vector<double>> mean_params(static_cast<std::size_t>(r), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r, r);
  Eigen::VectorXd init = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(r);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const auto& th = draws.draws[i];
    for (int k = 0; k < r; ++k) {
      const auto p = th.emissions[static_cast<std::size_t>(k)].free_params();
      for (int j = 0; j < d; ++j) mean_params[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)] / n;
    }
    a += th.transition.matrix() / n;
    init += th.initial / n;
    w += draws.weights[i] / n;
  }
  std::vector<Emission> e;
  for (int k = 0; k < r; ++k) {
    const double fixed_sd = kind == EmissionKind::GaussianKnownVar ? draws.draws.front().emissions[static_cast<std::size_t>(k)].sd() : 1.0;
    e.push_back(Emission::from_free_params(kind, mean_params[static_cast<std::size_t>(k)], fixed_sd));
  }
  init /= init.sum();
  return {ThetaVector(std::move(e), TransitionMatrix::normalized(std::move(a)), std::move(init)), std::move(w)};
}

void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (draws.size() == 0) return;
  const int r = draws.regimes();
  const auto kind = draws.kind();
  const std::vector<std::string> names = [&]() -> std::vector<std::string> {
    switch (kind) {
      case EmissionKind::Exponential: return {"rate"};
      case EmissionKind::GaussianKnownVar: return {"mean"};
      case EmissionKind::GaussianUnknown: return {"mean", "sd"};
      case EmissionKind::DiagonalBivariateGaussian: return {"mean1", "mean2", "sd1", "sd2"};
    }
    return {};
  }();
  std::vector<std::string> header{"draw"};
  for (int k = 1; k <= r; ++k) {
    for (const auto& nm : names) header.push_back("regime" + std::to_string(k) + "_" + nm);
  }
  for (int i = 1; i <= r; ++i) {
    for (int j = 1; j <= r; ++j) header.push_back("A" + std::to_string(i) + "_" + std::to_string(j));
  }
  for (int k = 1; k <= r; ++k) header.push_back("w" + std::to_string(k));
  csv::write_row(out, header);

  for (std::size_t i = 0; i < draws.size(); ++i) {
    const auto& th = draws.draws[i];
    std::vector<std::string> cells{std::to_string(i + 1)};
    for (const auto& e : th.emissions) {
      for (double p : e.free_params()) cells.push_back(csv::format(p));
    }
    for (int a = 0; a < r; ++a) {
      for (int b = 0; b < r; ++b) cells.push_back(csv::format(th.transition(a, b)));
    }
    for (int k = 0; k < r; ++k) cells.push_back(csv::format(draws.weights[i][k]));
    csv::write_row(out, cells);
  }
}

// ------------------------------------------------------------------ HDP-HMM

WeakLimitHdpSampler::WeakLimitHdpSampler(ObservationStream stream, int truncation, PriorSpec prior,
                                         std::uint64_t seed)
    : stream_(std::move(stream)),
      prior_(prior),
      truncation_(truncation),
      rng_(seed),
      gamma_(prior.hdp.gamma.mean()),
      alpha_(prior.hdp.alpha.mean()),
      beta_(Eigen::VectorXd::Constant(truncation, 1.0 / truncation)),
      theta_(quantile_start(stream_, truncation, prior)) {
  if (truncation < 2) throw std::invalid_argument("weak-limit truncation must be >= 2");
  prior_.validate();
  if (stream_.size() == 0) throw std::invalid_argument("HDP sampler needs observations");
}

void WeakLimitHdpSampler::sample_concentrations(const Eigen::MatrixXd& counts) {
  const int l = truncation_;
  const double tiny = 1e-300;

  // α given labels and β, with the transition rows integrated out.
  auto alpha_logpost = [&](double a) {
    double lp = log_gamma_prior(a, prior_.hdp.alpha) + std::log(a);
    for (int j = 0; j < l; ++j) {
      const double nj = counts.row(j).sum();
      if (nj == 0.0) continue;
      lp += std::lgamma(a) - std::lgamma(a + nj);
      for (int k = 0; k < l; ++k) {
        if (counts(j, k) == 0.0) continue;
        const double ab = std::max(a * beta_[k], tiny);
        lp += std::lgamma(ab + counts(j, k)) - std::lgamma(ab);
      }
    }
    return lp;
  };
  auto metropolis = [&](double x, auto&& logpost) {
    double cur = logpost(x);
    for (int it = 0; it < 5; ++it) {
      const double prop = x * std::exp(0.5 * standard_normal(rng_));
      const double lp = logpost(prop);
      if (std::log(uniform01(rng_)) < lp - cur) {
        x = prop;
        cur = lp;
      }
    }
    return x;
  };
  alpha_ = metropolis(alpha_, alpha_logpost);

  // Auxiliary table counts m(j, k) (Chinese restaurant process draws).
  Eigen::VectorXd m = Eigen::VectorXd::Zero(l);
  for (int j = 0; j < l; ++j) {
    for (int k = 0; k < l; ++k) {
      const int njk = static_cast<int>(counts(j, k));
      const double ab = alpha_ * beta_[k];
      for (int i = 0; i < njk; ++i) {
        if (uniform01(rng_) < ab / (ab + i)) m[k] += 1.0;
      }
    }
  }

  // γ given the table counts, with β integrated out.
  const double mtot = m.sum();
  auto gamma_logpost = [&](double g) {
    double lp = log_gamma_prior(g, prior_.hdp.gamma) + std::log(g) + std::lgamma(g) - std::lgamma(g + mtot);
    for (int k = 0; k < l; ++k) {
      if (m[k] == 0.0) continue;
      lp += std::lgamma(g / l + m[k]) - std::lgamma(g / l);
    }
    return lp;
  };
  gamma_ = metropolis(gamma_, gamma_logpost);

  std::vector<double> conc(static_cast<std::size_t>(l));
  for (int k = 0; k < l; ++k) conc[static_cast<std::size_t>(k)] = gamma_ / l + m[k];
  beta_ = dirichlet_draw(rng_, conc);
}

void WeakLimitHdpSampler::sweep() {
  const int l = truncation_;
  labels_ = ffbs_sample_states(theta_, stream_, rng_);
  const Eigen::MatrixXd counts = transition_counts(labels_, l);
  sample_concentrations(counts);

  Eigen::MatrixXd pi(l, l);
  std::vector<double> conc(static_cast<std::size_t>(l));
  for (int j = 0; j < l; ++j) {
    for (int k = 0; k < l; ++k) conc[static_cast<std::size_t>(k)] = std::max(alpha_ * beta_[k], 1e-300) + counts(j, k);
    pi.row(j) = dirichlet_draw(rng_, conc).transpose();
  }
  std::vector<Emission> e = sample_emission_params(labels_, stream_, prior_, theta_, rng_);
  theta_ = ThetaVector(std::move(e), TransitionMatrix::normalized(std::move(pi)), theta_.initial);
}

HdpStep WeakLimitHdpSampler::state() const { return {beta_, theta_, gamma_, alpha_}; }

std::vector<HdpStep> weak_limit_hdp_sample(const ObservationStream& stream, int truncation,
                                           const PriorSpec& prior, const HdpOptions& options,
                                           std::uint64_t seed) {
  WeakLimitHdpSampler sampler(stream, truncation, prior, seed);
  for (int i = 0; i < options.burn_in; ++i) sampler.sweep();
  std::vector<HdpStep> out;
  out.reserve(static_cast<std::size_t>(options.n_steps));
  for (int i = 0; i < options.n_steps; ++i) {
    sampler.sweep();
    out.push_back(sampler.state());
  }
  return out;
}

// ---------------------------------------------------------------------- KDE

double silverman_bandwidth(std::span<const double> data) {
  const auto n = static_cast<double>(data.size());
  if (n < 2.0) return 0.0;
  const double mean = std::accumulate(data.begin(), data.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : data) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

KdeModel kde_fit(const ObservationStream& stream) {
  if (stream.size() < 2) throw InsufficientSamples("KDE needs at least two data points");
  KdeModel model;
  model.data = stream.values;
  model.dim = stream.dim;
  std::vector<double> a, b;
  for (const auto& o : stream.values) {
    a.push_back(o.value);
    b.push_back(o.value2);
  }
  model.bandwidth = silverman_bandwidth(a);
  model.bandwidth2 = stream.dim == 2 ? silverman_bandwidth(b) : 0.0;
  return model;
}

KdeModel kde_fit(std::span<const double> data) {
  ObservationStream s;
  for (double v : data) s.values.push_back({v, 0.0});
  return kde_fit(s);
}

double KdeModel::density(const Observation& at) const {
  if (bandwidth <= 0.0 || (dim == 2 && bandwidth2 <= 0.0)) return 0.0;
  const double c = 1.0 / std::sqrt(2.0 * M_PI);
  double total = 0.0;
  for (const auto& o : data) {
    const double z = (at.value - o.value) / bandwidth;
    double k = c * std::exp(-0.5 * z * z) / bandwidth;
    if (dim == 2) {
      const double z2 = (at.value2 - o.value2) / bandwidth2;
      k *= c * std::exp(-0.5 * z2 * z2) / bandwidth2;
    }
    total += k;
  }
  return total / static_cast<double>(data.size());
}

Observation kde_draw(const KdeModel& model, Rng& rng) {
  Observation o = model.data[uniform_index(rng, model.data.size())];
  if (model.bandwidth > 0.0) o.value += model.bandwidth * standard_normal(rng);
  if (model.dim == 2 && model.bandwidth2 > 0.0) o.value2 += model.bandwidth2 * standard_normal(rng);
  return o;
}

std::vector<Observation> kde_sample(const KdeModel& model, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(kde_draw(model, rng));
  return out;
}

}  // namespace rsopt
