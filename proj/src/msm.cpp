#include "rsopt/msm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rsopt/csv.hpp"
#include "rsopt/errors.hpp"

namespace rsopt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace

std::string to_string(EmissionKind kind) {
  switch (kind) {
    case EmissionKind::Exponential: return "exponential";
    case EmissionKind::GaussianKnownVar: return "gaussian_known_var";
    case EmissionKind::GaussianUnknown: return "gaussian";
    case EmissionKind::DiagonalBivariateGaussian: return "bivariate_gaussian";
  }
  return "unknown";
}

EmissionKind emission_kind_from_string(const std::string& name) {
  if (name == "exponential") return EmissionKind::Exponential;
  if (name == "gaussian_known_var") return EmissionKind::GaussianKnownVar;
  if (name == "gaussian") return EmissionKind::GaussianUnknown;
  if (name == "bivariate_gaussian") return EmissionKind::DiagonalBivariateGaussian;
  throw ConfigError("unknown emission kind '" + name + "'");
}

int free_param_count(EmissionKind kind) {
  switch (kind) {
    case EmissionKind::Exponential: return 1;
    case EmissionKind::GaussianKnownVar: return 1;
    case EmissionKind::GaussianUnknown: return 2;
    case EmissionKind::DiagonalBivariateGaussian: return 4;
  }
  return 0;
}

int observation_dim(EmissionKind kind) {
  return kind == EmissionKind::DiagonalBivariateGaussian ? 2 : 1;
}

// ---------------------------------------------------------------- Emission

Emission::Emission(EmissionKind kind, std::array<double, 4> p) : kind_(kind), p_(p) { validate(); }

Emission Emission::exponential(double rate) { return {EmissionKind::Exponential, {rate, 0, 0, 0}}; }

Emission Emission::gaussian_known_var(double mean, double sd) {
  return {EmissionKind::GaussianKnownVar, {mean, sd, 0, 0}};
}

Emission Emission::gaussian(double mean, double sd) {
  return {EmissionKind::GaussianUnknown, {mean, sd, 0, 0}};
}

Emission Emission::bivariate(double mean1, double mean2, double sd1, double sd2) {
  return {EmissionKind::DiagonalBivariateGaussian, {mean1, mean2, sd1, sd2}};
}

Emission Emission::from_free_params(EmissionKind kind, std::span<const double> free, double fixed_sd) {
  if (static_cast<int>(free.size()) != free_param_count(kind)) {
    throw std::invalid_argument("wrong number of free parameters for " + to_string(kind));
  }
  switch (kind) {
    case EmissionKind::Exponential: return exponential(free[0]);
    case EmissionKind::GaussianKnownVar: return gaussian_known_var(free[0], fixed_sd);
    case EmissionKind::GaussianUnknown: return gaussian(free[0], free[1]);
    case EmissionKind::DiagonalBivariateGaussian: return bivariate(free[0], free[1], free[2], free[3]);
  }
  throw std::invalid_argument("unknown emission kind");
}

void Emission::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  bool ok = true;
  switch (kind_) {
    case EmissionKind::Exponential: ok = positive(p_[0]); break;
    case EmissionKind::GaussianKnownVar:
    case EmissionKind::GaussianUnknown: ok = std::isfinite(p_[0]) && positive(p_[1]); break;
    case EmissionKind::DiagonalBivariateGaussian:
      ok = std::isfinite(p_[0]) && std::isfinite(p_[1]) && positive(p_[2]) && positive(p_[3]);
      break;
  }
  if (!ok) throw std::invalid_argument("invalid " + to_string(kind_) + " emission parameters");
}

std::span<const double> Emission::params() const {
  const std::size_t n = kind_ == EmissionKind::Exponential ? 1 : kind_ == EmissionKind::DiagonalBivariateGaussian ? 4 : 2;
  return {p_.data(), n};
}

std::vector<double> Emission::free_params() const {
  switch (kind_) {
    case EmissionKind::Exponential:
    case EmissionKind::GaussianKnownVar: return {p_[0]};
    case EmissionKind::GaussianUnknown: return {p_[0], p_[1]};
    case EmissionKind::DiagonalBivariateGaussian: return {p_[0], p_[1], p_[2], p_[3]};
  }
  return {};
}

double Emission::log_density(const Observation& obs) const {
  switch (kind_) {
    case EmissionKind::Exponential:
      if (!(obs.value >= 0.0)) return kNegInf;
      return std::log(p_[0]) - p_[0] * obs.value;
    case EmissionKind::GaussianKnownVar:
    case EmissionKind::GaussianUnknown: return normal_log_pdf(obs.value, p_[0], p_[1]);
    case EmissionKind::DiagonalBivariateGaussian:
      return normal_log_pdf(obs.value, p_[0], p_[2]) + normal_log_pdf(obs.value2, p_[1], p_[3]);
  }
  return kNegInf;
}

double Emission::density(const Observation& obs) const { return std::exp(log_density(obs)); }

Observation Emission::sample(Rng& rng) const {
  switch (kind_) {
    case EmissionKind::Exponential: return {exponential_draw(rng, p_[0]), 0.0};
    case EmissionKind::GaussianKnownVar:
    case EmissionKind::GaussianUnknown: return {p_[0] + p_[1] * standard_normal(rng), 0.0};
    case EmissionKind::DiagonalBivariateGaussian: {
      const double a = p_[0] + p_[2] * standard_normal(rng);
      const double b = p_[1] + p_[3] * standard_normal(rng);
      return {a, b};
    }
  }
  return {};
}

double Emission::expected_value() const {
  return kind_ == EmissionKind::Exponential ? 1.0 / p_[0] : p_[0];
}

// -------------------------------------------------------- TransitionMatrix

TransitionMatrix::TransitionMatrix(Eigen::MatrixXd entries) : a_(std::move(entries)) {
  if (a_.rows() < 1 || a_.rows() != a_.cols()) {
    throw std::invalid_argument("transition matrix must be square with at least one regime");
  }
  for (Eigen::Index i = 0; i < a_.rows(); ++i) {
    for (Eigen::Index j = 0; j < a_.cols(); ++j) {
      const double v = a_(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("transition entry outside [0, 1]");
    }
    if (std::abs(a_.row(i).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("transition row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

TransitionMatrix TransitionMatrix::normalized(Eigen::MatrixXd entries) {
  for (Eigen::Index i = 0; i < entries.rows(); ++i) {
    const double s = entries.row(i).sum();
    if (!(s > 0.0)) throw std::invalid_argument("transition row with zero mass");
    entries.row(i) /= s;
  }
  return TransitionMatrix(std::move(entries));
}

TransitionMatrix TransitionMatrix::identity(int regimes) {
  return TransitionMatrix(Eigen::MatrixXd::Identity(regimes, regimes));
}

// ------------------------------------------------------------- ThetaVector

ThetaVector::ThetaVector(std::vector<Emission> e, TransitionMatrix a)
    : emissions(std::move(e)), transition(std::move(a)) {
  const auto r = static_cast<Eigen::Index>(emissions.size());
  initial = Eigen::VectorXd::Constant(r, r > 0 ? 1.0 / static_cast<double>(r) : 0.0);
  validate();
}

ThetaVector::ThetaVector(std::vector<Emission> e, TransitionMatrix a, Eigen::VectorXd init)
    : emissions(std::move(e)), transition(std::move(a)), initial(std::move(init)) {
  validate();
}

void ThetaVector::validate() const {
  const int r = regimes();
  if (r < 1) throw std::invalid_argument("theta needs at least one regime");
  if (transition.regimes() != r || initial.size() != r) {
    throw std::invalid_argument("theta dimensions disagree");
  }
  for (const auto& e : emissions) {
    if (e.kind() != emissions.front().kind()) throw std::invalid_argument("mixed emission families");
  }
  if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("initial distribution is not a probability vector");
  }
}

// -------------------------------------------------------- ObservationStream

ObservationStream ObservationStream::prefix(std::size_t n) const {
  ObservationStream out;
  out.dim = dim;
  n = std::min(n, values.size());
  out.values.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n));
  if (regimes) out.regimes = std::vector<int>(regimes->begin(), regimes->begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

std::vector<double> ObservationStream::first_coordinate() const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& o : values) out.push_back(o.value);
  return out;
}

void ObservationStream::validate(int regime_count) const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("observation dimension must be 1 or 2");
  if (!regimes) return;
  if (regimes->size() != values.size()) throw std::invalid_argument("regime labels and values differ in length");
  for (int s : *regimes) {
    if (s < 0 || (regime_count > 0 && s >= regime_count)) {
      throw std::invalid_argument("regime label out of range");
    }
  }
}

// --------------------------------------------------------------- filtering

FilterState start_filter(const ThetaVector& theta) { return {theta.initial, 0}; }

Eigen::VectorXd predictive_weights(const FilterState& state, const ThetaVector& theta) {
  Eigen::VectorXd w = theta.transition.matrix().transpose() * state.probs;
  return w;
}

FilterState filter_step(const FilterState& state, const ThetaVector& theta, const Observation& obs,
                        double& log_normalizer) {
  const int r = theta.regimes();
  const Eigen::VectorXd prior = state.t == 0 ? state.probs : predictive_weights(state, theta);

  // Emission densities are scaled by their maximum before leaving log space
  // so distant observations do not underflow every regime at once.
  Eigen::VectorXd logd(r);
  double mx = kNegInf;
  for (int k = 0; k < r; ++k) {
    logd[k] = theta.emissions[k].log_density(obs);
    if (prior[k] > 0.0) mx = std::max(mx, logd[k]);
  }
  if (!std::isfinite(mx)) throw AllZeroLikelihood(state.t);

  Eigen::VectorXd post(r);
  for (int k = 0; k < r; ++k) post[k] = prior[k] > 0.0 ? prior[k] * std::exp(logd[k] - mx) : 0.0;
  const double z = post.sum();
  if (!(z > 0.0)) throw AllZeroLikelihood(state.t);
  post /= z;
  log_normalizer = mx + std::log(z);
  return {std::move(post), state.t + 1};
}

FilterState filter_step(const FilterState& state, const ThetaVector& theta, const Observation& obs) {
  double ignored = 0.0;
  return filter_step(state, theta, obs, ignored);
}

FilterState filter(const ThetaVector& theta, const ObservationStream& stream) {
  FilterState state = start_filter(theta);
  for (const auto& obs : stream.values) state = filter_step(state, theta, obs);
  return state;
}

double log_likelihood(const ThetaVector& theta, const ObservationStream& stream) {
  if (stream.values.empty()) throw std::invalid_argument("log_likelihood of an empty stream");
  FilterState state = start_filter(theta);
  double total = 0.0;
  for (const auto& obs : stream.values) {
    double lz = 0.0;
    state = filter_step(state, theta, obs, lz);
    total += lz;
  }
  return total;
}

// -------------------------------------------------------------- simulation

ObservationStream simulate(const ThetaVector& theta, std::size_t t, std::uint64_t seed) {
  if (t < 1) throw std::invalid_argument("simulate needs t >= 1");
  Rng rng(seed);
  const int r = theta.regimes();
  std::vector<int> regimes(t);
  std::vector<double> row(static_cast<std::size_t>(r));
  auto draw_from = [&](const Eigen::VectorXd& p) {
    for (int k = 0; k < r; ++k) row[static_cast<std::size_t>(k)] = p[k];
    return static_cast<int>(categorical_draw(rng, row));
  };
  regimes[0] = draw_from(theta.initial);
  for (std::size_t i = 1; i < t; ++i) {
    regimes[i] = draw_from(theta.transition.matrix().row(regimes[i - 1]).transpose());
  }
  ObservationStream out;
  out.dim = observation_dim(theta.kind());
  out.values.reserve(t);
  for (std::size_t i = 0; i < t; ++i) out.values.push_back(theta.emissions[static_cast<std::size_t>(regimes[i])].sample(rng));
  out.regimes = std::move(regimes);
  return out;
}

ObservationStream simulate_given_regimes(const ThetaVector& theta, std::span<const int> regimes,
                                         std::uint64_t seed) {
  Rng rng(seed);
  ObservationStream out;
  out.dim = observation_dim(theta.kind());
  std::vector<int> labels(regimes.begin(), regimes.end());
  for (int s : labels) {
    if (s < 0 || s >= theta.regimes()) throw std::invalid_argument("regime label out of range");
    out.values.push_back(theta.emissions[static_cast<std::size_t>(s)].sample(rng));
  }
  out.regimes = std::move(labels);
  return out;
}

// --------------------------------------------------------------------- CSV

void write_stream_csv(const ObservationStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  std::vector<std::string> header{"t", "value"};
  if (stream.dim == 2) header.emplace_back("value2");
  if (stream.regimes) header.emplace_back("regime");
  csv::write_row(out, header);
  for (std::size_t i = 0; i < stream.values.size(); ++i) {
    std::vector<std::string> cells{std::to_string(i + 1), csv::format(stream.values[i].value)};
    if (stream.dim == 2) cells.push_back(csv::format(stream.values[i].value2));
    if (stream.regimes) cells.push_back(std::to_string((*stream.regimes)[i] + 1));
    csv::write_row(out, cells);
  }
}

ObservationStream read_stream_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  table.require("t");
  const auto vcol = table.require("value");
  const int v2col = table.column("value2");
  const int rcol = table.column("regime");
  ObservationStream out;
  out.dim = v2col >= 0 ? 2 : 1;
  if (rcol >= 0) out.regimes.emplace();
  const std::string ctx = path.string();
  for (const auto& row : table.rows) {
    Observation o{csv::to_double(row[vcol], ctx), 0.0};
    if (v2col >= 0) o.value2 = csv::to_double(row[static_cast<std::size_t>(v2col)], ctx);
    out.values.push_back(o);
    if (rcol >= 0) {
      const long label = csv::to_long(row[static_cast<std::size_t>(rcol)], ctx);
      if (label < 1) throw ConfigError(ctx + ": regime labels start at 1");
      out.regimes->push_back(static_cast<int>(label - 1));
    }
  }
  return out;
}

}  // namespace rsopt
