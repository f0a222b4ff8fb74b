#include "rsopt/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>

#include "rsopt/csv.hpp"
#include "rsopt/errors.hpp"
#include "rsopt/local_search.hpp"

namespace rsopt {
namespace {

double scaled_dist(std::span<const double> a, std::span<const double> b, const std::vector<double>& theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = (a[i] - b[i]) / theta[i];
    s += 0.5 * d * d;
  }
  return s;
}

std::vector<double> coordinate_range(const std::vector<DesignPoint>& design, bool lambda) {
  const std::size_t d = lambda ? design.front().lambda.size() : design.front().x.size();
  std::vector<double> lo(d, INFINITY), hi(d, -INFINITY);
  for (const auto& p : design) {
    const auto& v = lambda ? p.lambda : p.x;
    for (std::size_t i = 0; i < d; ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  }
  std::vector<double> r(d);
  for (std::size_t i = 0; i < d; ++i) {
    r[i] = hi[i] - lo[i];
    if (!(r[i] > 0.0)) r[i] = 1.0;
  }
  return r;
}

double output_variance(const std::vector<DesignPoint>& design) {
  const auto n = static_cast<double>(design.size());
  double mean = 0.0;
  for (const auto& p : design) mean += p.y_bar / n;
  double ss = 0.0;
  for (const auto& p : design) ss += (p.y_bar - mean) * (p.y_bar - mean);
  const double var = design.size() > 1 ? ss / (n - 1.0) : 0.0;
  return var > 0.0 ? var : 1.0;
}

}  // namespace

void KernelHyperparams::validate() const {
  auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!pos(sigma_g2)) throw std::invalid_argument("sigma_g2 must be > 0");
  for (double v : lengthscales_x) {
    if (!pos(v)) throw std::invalid_argument("lengthscales must be > 0");
  }
  for (double v : lengthscales_lambda) {
    if (!pos(v)) throw std::invalid_argument("lengthscales must be > 0");
  }
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) throw std::invalid_argument("noise_var must be >= 0");
  if (!std::isfinite(mean_offset)) throw std::invalid_argument("mean_offset must be finite");
}

HyperBounds default_bounds(const std::vector<DesignPoint>& design) {
  if (design.empty()) throw std::invalid_argument("bounds of an empty design");
  HyperBounds b;
  const double var = output_variance(design);
  b.sigma_lo = 1e-3 * var;
  b.sigma_hi = 1e2 * var;
  for (double r : coordinate_range(design, false)) {
    b.lx_lo.push_back(0.01 * r);
    b.lx_hi.push_back(10.0 * r);
  }
  for (double r : coordinate_range(design, true)) {
    b.ll_lo.push_back(0.01 * r);
    b.ll_hi.push_back(10.0 * r);
  }
  return b;
}

double pooled_noise_var(const std::vector<DesignPoint>& design) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& p : design) {
    if (p.m > 1) {
      num += (p.m - 1) * p.y_var;
      den += p.m - 1;
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

// ------------------------------------------------------------ SurrogateModel

SurrogateModel::SurrogateModel(std::vector<DesignPoint> design, KernelHyperparams hyper)
    : design_(std::move(design)), hyper_(std::move(hyper)) {
  hyper_.validate();
  for (const auto& p : design_) {
    if (p.x.size() != hyper_.lengthscales_x.size() || p.lambda.size() != hyper_.lengthscales_lambda.size()) {
      throw std::invalid_argument("design point dimension does not match the kernel");
    }
    if (p.m < 1 || !(p.y_var >= 0.0) || !std::isfinite(p.y_bar)) throw std::invalid_argument("invalid design point");
  }
  factor();
}

double SurrogateModel::dist_x(std::span<const double> a, std::span<const double> b) const {
  return scaled_dist(a, b, hyper_.lengthscales_x);
}

double SurrogateModel::dist_lambda(std::span<const double> a, std::span<const double> b) const {
  return scaled_dist(a, b, hyper_.lengthscales_lambda);
}

double SurrogateModel::kernel(const Point& p, const Point& q) const {
  return hyper_.sigma_g2 * std::exp(-dist_x(p.x, q.x) - dist_lambda(p.lambda, q.lambda));
}

double SurrogateModel::diag_noise(const DesignPoint& p) const {
  if (hyper_.per_point_noise && p.m > 1) return p.y_var / p.m;
  return hyper_.noise_var / p.m;
}

double SurrogateModel::noise_at(const Point& p) const {
  if (!hyper_.per_point_noise || design_.empty()) return hyper_.noise_var;
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t j = 0; j < design_.size(); ++j) {
    const double d = dist_x(p.x, design_[j].x) + dist_lambda(p.lambda, design_[j].lambda);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return design_[best].m > 1 ? design_[best].y_var : hyper_.noise_var;
}

Eigen::MatrixXd SurrogateModel::covariance_matrix() const {
  const auto n = static_cast<Eigen::Index>(design_.size());
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pi = design_[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto& pj = design_[static_cast<std::size_t>(j)];
      const double k = hyper_.sigma_g2 * std::exp(-dist_x(pi.x, pj.x) - dist_lambda(pi.lambda, pj.lambda));
      r(i, j) = k;
      r(j, i) = k;
    }
    r(i, i) += diag_noise(pi);
  }
  return r;
}

void SurrogateModel::factor() {
  const Eigen::MatrixXd r = covariance_matrix();
  const auto n = r.rows();
  for (double j = 1e-10; j <= 1e-4 * (1.0 + 1e-9); j *= 10.0) {
    jitter_ = j * hyper_.sigma_g2;
    Eigen::LLT<Eigen::MatrixXd> llt(r + jitter_ * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() != Eigen::Success) continue;
    chol_ = llt.matrixL();
    if ((chol_.diagonal().array() > 0.0).all() && chol_.allFinite()) {
      update_alpha();
      return;
    }
  }
  throw SingularCovariance("covariance matrix is not positive definite after maximal jitter");
}

void SurrogateModel::update_alpha() {
  const auto n = static_cast<Eigen::Index>(design_.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = design_[static_cast<std::size_t>(i)].y_bar - hyper_.mean_offset;
  if (n == 0) {
    alpha_ = y;
    return;
  }
  auto solve = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return chol_.transpose().triangularView<Eigen::Upper>().solve(chol_.triangularView<Eigen::Lower>().solve(v));
  };
  // Refinement toward (L Lᵀ - jitter·I) α = y: the jitter stabilizes the
  // factor but does not bias the mean. Each step contracts every eigen-
  // component by jitter / (eigenvalue + jitter) < 1.
  alpha_ = solve(y);
  for (int step = 0; step < 2; ++step) alpha_ = solve(y + jitter_ * alpha_);
}

Eigen::VectorXd SurrogateModel::cross_cov(const Point& p) const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(design_.size()));
  for (std::size_t j = 0; j < design_.size(); ++j) {
    c[static_cast<Eigen::Index>(j)] =
        hyper_.sigma_g2 * std::exp(-dist_x(p.x, design_[j].x) - dist_lambda(p.lambda, design_[j].lambda));
  }
  return c;
}

Eigen::VectorXd SurrogateModel::forward_solve(const Eigen::VectorXd& v) const {
  if (v.size() == 0) return v;
  return chol_.triangularView<Eigen::Lower>().solve(v);
}

double SurrogateModel::mean(const Point& p) const {
  if (design_.empty()) return hyper_.mean_offset;
  return hyper_.mean_offset + cross_cov(p).dot(alpha_);
}

std::pair<double, double> SurrogateModel::posterior_mean_cov(const Point& p, const Point& q) const {
  const double prior = kernel(p, q);
  if (design_.empty()) return {hyper_.mean_offset, prior};
  const Eigen::VectorXd cp = cross_cov(p);
  const Eigen::VectorXd cq = cross_cov(q);
  const Eigen::VectorXd vp = forward_solve(cp);
  const Eigen::VectorXd vq = forward_solve(cq);
  double k = prior - vp.dot(vq);
  if (p.x == q.x && p.lambda == q.lambda) k = std::max(k, 0.0);
  return {hyper_.mean_offset + cp.dot(alpha_), k};
}

double SurrogateModel::variance(const Point& p) const { return posterior_mean_cov(p, p).second; }

void SurrogateModel::add_point(DesignPoint point) {
  if (point.x.size() != hyper_.lengthscales_x.size() || point.lambda.size() != hyper_.lengthscales_lambda.size()) {
    throw std::invalid_argument("design point dimension does not match the kernel");
  }
  if (point.m < 1 || !std::isfinite(point.y_bar) || !(point.y_var >= 0.0)) {
    throw std::invalid_argument("invalid design point");
  }
  const Point p{point.x, point.lambda};
  const auto n = static_cast<Eigen::Index>(design_.size());
  const Eigen::VectorXd c = cross_cov(p);
  const Eigen::VectorXd l = forward_solve(c);
  const double d = hyper_.sigma_g2 + diag_noise(point) + jitter_ - l.squaredNorm();
  design_.push_back(std::move(point));
  if (!(d > 1e-14 * hyper_.sigma_g2)) {
    factor();
    return;
  }
  chol_.conservativeResize(n + 1, n + 1);
  chol_.row(n).head(n) = l.transpose();
  chol_.col(n).head(n).setZero();
  chol_(n, n) = std::sqrt(d);
  update_alpha();
}

void SurrogateModel::truncate_oldest(std::size_t keep) {
  if (design_.size() <= keep) return;
  design_.erase(design_.begin(), design_.end() - static_cast<std::ptrdiff_t>(keep));
  factor();
}

double SurrogateModel::log_marginal_likelihood() const {
  const auto n = static_cast<double>(design_.size());
  Eigen::VectorXd r(static_cast<Eigen::Index>(design_.size()));
  for (std::size_t i = 0; i < design_.size(); ++i) r[static_cast<Eigen::Index>(i)] = design_[i].y_bar - hyper_.mean_offset;
  return -0.5 * r.dot(alpha_) - chol_.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Eigen::MatrixXd SurrogateModel::factor_product() const { return chol_ * chol_.transpose(); }

// ------------------------------------------------------------------ fitting

KernelHyperparams fit_hyperparams(const std::vector<DesignPoint>& design, const HyperBounds& bounds,
                                  std::uint64_t seed, const FitOptions& options) {
  if (design.size() < 2) throw InsufficientSamples("hyperparameter fit needs at least two design points");
  const std::size_t dx = design.front().x.size();
  const std::size_t dl = design.front().lambda.size();
  if (bounds.lx_lo.size() != dx || bounds.ll_lo.size() != dl) throw std::invalid_argument("bounds dimension mismatch");

  Rng rng(seed);
  std::vector<DesignPoint> fit_set = design;
  if (fit_set.size() > options.max_points) {
    std::vector<std::size_t> idx(design.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < options.max_points; ++i) {
      const std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(options.max_points);
    std::sort(idx.begin(), idx.end());
    fit_set.clear();
    for (std::size_t i : idx) fit_set.push_back(design[i]);
  }

  KernelHyperparams base;
  base.noise_var = options.pool_noise ? pooled_noise_var(design) : options.noise_var;
  base.per_point_noise = options.per_point_noise;
  if (options.center) {
    double mean = 0.0;
    for (const auto& p : design) mean += p.y_bar;
    base.mean_offset = mean / static_cast<double>(design.size());
  }

  Box box;
  box.lo.push_back(std::log(bounds.sigma_lo));
  box.hi.push_back(std::log(bounds.sigma_hi));
  for (std::size_t i = 0; i < dx; ++i) {
    box.lo.push_back(std::log(bounds.lx_lo[i]));
    box.hi.push_back(std::log(bounds.lx_hi[i]));
  }
  for (std::size_t i = 0; i < dl; ++i) {
    box.lo.push_back(std::log(bounds.ll_lo[i]));
    box.hi.push_back(std::log(bounds.ll_hi[i]));
  }

  auto unpack = [&](const std::vector<double>& v) {
    KernelHyperparams h = base;
    h.sigma_g2 = std::exp(v[0]);
    h.lengthscales_x.assign(dx, 0.0);
    h.lengthscales_lambda.assign(dl, 0.0);
    for (std::size_t i = 0; i < dx; ++i) h.lengthscales_x[i] = std::exp(v[1 + i]);
    for (std::size_t i = 0; i < dl; ++i) h.lengthscales_lambda[i] = std::exp(v[1 + dx + i]);
    return h;
  };
  auto objective = [&](const std::vector<double>& v) {
    try {
      const double lml = SurrogateModel(fit_set, unpack(v)).log_marginal_likelihood();
      return std::isfinite(lml) ? -lml : 1e300;
    } catch (const SingularCovariance&) {
      return 1e300;
    }
  };

  std::vector<std::vector<double>> starts;
  {
    // Output variance and a fifth of each range, in log space.
    std::vector<double> s(box.dim());
    const double var = output_variance(fit_set);
    s[0] = std::clamp(std::log(var), box.lo[0], box.hi[0]);
    for (std::size_t i = 1; i < box.dim(); ++i) s[i] = std::clamp(box.lo[i] + std::log(20.0), box.lo[i], box.hi[i]);
    starts.push_back(std::move(s));
  }
  for (int k = 1; k < options.starts; ++k) {
    std::vector<double> s(box.dim());
    for (std::size_t i = 0; i < box.dim(); ++i) s[i] = uniform(rng, box.lo[i], box.hi[i]);
    starts.push_back(std::move(s));
  }

  SearchOptions so;
  so.initial_step = 0.15;
  so.min_step = 1e-3;
  so.max_evals = options.max_evals_per_start;
  SearchResult best;
  best.value = INFINITY;
  for (auto& s : starts) {
    SearchResult r = compass_minimize(objective, box, s, so);
    if (r.value < best.value) best = std::move(r);
  }
  if (!(best.value < 1e299)) throw SingularCovariance("no feasible hyperparameters in the search box");
  return unpack(best.x);
}

// ------------------------------------------------------------------- atoms

std::vector<Atom> atoms_from_draws(const PosteriorDraws& draws) {
  std::vector<Atom> atoms;
  const double n = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const auto& th = draws.draws[i];
    for (int l = 0; l < th.regimes(); ++l) {
      atoms.push_back({th.emissions[static_cast<std::size_t>(l)].free_params(), draws.weights[i][l] / n});
    }
  }
  return atoms;
}

std::vector<Atom> atoms_from_plug_in(const PlugInEstimate& plug_in) {
  std::vector<Atom> atoms;
  for (int l = 0; l < plug_in.theta.regimes(); ++l) {
    atoms.push_back({plug_in.theta.emissions[static_cast<std::size_t>(l)].free_params(), plug_in.weights[l]});
  }
  return atoms;
}

// ----------------------------------------------------------- AggregateModel

AggregateModel::AggregateModel(SurrogateModel model, std::vector<Atom> atoms)
    : model_(std::move(model)), atoms_(std::move(atoms)) {
  if (atoms_.empty()) throw std::invalid_argument("aggregate model needs at least one atom");
  for (const auto& a : atoms_) {
    if (a.lambda.size() != model_.hyper().lengthscales_lambda.size()) {
      throw std::invalid_argument("atom dimension does not match the kernel");
    }
    total_weight_ += a.weight;
  }
  for (const auto& a : atoms_) omega_ += a.weight * omega_of(a.lambda);
  design_omega_.reserve(model_.size());
  for (const auto& p : model_.design()) design_omega_.push_back(omega_of(p.lambda));
}

double AggregateModel::omega_of(std::span<const double> lambda) const {
  double s = 0.0;
  for (const auto& a : atoms_) s += a.weight * std::exp(-model_.dist_lambda(a.lambda, lambda));
  return s;
}

double AggregateModel::atom_affinity(std::span<const double> lambda) const { return omega_of(lambda); }

Eigen::VectorXd AggregateModel::weighted_cross_cov(std::span<const double> x) const {
  const auto& design = model_.design();
  Eigen::VectorXd c(static_cast<Eigen::Index>(design.size()));
  const double s2 = model_.hyper().sigma_g2;
  for (std::size_t j = 0; j < design.size(); ++j) {
    c[static_cast<Eigen::Index>(j)] = s2 * std::exp(-model_.dist_x(x, design[j].x)) * design_omega_[j];
  }
  return c;
}

double AggregateModel::mean(std::span<const double> x) const {
  const double base = model_.hyper().mean_offset * total_weight_;
  if (model_.size() == 0) return base;
  return base + weighted_cross_cov(x).dot(model_.alpha());
}

double AggregateModel::cov(std::span<const double> x, std::span<const double> x2) const {
  const double prior = model_.hyper().sigma_g2 * std::exp(-model_.dist_x(x, x2)) * omega_;
  if (model_.size() == 0) return prior;
  const Eigen::VectorXd a = model_.forward_solve(weighted_cross_cov(x));
  const bool same = std::equal(x.begin(), x.end(), x2.begin(), x2.end());
  if (same) return std::max(0.0, prior - a.squaredNorm());
  const Eigen::VectorXd b = model_.forward_solve(weighted_cross_cov(x2));
  return prior - a.dot(b);
}

void AggregateModel::add_point(DesignPoint point) {
  const double w = omega_of(point.lambda);
  model_.add_point(std::move(point));
  design_omega_.push_back(w);
}

// --------------------------------------------------------------------- CSV

void write_design_csv(const std::vector<DesignPoint>& design, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t dx = design.empty() ? 0 : design.front().x.size();
  const std::size_t dl = design.empty() ? 0 : design.front().lambda.size();
  std::vector<std::string> header;
  for (std::size_t i = 1; i <= dx; ++i) header.push_back("x" + std::to_string(i));
  for (std::size_t i = 1; i <= dl; ++i) header.push_back("lambda" + std::to_string(i));
  header.insert(header.end(), {"y_bar", "m", "y_var"});
  csv::write_row(out, header);
  for (const auto& p : design) {
    std::vector<std::string> row;
    for (double v : p.x) row.push_back(csv::format(v));
    for (double v : p.lambda) row.push_back(csv::format(v));
    row.push_back(csv::format(p.y_bar));
    row.push_back(std::to_string(p.m));
    row.push_back(csv::format(p.y_var));
    csv::write_row(out, row);
  }
}

std::vector<DesignPoint> read_design_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  std::vector<std::size_t> xs, ls;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const auto& h = t.header[i];
    if (h.rfind("lambda", 0) == 0) {
      ls.push_back(i);
    } else if (h.size() > 1 && h[0] == 'x') {
      xs.push_back(i);
    }
  }
  const std::size_t cy = t.require("y_bar");
  const std::size_t cm = t.require("m");
  const std::size_t cv = t.require("y_var");
  std::vector<DesignPoint> design;
  const std::string ctx = path.string();
  for (const auto& row : t.rows) {
    DesignPoint p;
    for (std::size_t i : xs) p.x.push_back(csv::to_double(row[i], ctx));
    for (std::size_t i : ls) p.lambda.push_back(csv::to_double(row[i], ctx));
    p.y_bar = csv::to_double(row[cy], ctx);
    p.m = static_cast<int>(csv::to_long(row[cm], ctx));
    p.y_var = csv::to_double(row[cv], ctx);
    if (p.m < 1 || p.y_var < 0.0) throw ConfigError(ctx + ": invalid replication count or variance");
    design.push_back(std::move(p));
  }
  return design;
}

}  // namespace rsopt
