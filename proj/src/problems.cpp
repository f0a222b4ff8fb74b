#include "rsopt/problems.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "rsopt/csv.hpp"
#include "rsopt/errors.hpp"

namespace rsopt {

InputSampler emission_sampler(const Emission& emission) {
  return [emission](Rng& rng) { return emission.sample(rng); };
}

std::vector<double> Problem::simulate(std::span<const double> x, const Emission& emission, int m,
                                      std::uint64_t seed) const {
  Rng rng(seed);
  return simulate(x, emission_sampler(emission), m, rng);
}

double Problem::true_z(std::span<const double>, const Emission&) const {
  throw Unavailable(name() + " has no closed-form objective");
}

Optimum Problem::true_optimum(const Emission&) const {
  throw Unavailable(name() + " has no closed-form optimum");
}

// ---------------------------------------------------------------- quad_exp

std::vector<double> QuadExpProblem::simulate(std::span<const double> x, const InputSampler& sampler, int m,
                                             Rng& rng) const {
  std::vector<double> y(static_cast<std::size_t>(m));
  for (auto& v : y) {
    const double xi = sampler(rng).value;
    v = (x[0] - xi) * (x[0] - xi) + 10.0 * xi;
  }
  return y;
}

double QuadExpProblem::true_z(std::span<const double> x, const Emission& e) const {
  const double mean = 1.0 / e.rate();
  return (x[0] - mean) * (x[0] - mean) + mean * mean + 10.0 * mean;
}

Optimum QuadExpProblem::true_optimum(const Emission& e) const {
  const double mean = 1.0 / e.rate();
  return {{mean}, 10.0 * mean + mean * mean};
}

// -------------------------------------------------------------- quad_gauss

std::vector<double> QuadGaussProblem::simulate(std::span<const double> x, const InputSampler& sampler, int m,
                                               Rng& rng) const {
  const double base = (x[0] - 10.0) * (x[0] - 10.0) + (x[1] - 20.0) * (x[1] - 20.0);
  const double slope = 4.0 * x[0] + 8.0 * x[1];
  std::vector<double> y(static_cast<std::size_t>(m));
  for (auto& v : y) v = base + sampler(rng).value * slope;
  return y;
}

double QuadGaussProblem::true_z(std::span<const double> x, const Emission& e) const {
  return (x[0] - 10.0) * (x[0] - 10.0) + (x[1] - 20.0) * (x[1] - 20.0) + e.mean() * (4.0 * x[0] + 8.0 * x[1]);
}

Optimum QuadGaussProblem::true_optimum(const Emission& e) const {
  const double mu = e.mean();
  return {{10.0 - 2.0 * mu, 20.0 - 4.0 * mu}, 200.0 * mu - 20.0 * mu * mu};
}

// --------------------------------------------------------------- inventory

void InventoryParams::validate() const {
  if (fixed_cost < 0.0 || unit_cost < 0.0 || holding_cost < 0.0 || backorder_cost < 0.0) {
    throw ConfigError("inventory costs must be >= 0");
  }
  if (horizon < 1 || warmup < 0) throw ConfigError("inventory horizon must be >= 1 and warmup >= 0");
  if (optimum_reps < 1) throw ConfigError("inventory optimum_reps must be >= 1");
}

InventoryProblem::InventoryProblem(InventoryParams params) : params_(params) { params_.validate(); }

std::vector<double> InventoryProblem::simulate(std::span<const double> x, const InputSampler& sampler, int m,
                                               Rng& rng) const {
  const double s = x[0];
  const double big_s = x[1];
  if (!(s < big_s)) throw InvalidPolicy("(s, S) policy needs s < S");
  const InventoryParams& p = params_;
  std::vector<double> y(static_cast<std::size_t>(m));
  for (auto& v : y) {
    double level = p.initial_inventory < 0.0 ? big_s : p.initial_inventory;
    double cost = 0.0;
    for (int t = 0; t < p.warmup + p.horizon; ++t) {
      double period = 0.0;
      if (level < s) {
        period += p.fixed_cost + p.unit_cost * (big_s - level);
        level = big_s;
      }
      level -= std::max(0.0, sampler(rng).value);
      period += level >= 0.0 ? p.holding_cost * level : -p.backorder_cost * level;
      if (t >= p.warmup) cost += period;
    }
    v = cost / p.horizon;
  }
  return y;
}

double InventoryProblem::estimate_cost(double s, double big_s, const Emission& emission, int reps,
                                       std::uint64_t seed) const {
  const std::vector<double> x{s, big_s};
  const auto y = Problem::simulate(x, emission, reps, seed);
  double sum = 0.0;
  for (double v : y) sum += v;
  return sum / reps;
}

Optimum InventoryProblem::true_optimum(const Emission& emission) const {
  if (emission.kind() != EmissionKind::Exponential) throw std::invalid_argument("inventory demand is exponential");
  if (auto it = optimum_cache_.find(emission.rate()); it != optimum_cache_.end()) return it->second;

  const std::uint64_t seed = derive_seed(hash_tag("inventory-optimum"), std::bit_cast<std::uint64_t>(emission.rate()));
  const int reps = params_.optimum_reps;
  Optimum best{{0.0, 0.0}, std::numeric_limits<double>::infinity()};
  auto visit = [&](double s, double big_s) {
    const double c = estimate_cost(s, big_s, emission, reps, seed);
    if (c < best.z) best = {{s, big_s}, c};
  };
  for (double s = 1.0; s <= 69.0; s += 4.0) {
    for (double big_s = 70.0; big_s <= 250.0; big_s += 10.0) visit(s, big_s);
  }
  const double s0 = best.x[0];
  const double b0 = best.x[1];
  for (double s = std::max(1.0, s0 - 3.0); s <= std::min(69.0, s0 + 3.0); s += 1.0) {
    for (double big_s = std::max(70.0, b0 - 8.0); big_s <= std::min(250.0, b0 + 8.0); big_s += 2.0) {
      visit(s, big_s);
    }
  }
  optimum_cache_.emplace(emission.rate(), best);
  return best;
}

// --------------------------------------------------------------- portfolio

std::vector<double> PortfolioProblem::simulate(std::span<const double> x, const InputSampler& sampler, int m,
                                               Rng& rng) const {
  if (m < 2) throw InsufficientSamples("portfolio CEQ needs at least two replications");
  const double w = x[0];
  std::vector<double> r(static_cast<std::size_t>(m));
  double mean = 0.0;
  for (auto& v : r) {
    const Observation o = sampler(rng);
    v = w * o.value + (1.0 - w) * o.value2;
    mean += v;
  }
  mean /= m;
  const double scale = static_cast<double>(m) / (m - 1);
  for (auto& v : r) v = -(v - 0.5 * (v - mean) * (v - mean) * scale);
  return r;
}

double PortfolioProblem::true_z(std::span<const double> x, const Emission& e) const {
  const auto p = e.params();
  const double w = x[0];
  const double mu = w * p[0] + (1.0 - w) * p[1];
  const double var = w * w * p[2] * p[2] + (1.0 - w) * (1.0 - w) * p[3] * p[3];
  return -(mu - 0.5 * var);
}

Optimum PortfolioProblem::true_optimum(const Emission& e) const {
  const auto p = e.params();
  const double v1 = p[2] * p[2];
  const double v2 = p[3] * p[3];
  const double w = std::clamp((p[0] - p[1] + v2) / (v1 + v2), 0.0, 1.0);
  const std::vector<double> x{w};
  return {x, true_z(x, e)};
}

double portfolio_ceq(double x1, std::span<const Observation> returns) {
  if (returns.size() < 2) throw InsufficientSamples("CEQ needs at least two return samples");
  const auto n = static_cast<double>(returns.size());
  double mean = 0.0;
  for (const auto& o : returns) mean += x1 * o.value + (1.0 - x1) * o.value2;
  mean /= n;
  double ss = 0.0;
  for (const auto& o : returns) {
    const double d = x1 * o.value + (1.0 - x1) * o.value2 - mean;
    ss += d * d;
  }
  return mean - 0.5 * ss / (n - 1.0);
}

std::unique_ptr<Problem> make_problem(const std::string& name, const InventoryParams& inventory) {
  if (name == "quad_exp") return std::make_unique<QuadExpProblem>();
  if (name == "quad_gauss") return std::make_unique<QuadGaussProblem>();
  if (name == "inventory") return std::make_unique<InventoryProblem>(inventory);
  if (name == "portfolio") return std::make_unique<PortfolioProblem>();
  throw ConfigError("unknown problem '" + name + "'");
}

ObservationStream ReturnTable::to_stream() const {
  ObservationStream s;
  s.values = returns;
  s.dim = 2;
  return s;
}

ReturnTable read_return_table(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t cd = t.require("date");
  const std::size_t c1 = t.require("ret1");
  const std::size_t c2 = t.require("ret2");
  ReturnTable table;
  const std::string ctx = path.string();
  for (const auto& row : t.rows) {
    if (row[c1].empty() || row[c2].empty()) throw ConfigError(ctx + ": missing return for " + row[cd]);
    table.dates.push_back(row[cd]);
    table.returns.push_back({csv::to_double(row[c1], ctx) / 100.0, csv::to_double(row[c2], ctx) / 100.0});
  }
  if (table.returns.size() < 2) throw InsufficientSamples(ctx + ": fewer than two return rows");
  return table;
}

double gap(const Problem& problem, std::span<const double> x_hat, const Emission& truth, std::uint64_t seed,
           int m_gap) {
  const Optimum opt = problem.true_optimum(truth);
  if (problem.analytic()) return problem.true_z(x_hat, truth) - opt.z;
  const auto a = problem.simulate(x_hat, truth, m_gap, seed);
  const auto b = problem.simulate(opt.x, truth, m_gap, seed);
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] - b[i];
  return d / m_gap;
}

}  // namespace rsopt
