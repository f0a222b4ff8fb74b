#include "rsopt/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rsopt/errors.hpp"
#include "rsopt/lhs.hpp"

namespace rsopt {

std::vector<std::vector<double>> distinct_decisions(const std::vector<DesignPoint>& design) {
  std::vector<std::vector<double>> out;
  for (const auto& p : design) {
    if (std::find(out.begin(), out.end(), p.x) == out.end()) out.push_back(p.x);
  }
  return out;
}

std::vector<bool> positive_parameters(EmissionKind kind) {
  switch (kind) {
    case EmissionKind::Exponential: return {true};
    case EmissionKind::GaussianKnownVar: return {false};
    case EmissionKind::GaussianUnknown: return {false, true};
    case EmissionKind::DiagonalBivariateGaussian: return {false, false, true, true};
  }
  return {};
}

Box lambda_box_from_atoms(const std::vector<Atom>& atoms, double padding, const std::vector<bool>& positive) {
  Box box;
  if (atoms.empty()) return box;
  const std::size_t d = atoms.front().lambda.size();
  box.lo.assign(d, INFINITY);
  box.hi.assign(d, -INFINITY);
  for (const auto& a : atoms) {
    for (std::size_t k = 0; k < d; ++k) {
      box.lo[k] = std::min(box.lo[k], a.lambda[k]);
      box.hi[k] = std::max(box.hi[k], a.lambda[k]);
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double range = box.hi[k] - box.lo[k];
    const double pad = range > 0.0 ? padding * range : padding * std::max(std::abs(box.lo[k]), 1e-3);
    const double min_atom = box.lo[k];
    box.lo[k] -= pad;
    box.hi[k] += pad;
    if (k < positive.size() && positive[k]) box.lo[k] = std::max(box.lo[k], 0.5 * min_atom);
  }
  return box;
}

EiContext make_ei_context(const AggregateModel& agg, Box x_box, Box lambda_box, int replications) {
  EiContext ctx;
  ctx.agg = &agg;
  ctx.x_box = std::move(x_box);
  ctx.lambda_box = std::move(lambda_box);
  ctx.replications = replications;
  ctx.evaluated_x = distinct_decisions(agg.model().design());
  ctx.incumbent = INFINITY;
  for (const auto& x : ctx.evaluated_x) ctx.incumbent = std::min(ctx.incumbent, agg.mean(x));
  return ctx;
}

double tilde_sigma2(const AggregateModel& agg, std::span<const double> x, const Point& candidate, int replications) {
  const SurrogateModel& model = agg.model();
  const double s2 = model.hyper().sigma_g2;
  double numerator = s2 * std::exp(-model.dist_x(x, candidate.x)) * agg.atom_affinity(candidate.lambda);
  double kqq = s2;
  if (model.size() > 0) {
    const Eigen::VectorXd a = model.forward_solve(agg.weighted_cross_cov(x));
    const Eigen::VectorXd b = model.forward_solve(model.cross_cov(candidate));
    numerator -= a.dot(b);
    kqq = std::max(0.0, s2 - b.squaredNorm());
  }
  const double denom = kqq + model.noise_at(candidate) / replications;
  if (!(denom > 1e-14)) throw DegenerateCandidate("candidate has vanishing predictive variance");
  return numerator * numerator / denom;
}

double ei_closed_form(double delta, double sigma) {
  if (!(sigma > 0.0)) return std::max(delta, 0.0);
  const double z = delta / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, delta * cdf + sigma * pdf);
}

EiValue expected_improvement(const EiContext& ctx, const Point& candidate) {
  try {
    const double s = std::sqrt(tilde_sigma2(*ctx.agg, candidate.x, candidate, ctx.replications));
    const double delta = ctx.incumbent - ctx.agg->mean(candidate.x);
    return {ei_closed_form(delta, s), s};
  } catch (const DegenerateCandidate&) {
    return {0.0, 0.0};
  }
}

namespace {

struct Scored {
  Point point;
  EiValue value;
};

Point split(const std::vector<double>& v, std::size_t dx) {
  return {std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(dx)),
          std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(dx), v.end())};
}

std::vector<double> join(const Point& p) {
  std::vector<double> v = p.x;
  v.insert(v.end(), p.lambda.begin(), p.lambda.end());
  return v;
}

}  // namespace

EiResult optimize_ei(const EiContext& ctx, const EiOptions& options, std::uint64_t seed) {
  if (ctx.agg == nullptr || ctx.x_box.dim() == 0) throw std::invalid_argument("EI context is incomplete");
  Rng rng(derive_seed(seed, 1));
  const auto& atoms = ctx.agg->atoms();
  const std::size_t dx = ctx.x_box.dim();
  const std::size_t dl = ctx.lambda_box.dim();

  Box joint;
  joint.lo = ctx.x_box.lo;
  joint.hi = ctx.x_box.hi;
  joint.lo.insert(joint.lo.end(), ctx.lambda_box.lo.begin(), ctx.lambda_box.lo.end());
  joint.hi.insert(joint.hi.end(), ctx.lambda_box.hi.begin(), ctx.lambda_box.hi.end());

  std::vector<double> atom_weights;
  for (const auto& a : atoms) atom_weights.push_back(std::max(a.weight, 0.0));
  const bool weighted = std::any_of(atom_weights.begin(), atom_weights.end(), [](double w) { return w > 0.0; });
  auto draw_atom = [&]() -> std::vector<double> {
    if (dl == 0) return {};
    const std::size_t i = weighted ? categorical_draw(rng, atom_weights) : uniform_index(rng, atoms.size());
    return ctx.lambda_box.clamp(atoms[i].lambda);
  };

  std::vector<Point> seeds;
  const std::size_t n_lhs = static_cast<std::size_t>(std::max(1, options.seed_points / 2));
  for (auto& x : lhs(n_lhs, ctx.x_box, derive_seed(seed, 2), 10)) seeds.push_back({std::move(x), draw_atom()});
  const std::size_t n_eval = std::min<std::size_t>(ctx.evaluated_x.size(), static_cast<std::size_t>(options.seed_points / 4));
  for (std::size_t i = 0; i < n_eval; ++i) {
    const auto& x = ctx.evaluated_x[uniform_index(rng, ctx.evaluated_x.size())];
    seeds.push_back({ctx.x_box.clamp(x), draw_atom()});
  }
  while (seeds.size() < static_cast<std::size_t>(std::max(options.seed_points, 1))) {
    std::vector<double> v(joint.dim());
    for (std::size_t k = 0; k < joint.dim(); ++k) v[k] = uniform(rng, joint.lo[k], joint.hi[k]);
    seeds.push_back(split(v, dx));
  }

  std::vector<Scored> scored;
  scored.reserve(seeds.size());
  for (auto& p : seeds) {
    const EiValue v = expected_improvement(ctx, p);
    scored.push_back({std::move(p), v});
  }

  Scored best = scored.front();
  Scored widest = scored.front();
  auto consider = [&](const Scored& s) {
    if (s.value.ei > best.value.ei) best = s;
    if (s.value.sigma > widest.value.sigma) widest = s;
  };
  for (const auto& s : scored) consider(s);

  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].value.ei > scored[b].value.ei; });

  SearchOptions so;
  so.initial_step = 0.1;
  so.min_step = 1e-4;
  so.max_evals = options.polish_evals;
  const std::size_t polish = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(options.restarts, 0)));
  for (std::size_t r = 0; r < polish; ++r) {
    const auto& start = scored[order[r]];
    auto f = [&](const std::vector<double>& v) {
      const Point p = split(v, dx);
      const EiValue e = expected_improvement(ctx, p);
      consider({p, e});
      return -e.ei;
    };
    compass_minimize(f, joint, join(start.point), so);
  }

  if (best.value.ei <= options.tie_threshold) return {widest.point, widest.value.ei, widest.value.sigma, true};
  return {best.point, best.value.ei, best.value.sigma, false};
}

}  // namespace rsopt
