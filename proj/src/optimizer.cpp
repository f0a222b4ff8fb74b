#include "rsopt/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "rsopt/errors.hpp"
#include "rsopt/lhs.hpp"
#include "rsopt/local_search.hpp"

namespace rsopt {

std::string to_string(Method method) {
  switch (method) {
    case Method::RSOBSO: return "RSOBSO";
    case Method::RSOPSO: return "RSOPSO";
    case Method::NOBSO: return "NOBSO";
    case Method::NOPSO: return "NOPSO";
    case Method::NOKSO: return "NOKSO";
    case Method::HDPHMM_RSOBSO: return "HDPHMM_RSOBSO";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::RSOBSO, Method::RSOPSO, Method::NOBSO, Method::NOPSO, Method::NOKSO,
                   Method::HDPHMM_RSOBSO}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

void RunConfig::validate() const {
  if (h < 1 || t_max < 1 || u < 0 || m < 1 || n_mc < 1 || n0 < 1 || regimes < 1 || batch < 1) {
    throw ConfigError("run counts must be >= 1 (u >= 0)");
  }
  if (burn_in < 0 || thin < 1) throw ConfigError("invalid Gibbs settings");
  if (hdp_truncation < 2 || hdp_steps < 1 || hdp_burn_in < 0) throw ConfigError("invalid HDP settings");
  if (force_regimes && *force_regimes < 1) throw ConfigError("forced regime count must be >= 1");
  if (!(lambda_padding >= 0.0)) throw ConfigError("lambda padding must be >= 0");
  prior.validate();
}

std::size_t required_observations(const RunConfig& config) {
  return static_cast<std::size_t>(config.h) + static_cast<std::size_t>(config.t_max) * static_cast<std::size_t>(config.batch);
}

std::vector<Atom> stage_atoms(Method method, const PosteriorDraws& draws) {
  switch (method) {
    case Method::RSOBSO:
    case Method::HDPHMM_RSOBSO:
    case Method::NOBSO: return atoms_from_draws(draws);
    case Method::RSOPSO:
    case Method::NOPSO: return atoms_from_plug_in(plug_in_estimate(draws));
    case Method::NOKSO: return {Atom{{}, 1.0}};
  }
  return {};
}

RegimeCount infer_regime_count(const ObservationStream& stream, int n_max, int m_steps, double tau,
                               const PriorSpec& prior, std::uint64_t seed, int burn_in) {
  if (n_max < 2 || m_steps < 1) throw std::invalid_argument("regime-count inference needs n_max >= 2 and m_steps >= 1");
  WeakLimitHdpSampler sampler(stream, n_max, prior, seed);
  for (int i = 0; i < burn_in; ++i) sampler.sweep();
  RegimeCount out;
  std::map<int, int> freq;
  for (int i = 0; i < m_steps; ++i) {
    sampler.sweep();
    const Eigen::VectorXd beta = sampler.state().beta;
    const int s = static_cast<int>((beta.array() >= tau).count());
    out.counts.push_back(s);
    ++freq[s];
  }
  int best = -1;
  for (const auto& [s, f] : freq) {
    if (f > best) {
      best = f;
      out.r_hat = s;
    }
  }
  out.s_max = *std::max_element(out.counts.begin(), out.counts.end());
  if (out.r_hat < 1) {
    out.r_hat = 1;
    out.clamped = true;
  }
  out.s_max = std::max(out.s_max, out.r_hat);
  return out;
}

namespace {

enum : std::uint64_t {
  kTagPosterior = 0x706f7374,
  kTagDesign = 0x64657369,
  kTagEval = 0x6576616c,
  kTagFit = 0x66697421,
  kTagEi = 0x65692121,
  kTagHdp = 0x68647021,
};

bool one_regime(Method method) {
  return method == Method::NOBSO || method == Method::NOPSO || method == Method::NOKSO;
}

struct StageInputs {
  PosteriorDraws draws;
  std::vector<Atom> atoms;
  std::optional<KdeModel> kde;
  int regimes = 1;
  int s_max = 0;
  int n_max = 0;
};

class StageRunner {
 public:
  StageRunner(const Problem& problem, const ObservationStream& stream, const RunConfig& config)
      : problem_(problem), stream_(stream), cfg_(config), x_box_(problem.bounds()), n_max_(config.hdp_truncation) {
    cfg_.validate();
    cfg_.prior.kind = problem.emission_kind();
    positive_ = positive_parameters(problem.emission_kind());
    if (stream.size() < required_observations(cfg_)) {
      throw ConfigError("stream has " + std::to_string(stream.size()) + " observations, run needs " +
                        std::to_string(required_observations(cfg_)));
    }
    if (stream.dim != observation_dim(problem.emission_kind())) {
      throw ConfigError("stream dimension does not match the problem's input");
    }
    if (cfg_.fixed_theta && cfg_.fixed_theta->kind() != problem.emission_kind()) {
      throw ConfigError("fixed parameters do not match the problem's input family");
    }
  }

  RunResult run() {
    RunResult result;
    std::vector<DesignPoint> design;
    int t = 0;
    try {
      stages(result, design, t);
    } catch (const Error& e) {
      for (auto& p : design) p.lambda = from_kernel(p.lambda);
      result.design = std::move(design);
      throw StageFailure(t, e.what(), std::move(result));
    }
    for (auto& p : design) p.lambda = from_kernel(p.lambda);
    result.design = std::move(design);
    return result;
  }

 private:
  void stages(RunResult& result, std::vector<DesignPoint>& design, int& t) {
    StageInputs inputs = prepare(0);
    design = initial_design(inputs);
    for (auto& p : design) p.lambda = to_kernel(p.lambda);
    result.initial_points = design.size();

    for (t = 0; t < cfg_.t_max; ++t) {
      const auto start = std::chrono::steady_clock::now();
      if (t > 0) inputs = prepare(t);
      if (cfg_.window > 0 && design.size() > cfg_.window) {
        design.erase(design.begin(), design.end() - static_cast<std::ptrdiff_t>(cfg_.window));
      }

      const KernelHyperparams hyper =
          fit_hyperparams(design, default_bounds(design), derive_seed(cfg_.seed, kTagFit, static_cast<std::uint64_t>(t)), cfg_.fit);
      AggregateModel agg(SurrogateModel(design, hyper), to_kernel(inputs.atoms));
      const Box lambda_box =
          to_kernel(lambda_box_from_atoms(inputs.atoms, cfg_.lambda_padding, positive_));

      for (int e = 0; e < cfg_.u; ++e) {
        const EiContext ctx = make_ei_context(agg, x_box_, lambda_box, cfg_.m);
        const std::uint64_t s = derive_seed(cfg_.seed, kTagEi, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(e));
        EiResult pick = optimize_ei(ctx, cfg_.ei, s);
        DesignPoint p = evaluate(std::move(pick.point.x), from_kernel(pick.point.lambda), inputs);
        p.lambda = to_kernel(p.lambda);
        agg.add_point(std::move(p));
      }
      design = agg.model().design();
      StageResult stage;
      stage.t = t;
      std::tie(stage.x_hat, stage.mu_hat) = stage_decision(agg);
      stage.n_points = design.size();
      stage.regimes_used = inputs.regimes;
      stage.s_max = inputs.s_max;
      stage.n_max = inputs.n_max;
      stage.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.stages.push_back(std::move(stage));
    }
  }

  ObservationStream data_for(int t) const {
    return stream_.prefix(static_cast<std::size_t>(cfg_.h) + static_cast<std::size_t>(t) * static_cast<std::size_t>(cfg_.batch));
  }

  StageInputs prepare(int t) {
    StageInputs in;
    const ObservationStream data = data_for(t);
    if (cfg_.method == Method::NOKSO) {
      in.kde = kde_fit(data);
      in.atoms = stage_atoms(Method::NOKSO, in.draws);
      return in;
    }

    int regimes = one_regime(cfg_.method) ? 1 : cfg_.regimes;
    if (cfg_.method == Method::HDPHMM_RSOBSO) {
      in.n_max = n_max_;
      if (cfg_.force_regimes) {
        regimes = *cfg_.force_regimes;
      } else {
        const double tau = 1.0 / std::sqrt(static_cast<double>(data.size()));
        const RegimeCount rc = infer_regime_count(data, n_max_, cfg_.hdp_steps, tau, cfg_.prior,
                                                  derive_seed(cfg_.seed, kTagHdp, static_cast<std::uint64_t>(t)),
                                                  cfg_.hdp_burn_in);
        regimes = rc.r_hat;
        in.s_max = rc.s_max;
        n_max_ = std::max(2, rc.s_max + 1);
      }
    }
    in.regimes = regimes;

    if (cfg_.fixed_theta) {
      in.draws = PosteriorDraws::point_mass(*cfg_.fixed_theta, data, 1);
      in.regimes = cfg_.fixed_theta->regimes();
    } else {
      GibbsOptions g{cfg_.n_mc, cfg_.burn_in, cfg_.thin};
      in.draws = posterior_draws(data, regimes, cfg_.prior, g, derive_seed(cfg_.seed, kTagPosterior, static_cast<std::uint64_t>(t)));
    }
    in.atoms = stage_atoms(cfg_.method, in.draws);
    return in;
  }

  std::vector<DesignPoint> initial_design(const StageInputs& in) {
    const bool regime_design = !one_regime(cfg_.method);
    const int per_x = regime_design ? in.regimes : 1;
    const int spec_r = cfg_.method == Method::HDPHMM_RSOBSO ? in.regimes : cfg_.regimes;
    const std::size_t n_x = static_cast<std::size_t>(cfg_.n0) * static_cast<std::size_t>(regime_design ? 1 : spec_r);
    const auto xs = lhs(n_x, x_box_, derive_seed(cfg_.seed, kTagDesign));

    std::vector<DesignPoint> design;
    auto draw_lambda = [&](std::size_t i, std::size_t count, int regime) -> std::vector<double> {
      if (cfg_.method == Method::NOKSO) return {};
      const std::size_t k = i * in.draws.size() / count;
      return in.draws.draws[k].emissions[static_cast<std::size_t>(regime)].free_params();
    };
    for (int l = 0; l < per_x; ++l) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        design.push_back(evaluate(xs[i], draw_lambda(i, xs.size(), l), in));
      }
    }
    return design;
  }

  DesignPoint evaluate(std::vector<double> x, std::vector<double> lambda, const StageInputs& in) {
    Rng rng(derive_seed(cfg_.seed, kTagEval, evaluations_++));
    std::vector<double> y;
    if (in.kde) {
      const KdeModel& kde = *in.kde;
      y = problem_.simulate(x, [&kde](Rng& r) { return kde_draw(kde, r); }, cfg_.m, rng);
    } else {
      const Emission e = Emission::from_free_params(problem_.emission_kind(), lambda, cfg_.prior.known_sd);
      y = problem_.simulate(x, emission_sampler(e), cfg_.m, rng);
    }
    DesignPoint p;
    p.x = std::move(x);
    p.lambda = std::move(lambda);
    p.m = cfg_.m;
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= cfg_.m;
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    p.y_bar = mean;
    p.y_var = cfg_.m > 1 ? ss / (cfg_.m - 1) : 0.0;
    return p;
  }

  std::pair<std::vector<double>, double> stage_decision(const AggregateModel& agg) const {
    std::vector<double> best;
    double best_mu = INFINITY;
    for (const auto& x : distinct_decisions(agg.model().design())) {
      const double mu = agg.mean(x);
      if (mu < best_mu) {
        best_mu = mu;
        best = x;
      }
    }
    if (!cfg_.polish) return {best, best_mu};
    SearchOptions so;
    so.initial_step = 0.05;
    so.min_step = 1e-5;
    so.max_evals = 200;
    SearchResult r = compass_minimize([&](const std::vector<double>& x) { return agg.mean(x); }, x_box_, best, so);
    return {std::move(r.x), r.value};
  }

  bool warped(std::size_t k) const { return cfg_.log_lambda && k < positive_.size() && positive_[k]; }

  std::vector<double> to_kernel(std::vector<double> v) const {
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (warped(k)) v[k] = std::log(v[k]);
    }
    return v;
  }

  std::vector<double> from_kernel(std::vector<double> v) const {
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (warped(k)) v[k] = std::exp(v[k]);
    }
    return v;
  }

  std::vector<Atom> to_kernel(std::vector<Atom> atoms) const {
    for (auto& a : atoms) a.lambda = to_kernel(std::move(a.lambda));
    return atoms;
  }

  Box to_kernel(Box box) const {
    box.lo = to_kernel(std::move(box.lo));
    box.hi = to_kernel(std::move(box.hi));
    return box;
  }

  const Problem& problem_;
  const ObservationStream& stream_;
  RunConfig cfg_;
  std::vector<bool> positive_;
  Box x_box_;
  int n_max_;
  std::uint64_t evaluations_ = 0;
};

}  // namespace

RunResult run_method(const Problem& problem, const ObservationStream& stream, const RunConfig& config) {
  return StageRunner(problem, stream, config).run();
}

RunResult run_rsobso(const Problem& problem, const ObservationStream& stream, RunConfig config) {
  config.method = Method::RSOBSO;
  return run_method(problem, stream, config);
}

RunResult run_benchmark(const Problem& problem, const ObservationStream& stream, RunConfig config) {
  if (config.method == Method::RSOBSO || config.method == Method::HDPHMM_RSOBSO) {
    throw ConfigError("run_benchmark expects RSOPSO, NOBSO, NOPSO or NOKSO");
  }
  return run_method(problem, stream, config);
}

RunResult run_hdphmm_rsobso(const Problem& problem, const ObservationStream& stream, RunConfig config) {
  config.method = Method::HDPHMM_RSOBSO;
  return run_method(problem, stream, config);
}

}  // namespace rsopt
