#include "rsopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rsopt/csv.hpp"
#include "rsopt/errors.hpp"

namespace rsopt {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void get_gamma(const json& j, const char* key, GammaPrior& out, const std::string& where) {
  if (!j.contains(key)) return;
  const std::string w = where + "." + key;
  check_keys(j.at(key), {"shape", "rate"}, w);
  get(j.at(key), "shape", out.shape, w);
  get(j.at(key), "rate", out.rate, w);
}

void get_uniform(const json& j, const char* key, UniformPrior& out, const std::string& where) {
  if (!j.contains(key)) return;
  const std::string w = where + "." + key;
  check_keys(j.at(key), {"lo", "hi"}, w);
  get(j.at(key), "lo", out.lo, w);
  get(j.at(key), "hi", out.hi, w);
}

double require_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  double v = 0.0;
  get(j, key, v, where);
  return v;
}

Emission parse_emission(const json& j, EmissionKind kind, double known_sd, const std::string& where) {
  try {
    switch (kind) {
      case EmissionKind::Exponential:
        check_keys(j, {"rate"}, where);
        return Emission::exponential(require_number(j, "rate", where));
      case EmissionKind::GaussianKnownVar: {
        check_keys(j, {"mean", "sd"}, where);
        double sd = known_sd;
        get(j, "sd", sd, where);
        return Emission::gaussian_known_var(require_number(j, "mean", where), sd);
      }
      case EmissionKind::GaussianUnknown:
        check_keys(j, {"mean", "sd"}, where);
        return Emission::gaussian(require_number(j, "mean", where), require_number(j, "sd", where));
      case EmissionKind::DiagonalBivariateGaussian:
        check_keys(j, {"mean1", "mean2", "sd1", "sd2"}, where);
        return Emission::bivariate(require_number(j, "mean1", where), require_number(j, "mean2", where),
                                   require_number(j, "sd1", where), require_number(j, "sd2", where));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unsupported emission family");
}

ThetaVector parse_theta_json(const json& j, EmissionKind kind, double known_sd, const std::string& where) {
  check_keys(j, {"emissions", "transition", "initial"}, where);
  if (!j.contains("emissions") || !j.at("emissions").is_array() || j.at("emissions").empty()) {
    throw ConfigError(where + ": 'emissions' must be a non-empty array");
  }
  std::vector<Emission> emissions;
  for (std::size_t i = 0; i < j.at("emissions").size(); ++i) {
    emissions.push_back(parse_emission(j.at("emissions")[i], kind, known_sd, where + ".emissions[" + std::to_string(i) + "]"));
  }
  const auto r = static_cast<Eigen::Index>(emissions.size());
  std::vector<std::vector<double>> rows;
  get(j, "transition", rows, where);
  if (rows.empty() && r == 1) rows = {{1.0}};
  if (static_cast<Eigen::Index>(rows.size()) != r) throw ConfigError(where + ": transition must be " + std::to_string(r) + " x " + std::to_string(r));
  Eigen::MatrixXd a(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != r) throw ConfigError(where + ": transition row length mismatch");
    for (Eigen::Index k = 0; k < r; ++k) a(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  try {
    if (j.contains("initial")) {
      std::vector<double> init;
      get(j, "initial", init, where);
      if (static_cast<Eigen::Index>(init.size()) != r) throw ConfigError(where + ": initial has the wrong length");
      return ThetaVector(std::move(emissions), TransitionMatrix(a), Eigen::Map<Eigen::VectorXd>(init.data(), r));
    }
    return ThetaVector(std::move(emissions), TransitionMatrix(a));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

EmissionKind problem_kind(const std::string& problem) { return make_problem(problem)->emission_kind(); }

}  // namespace

void ExperimentSpec::validate() const {
  run.validate();
  if (macros < 1) throw ConfigError("macros must be >= 1");
  if (m_gap < 1) throw ConfigError("m_gap must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (methods.empty()) throw ConfigError("at least one method is required");
  const int sources = (truth ? 1 : 0) + (data_file ? 1 : 0) + (returns_file ? 1 : 0);
  if (sources != 1) throw ConfigError("exactly one of truth, data, returns must be given");
  for (const auto* f : {&data_file, &returns_file}) {
    if (*f && !std::filesystem::exists(**f)) throw ConfigError("file not found: " + (*f)->string());
  }
  const EmissionKind kind = problem_kind(problem);
  if (truth && truth->kind() != kind) throw ConfigError("truth does not match the problem's input family");
  if (returns_file && kind != EmissionKind::DiagonalBivariateGaussian) {
    throw ConfigError("return tables feed the portfolio problem only");
  }
  inventory.validate();
}

ThetaVector parse_theta(const std::string& json_text, EmissionKind kind, double known_sd) {
  return parse_theta_json(parse_json(json_text), kind, known_sd, "theta");
}

ExperimentSpec parse_experiment(const std::string& json_text, const std::filesystem::path& base_dir) {
  const json j = parse_json(json_text);
  const std::string w = "config";
  check_keys(j, {"problem", "methods", "macros", "seed", "threads", "m_gap", "h", "t_max", "u", "m", "N_MC", "n0",
                 "regimes", "batch", "burn_in", "thin", "lambda_padding", "log_lambda", "window", "polish", "ei", "fit",
                 "hdp", "prior", "truth", "fixed_theta", "data", "returns", "inventory", "out"},
             w);
  ExperimentSpec spec;
  RunConfig& r = spec.run;
  get(j, "problem", spec.problem, w);
  const EmissionKind kind = problem_kind(spec.problem);
  r.prior.kind = kind;

  if (j.contains("methods")) {
    std::vector<std::string> names;
    get(j, "methods", names, w);
    spec.methods.clear();
    for (const auto& n : names) spec.methods.push_back(method_from_string(n));
  }
  get(j, "macros", spec.macros, w);
  get(j, "seed", r.seed, w);
  get(j, "threads", spec.threads, w);
  get(j, "m_gap", spec.m_gap, w);
  get(j, "h", r.h, w);
  get(j, "t_max", r.t_max, w);
  get(j, "u", r.u, w);
  get(j, "m", r.m, w);
  get(j, "N_MC", r.n_mc, w);
  get(j, "n0", r.n0, w);
  get(j, "regimes", r.regimes, w);
  get(j, "batch", r.batch, w);
  get(j, "burn_in", r.burn_in, w);
  get(j, "thin", r.thin, w);
  get(j, "lambda_padding", r.lambda_padding, w);
  get(j, "log_lambda", r.log_lambda, w);
  get(j, "window", r.window, w);
  get(j, "polish", r.polish, w);

  if (j.contains("ei")) {
    const json& e = j.at("ei");
    const std::string we = w + ".ei";
    check_keys(e, {"restarts", "seed_points", "polish_evals", "tie_threshold"}, we);
    get(e, "restarts", r.ei.restarts, we);
    get(e, "seed_points", r.ei.seed_points, we);
    get(e, "polish_evals", r.ei.polish_evals, we);
    get(e, "tie_threshold", r.ei.tie_threshold, we);
  }
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    const std::string wf = w + ".fit";
    check_keys(f, {"starts", "max_points", "max_evals_per_start", "pool_noise", "noise_var", "center", "per_point_noise"}, wf);
    get(f, "starts", r.fit.starts, wf);
    get(f, "max_points", r.fit.max_points, wf);
    get(f, "max_evals_per_start", r.fit.max_evals_per_start, wf);
    get(f, "pool_noise", r.fit.pool_noise, wf);
    get(f, "noise_var", r.fit.noise_var, wf);
    get(f, "center", r.fit.center, wf);
    get(f, "per_point_noise", r.fit.per_point_noise, wf);
  }
  if (j.contains("prior")) {
    const json& p = j.at("prior");
    const std::string wp = w + ".prior";
    check_keys(p, {"transition_concentration", "rate", "mean", "sd", "known_sd"}, wp);
    get(p, "transition_concentration", r.prior.transition_concentration, wp);
    get_gamma(p, "rate", r.prior.rate, wp);
    get_uniform(p, "mean", r.prior.mean, wp);
    get_uniform(p, "sd", r.prior.sd, wp);
    get(p, "known_sd", r.prior.known_sd, wp);
  }
  if (j.contains("hdp")) {
    const json& h = j.at("hdp");
    const std::string wh = w + ".hdp";
    check_keys(h, {"truncation", "steps", "burn_in", "force_regimes", "alpha", "gamma"}, wh);
    get(h, "truncation", r.hdp_truncation, wh);
    r.prior.hdp.truncation = r.hdp_truncation;
    get(h, "steps", r.hdp_steps, wh);
    get(h, "burn_in", r.hdp_burn_in, wh);
    if (h.contains("force_regimes") && !h.at("force_regimes").is_null()) {
      int f = 0;
      get(h, "force_regimes", f, wh);
      r.force_regimes = f;
    }
    get_gamma(h, "alpha", r.prior.hdp.alpha, wh);
    get_gamma(h, "gamma", r.prior.hdp.gamma, wh);
  }
  if (j.contains("inventory")) {
    const json& v = j.at("inventory");
    const std::string wv = w + ".inventory";
    check_keys(v, {"fixed_cost", "unit_cost", "holding_cost", "backorder_cost", "warmup", "horizon",
                   "initial_inventory", "optimum_reps"},
               wv);
    InventoryParams& p = spec.inventory;
    get(v, "fixed_cost", p.fixed_cost, wv);
    get(v, "unit_cost", p.unit_cost, wv);
    get(v, "holding_cost", p.holding_cost, wv);
    get(v, "backorder_cost", p.backorder_cost, wv);
    get(v, "warmup", p.warmup, wv);
    get(v, "horizon", p.horizon, wv);
    get(v, "initial_inventory", p.initial_inventory, wv);
    get(v, "optimum_reps", p.optimum_reps, wv);
  }
  if (j.contains("truth")) spec.truth = parse_theta_json(j.at("truth"), kind, r.prior.known_sd, w + ".truth");
  if (j.contains("fixed_theta")) r.fixed_theta = parse_theta_json(j.at("fixed_theta"), kind, r.prior.known_sd, w + ".fixed_theta");

  auto resolve = [&](const char* key) -> std::optional<std::filesystem::path> {
    if (!j.contains(key)) return std::nullopt;
    std::string s;
    get(j, key, s, w);
    std::filesystem::path p(s);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  spec.data_file = resolve("data");
  spec.returns_file = resolve("returns");
  if (auto out = resolve("out")) spec.out_dir = *out;

  spec.validate();
  return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), path.parent_path());
}

ObservationStream experiment_stream(const ExperimentSpec& spec, int macro) {
  if (spec.truth) {
    return simulate(*spec.truth, required_observations(spec.run),
                    derive_seed(spec.run.seed, kTagStream, static_cast<std::uint64_t>(macro)));
  }
  if (spec.returns_file) return read_return_table(*spec.returns_file).to_stream();
  return read_stream_csv(*spec.data_file);
}

// ------------------------------------------------------------------ reports

std::vector<SummaryRow> gap_report(const std::vector<GapTrace>& traces) {
  std::vector<Method> order;
  std::map<std::pair<int, int>, std::vector<const GapRow*>> cells;
  for (const auto& tr : traces) {
    if (std::find(order.begin(), order.end(), tr.method) == order.end()) order.push_back(tr.method);
    for (const auto& row : tr.rows) cells[{static_cast<int>(tr.method), row.stage}].push_back(&row);
  }
  std::vector<SummaryRow> out;
  for (Method m : order) {
    for (const auto& [key, rows] : cells) {
      if (key.first != static_cast<int>(m)) continue;
      SummaryRow s;
      s.method = m;
      s.stage = key.second;
      const auto n = static_cast<double>(rows.size());
      double sum = 0.0;
      for (const GapRow* r : rows) sum += r->cum_gap;
      s.mean_cum_gap = sum / n;
      if (rows.size() > 1) {
        double ss = 0.0;
        for (const GapRow* r : rows) ss += (r->cum_gap - s.mean_cum_gap) * (r->cum_gap - s.mean_cum_gap);
        s.se = std::sqrt(ss / (n - 1.0) / n);
      }
      s.regime = rows.front()->regime;
      for (const GapRow* r : rows) {
        if (r->regime != s.regime) s.regime = -1;
      }
      out.push_back(s);
    }
  }
  return out;
}

namespace {

std::string cell(double v) { return std::isfinite(v) ? csv::format(v) : std::string(); }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_traces_csv(const std::vector<GapTrace>& traces, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  std::size_t dim = 0;
  for (const auto& tr : traces) {
    for (const auto& r : tr.rows) dim = std::max(dim, r.x_hat.size());
  }
  std::vector<std::string> header{"method", "macro", "seed", "stage"};
  for (std::size_t k = 0; k < dim; ++k) header.push_back("x" + std::to_string(k + 1));
  for (const char* h : {"regime", "gap", "cum_gap"}) header.emplace_back(h);
  csv::write_row(out, header);
  for (const auto& tr : traces) {
    for (const auto& r : tr.rows) {
      std::vector<std::string> cells{to_string(tr.method), std::to_string(tr.macro), std::to_string(tr.seed),
                                     std::to_string(r.stage)};
      for (std::size_t k = 0; k < dim; ++k) cells.push_back(k < r.x_hat.size() ? csv::format(r.x_hat[k]) : "");
      cells.push_back(std::to_string(r.regime));
      cells.push_back(cell(r.gap));
      cells.push_back(cell(r.cum_gap));
      csv::write_row(out, cells);
    }
  }
}

std::vector<GapTrace> read_traces_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::string ctx = path.string();
  const std::size_t c_method = t.require("method");
  const std::size_t c_macro = t.require("macro");
  const std::size_t c_seed = t.require("seed");
  const std::size_t c_stage = t.require("stage");
  const std::size_t c_regime = t.require("regime");
  const std::size_t c_gap = t.require("gap");
  const std::size_t c_cum = t.require("cum_gap");
  std::vector<std::size_t> c_x;
  for (int k = 1; t.column("x" + std::to_string(k)) >= 0; ++k) c_x.push_back(static_cast<std::size_t>(t.column("x" + std::to_string(k))));
  auto number = [&](const std::string& s) { return s.empty() ? NAN : csv::to_double(s, ctx); };

  std::vector<GapTrace> traces;
  for (const auto& row : t.rows) {
    const Method m = method_from_string(row[c_method]);
    const int macro = static_cast<int>(csv::to_long(row[c_macro], ctx));
    if (traces.empty() || traces.back().method != m || traces.back().macro != macro) {
      GapTrace tr;
      tr.method = m;
      tr.macro = macro;
      tr.seed = std::stoull(row[c_seed]);
      traces.push_back(std::move(tr));
    }
    GapRow r;
    r.stage = static_cast<int>(csv::to_long(row[c_stage], ctx));
    for (std::size_t c : c_x) {
      if (!row[c].empty()) r.x_hat.push_back(csv::to_double(row[c], ctx));
    }
    r.regime = static_cast<int>(csv::to_long(row[c_regime], ctx));
    r.gap = number(row[c_gap]);
    r.cum_gap = number(row[c_cum]);
    traces.back().rows.push_back(std::move(r));
  }
  return traces;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  csv::write_row(out, {"method", "stage", "mean_cum_gap", "se", "regime"});
  for (const auto& r : rows) {
    csv::write_row(out, {to_string(r.method), std::to_string(r.stage), cell(r.mean_cum_gap), cell(r.se),
                         std::to_string(r.regime)});
  }
}

void write_stages_csv(const RunResult& result, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  const std::size_t dim = result.stages.empty() ? 0 : result.stages.front().x_hat.size();
  std::vector<std::string> header{"t"};
  for (std::size_t k = 0; k < dim; ++k) header.push_back("x" + std::to_string(k + 1));
  for (const char* h : {"mu_hat", "n_points", "regimes_used", "s_max", "n_max"}) header.emplace_back(h);
  csv::write_row(out, header);
  for (const auto& s : result.stages) {
    std::vector<std::string> cells{std::to_string(s.t)};
    for (double v : s.x_hat) cells.push_back(csv::format(v));
    cells.push_back(cell(s.mu_hat));
    cells.push_back(std::to_string(s.n_points));
    cells.push_back(std::to_string(s.regimes_used));
    cells.push_back(std::to_string(s.s_max));
    cells.push_back(std::to_string(s.n_max));
    csv::write_row(out, cells);
  }
}

// --------------------------------------------------------------- experiment

namespace {

struct Job {
  Method method;
  int macro;
  GapTrace trace;
  RunResult result;
  std::optional<RunFailure> failure;
};

GapTrace build_trace(const ExperimentSpec& spec, const Problem& problem, const ObservationStream& stream,
                     const RunResult& result, Method method, int macro, std::uint64_t seed) {
  GapTrace tr;
  tr.method = method;
  tr.macro = macro;
  tr.seed = seed;
  double cum = 0.0;
  for (const auto& s : result.stages) {
    GapRow row;
    row.stage = s.t;
    row.x_hat = s.x_hat;
    const std::size_t next = static_cast<std::size_t>(spec.run.h) + static_cast<std::size_t>(s.t) * static_cast<std::size_t>(spec.run.batch);
    if (stream.regimes && next < stream.regimes->size()) row.regime = (*stream.regimes)[next];
    if (spec.truth && row.regime >= 0) {
      const Emission& e = spec.truth->emissions[static_cast<std::size_t>(row.regime)];
      row.gap = gap(problem, s.x_hat, e,
                    derive_seed(spec.run.seed, kTagGap, static_cast<std::uint64_t>(macro), static_cast<std::uint64_t>(s.t)),
                    spec.m_gap);
      cum += row.gap;
      row.cum_gap = cum;
    } else {
      row.gap = NAN;
      row.cum_gap = NAN;
    }
    tr.rows.push_back(std::move(row));
  }
  return tr;
}

void run_job(const ExperimentSpec& spec, const std::vector<ObservationStream>& streams, Job& job) {
  const auto problem = make_problem(spec.problem, spec.inventory);
  const ObservationStream& stream = streams[static_cast<std::size_t>(job.macro)];
  RunConfig cfg = spec.run;
  cfg.method = job.method;
  cfg.seed = derive_seed(spec.run.seed, static_cast<std::uint64_t>(job.macro), hash_tag(to_string(job.method)));
  const auto start = std::chrono::steady_clock::now();
  try {
    job.result = run_method(*problem, stream, cfg);
  } catch (const StageFailure& f) {
    job.result = f.partial();
    job.failure = RunFailure{job.method, job.macro, f.stage(), f.what()};
  } catch (const std::exception& e) {
    job.failure = RunFailure{job.method, job.macro, 0, e.what()};
  }
  try {
    job.trace = build_trace(spec, *problem, stream, job.result, job.method, job.macro, cfg.seed);
  } catch (const std::exception& e) {
    if (!job.failure) job.failure = RunFailure{job.method, job.macro, static_cast<int>(job.result.stages.size()), e.what()};
    job.trace.method = job.method;
    job.trace.macro = job.macro;
    job.trace.seed = cfg.seed;
  }
  job.trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<ObservationStream> streams;
  for (int k = 0; k < spec.macros; ++k) {
    streams.push_back(experiment_stream(spec, k));
    if (streams.back().size() < required_observations(spec.run)) {
      throw ConfigError("data has " + std::to_string(streams.back().size()) + " observations, run needs " +
                        std::to_string(required_observations(spec.run)));
    }
  }

  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir / "streams");
    for (int k = 0; k < spec.macros; ++k) {
      write_stream_csv(streams[static_cast<std::size_t>(k)], spec.out_dir / "streams" / ("macro_" + std::to_string(k) + ".csv"));
    }
  }

  std::vector<Job> jobs;
  for (int k = 0; k < spec.macros; ++k) {
    for (Method m : spec.methods) jobs.push_back(Job{m, k, {}, {}, {}});
  }
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers =
      std::min<std::size_t>(jobs.size(), spec.threads == 0 ? hw : static_cast<std::size_t>(spec.threads));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(spec, streams, jobs[i]);
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  ExperimentResult out;
  for (auto& job : jobs) {
    out.traces.push_back(job.trace);
    if (job.failure) out.failures.push_back(*job.failure);
  }
  out.summary = gap_report(out.traces);

  if (!spec.out_dir.empty()) {
    const auto& dir = spec.out_dir;
    std::ofstream timing = open_out(dir / "timing.log");
    for (const auto& job : jobs) {
      const auto run_dir = dir / "runs" / (to_string(job.method) + "_" + std::to_string(job.macro));
      write_stages_csv(job.result, run_dir / "stages.csv");
      write_design_csv(job.result.design, run_dir / "design.csv");
      timing << to_string(job.method) << " macro " << job.macro << " seed " << job.trace.seed << " wall_time "
             << job.trace.wall_time << " s\n";
    }
    if (jobs.size() == 1) {
      write_stages_csv(jobs.front().result, dir / "stages.csv");
      write_design_csv(jobs.front().result.design, dir / "design.csv");
    }
    write_traces_csv(out.traces, dir / "traces.csv");
    write_summary_csv(out.summary, dir / "summary.csv");
    if (!out.failures.empty()) {
      std::ofstream f = open_out(dir / "failures.csv");
      csv::write_row(f, {"method", "macro", "stage", "message"});
      for (const auto& fl : out.failures) {
        csv::write_row(f, {to_string(fl.method), std::to_string(fl.macro), std::to_string(fl.stage), "\"" + fl.message + "\""});
      }
    }
  }
  return out;
}

// -------------------------------------------------------------- consistency

std::vector<ConsistencyRow> consistency_study(const Problem& problem, const ThetaVector& truth,
                                              std::span<const double> x, const std::vector<int>& t_grid,
                                              std::uint64_t seed, const ConsistencyOptions& options) {
  if (!problem.analytic()) throw Unavailable(problem.name() + " has no closed-form objective");
  if (t_grid.empty() || options.macros < 1) throw std::invalid_argument("consistency study needs t values and macros");
  const int t_max = *std::max_element(t_grid.begin(), t_grid.end());
  if (*std::min_element(t_grid.begin(), t_grid.end()) < 1) throw std::invalid_argument("t values must be >= 1");
  PriorSpec prior = options.prior;
  prior.kind = truth.kind();

  auto objective = [&](const ThetaVector& theta, const Eigen::VectorXd& w) {
    double k = 0.0;
    for (int l = 0; l < theta.regimes(); ++l) k += w(l) * problem.true_z(x, theta.emissions[static_cast<std::size_t>(l)]);
    return k;
  };

  std::vector<ConsistencyRow> rows(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) rows[i].t = t_grid[i];
  for (int k = 0; k < options.macros; ++k) {
    const ObservationStream stream =
        simulate(truth, static_cast<std::size_t>(t_max), derive_seed(seed, kTagStream, static_cast<std::uint64_t>(k)));
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      const ObservationStream data = stream.prefix(static_cast<std::size_t>(t_grid[i]));
      const PosteriorDraws draws =
          options.point_mass
              ? PosteriorDraws::point_mass(truth, data, 1)
              : posterior_draws(data, truth.regimes(), prior, options.gibbs,
                                derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t_grid[i])));
      double post = 0.0;
      for (std::size_t d = 0; d < draws.size(); ++d) post += objective(draws.draws[d], draws.weights[d]);
      post /= static_cast<double>(draws.size());
      const double exact = objective(truth, predictive_weights(filter(truth, data), truth));
      rows[i].errors.push_back(post - exact);
    }
  }
  for (auto& row : rows) {
    const auto n = static_cast<double>(row.errors.size());
    double abs_sum = 0.0;
    double mean = 0.0;
    for (double e : row.errors) {
      abs_sum += std::abs(e);
      mean += e;
    }
    row.mean_abs_error = abs_sum / n;
    mean /= n;
    double ss = 0.0;
    for (double e : row.errors) ss += (e - mean) * (e - mean);
    row.scaled_sd = row.errors.size() > 1 ? std::sqrt(static_cast<double>(row.t) * ss / (n - 1.0)) : 0.0;
  }
  return rows;
}

}  // namespace rsopt
