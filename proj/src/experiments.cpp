#include "otreweight/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "otreweight/csv.hpp"
#include "otreweight/error.hpp"
#include "otreweight/fairness.hpp"
#include "otreweight/parallel.hpp"
#include "otreweight/portfolio.hpp"
#include "otreweight/reweight.hpp"
#include "otreweight/rng.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

using nlohmann::json;

namespace {

// Reads fields of one JSON object with defaults, records the effective
// values and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& source, std::string where) : where_(std::move(where)) {
    if (source.is_null()) {
      src_ = json::object();
    } else if (!source.is_object()) {
      throw ConfigError("config: '" + where_ + "' must be an object");
    } else {
      src_ = source;
    }
    out_ = json::object();
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    T value = fallback;
    if (src_.contains(key) && !src_.at(key).is_null()) {
      try {
        value = src_.at(key).get<T>();
      } catch (const json::exception&) {
        throw ConfigError("config: '" + where_ + "." + key + "' has the wrong type");
      }
    }
    out_[key] = value;
    return value;
  }

  template <class T>
  T require(const std::string& key) {
    if (!src_.contains(key) || src_.at(key).is_null())
      throw ConfigError("config: '" + where_ + "." + key + "' is required");
    return get<T>(key, T{});
  }

  bool has(const std::string& key) const { return src_.contains(key) && !src_.at(key).is_null(); }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(src_.contains(key) ? src_.at(key) : json(), where_ + "." + key);
  }

  void put(const std::string& key, json value) { out_[key] = std::move(value); }

  json finish() const {
    for (const auto& item : src_.items())
      if (!seen_.count(item.key()))
        throw ConfigError("config: unknown key '" + where_ + "." + item.key() + "'");
    return out_;
  }

 private:
  json src_;
  json out_;
  std::string where_;
  std::set<std::string> seen_;
};

QuadratureConfig read_quad(Section s, json& effective) {
  QuadratureConfig q;
  q.nodes = s.get<int>("nodes", q.nodes);
  q.tail = s.get<double>("tail", q.tail);
  effective = s.finish();
  validate(q);
  return q;
}

SolverConfig read_solver(Section s, json& effective, SolverConfig c = {}) {
  c.max_iterations = s.get<int>("max_iterations", c.max_iterations);
  c.tolerance = s.get<double>("tolerance", c.tolerance);
  c.initial_step = s.get<double>("initial_step", c.initial_step);
  c.backtracking = s.get<double>("backtracking", c.backtracking);
  effective = s.finish();
  validate(c);
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_stream(seed, stream);
  return rng();
}

void write_table(const std::filesystem::path& dir, const std::string& name, const csv::Table& table,
                 RunOutput& out) {
  csv::write_file(dir / name, table);
  out.files.push_back(name);
}

std::string num(double v) { return csv::number(v); }

// JSON cannot hold NaN; undefined statistics become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(); }

json jvec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(jnum(x));
  return a;
}

json jvec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(jnum(v(i)));
  return a;
}

// ---------------------------------------------------------------- survey

struct MethodResult {
  bool ok = false;
  double mu = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
  Eigen::Vector2d lower = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  Eigen::Vector2d upper = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  int failures = 0;
};

struct ReplicateResult {
  std::vector<MethodResult> methods;
};

MethodResult from_fit(const Eigen::VectorXd& theta, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  MethodResult r;
  r.ok = true;
  r.mu = theta(0);
  r.sigma2 = theta(1);
  r.lower = lo.head<2>();
  r.upper = hi.head<2>();
  return r;
}

// Distance on the (mu, sigma) scale and on the (mu, sigma^2) scale.
double bias_sd(const MethodResult& r, double mu, double var) {
  return std::hypot(r.mu - mu, std::sqrt(std::max(r.sigma2, 0.0)) - std::sqrt(var));
}
double bias_var(const MethodResult& r, double mu, double var) { return std::hypot(r.mu - mu, r.sigma2 - var); }

bool covers(const MethodResult& r, double mu, double var) {
  return r.lower(0) <= mu && mu <= r.upper(0) && r.lower(1) <= var && var <= r.upper(1);
}

const std::vector<std::string> kSurveyMethods = {"MLE", "PMLE", "BDCM"};

MethodResult run_method(const std::string& method, const SurveySample& sample, const BdcmConfig& bdcm,
                        std::uint64_t seed) {
  try {
    if (method == "MLE") {
      const PmleFit f = mle_normal(sample.x.col(0));
      return from_fit(f.theta, f.ci_lower, f.ci_upper);
    }
    if (method == "PMLE") {
      const PmleFit f = pmle_normal(sample);
      return from_fit(f.theta, f.ci_lower, f.ci_upper);
    }
    const BdcmFit f = bdcm_fit(sample, mean_deviation(), bdcm, seed, 1);
    MethodResult r = from_fit(f.theta, f.ci_lower, f.ci_upper);
    r.failures = f.failures;
    return r;
  } catch (const FitError&) {
    MethodResult r;
    r.failures = method == "BDCM" ? bdcm.replicates : 1;
    return r;
  }
}

RunOutput survey_from_data(Section& root, const std::vector<std::string>& methods, const BdcmConfig& bdcm,
                           std::uint64_t seed, const std::filesystem::path& out_dir) {
  const std::string path = root.get<std::string>("data", "");
  const csv::Table table = csv::read_file(path);
  const std::size_t pi_col = table.column("pi");
  std::vector<std::size_t> x_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != pi_col) x_cols.push_back(c);
  if (x_cols.empty()) throw ConfigError("survey: data needs at least one x column");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(x_cols.size()));
  Eigen::VectorXd pi(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < x_cols.size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = table.number(r, x_cols[c]);
    pi(static_cast<Eigen::Index>(r)) = table.number(r, pi_col);
  }
  const SurveySample sample = make_survey_sample(std::move(x), pi);

  RunOutput out;
  csv::Table est{{"method", "mu", "sigma2", "mu_lower", "mu_upper", "sigma2_lower", "sigma2_upper"}, {}};
  json results = json::array();
  for (const auto& m : methods) {
    const MethodResult r = run_method(m, sample, bdcm, derive_seed(seed, 7));
    est.rows.push_back({m, num(r.mu), num(r.sigma2), num(r.lower(0)), num(r.upper(0)), num(r.lower(1)),
                        num(r.upper(1))});
    results.push_back({{"method", m}, {"ok", r.ok}, {"mu", jnum(r.mu)}, {"sigma2", jnum(r.sigma2)},
                       {"failed_bootstrap_replicates", r.failures}});
  }
  write_table(out_dir, "survey_estimates.csv", est, out);
  out.report["results"] = results;
  return out;
}

}  // namespace

RunOutput run_survey_experiment(const json& config, std::uint64_t seed, const std::filesystem::path& out_dir,
                                int jobs) {
  Section root(config, "survey");
  SimulationConfig base;
  base.population = root.get<std::size_t>("population", base.population);
  base.mu_x = root.get<double>("mu_x", base.mu_x);
  base.mu_z = root.get<double>("mu_z", base.mu_z);
  base.var_x = root.get<double>("var_x", base.var_x);
  base.var_z = root.get<double>("var_z", base.var_z);
  base.beta0 = root.get<double>("beta0", base.beta0);
  base.beta1 = root.get<double>("beta1", base.beta1);
  base.replicates = root.get<int>("replicates", base.replicates);
  base.bootstrap = root.get<int>("bootstrap", base.bootstrap);
  const auto methods = root.get<std::vector<std::string>>("methods", kSurveyMethods);
  for (const auto& m : methods)
    if (std::find(kSurveyMethods.begin(), kSurveyMethods.end(), m) == kSurveyMethods.end())
      throw ConfigError("survey: unknown method '" + m + "'");

  BdcmConfig bdcm;
  bdcm.replicates = base.bootstrap;
  {
    Section b = root.child("bdcm");
    bdcm.population = b.get<std::size_t>("pseudo_population", base.population);
    bdcm.tie_break = b.get<double>("tie_break", bdcm.tie_break);
    bdcm.simplex_tolerance = b.get<double>("simplex_tolerance", bdcm.simplex_tolerance);
    bdcm.max_evaluations = b.get<int>("max_evaluations", bdcm.max_evaluations);
    root.put("bdcm", b.finish());
  }
  {
    json q;
    bdcm.quad = read_quad(root.child("quadrature"), q);
    root.put("quadrature", q);
  }
  if (!(bdcm.tie_break >= 0.0) || !(bdcm.simplex_tolerance > 0.0) || bdcm.max_evaluations < 1)
    throw ConfigError("survey: bad bdcm settings");

  if (root.has("data")) {
    RunOutput out = survey_from_data(root, methods, bdcm, seed, out_dir);
    out.report["config"] = root.finish();
    return out;
  }

  struct Cell {
    std::size_t n;
    double rho;
  };
  std::vector<Cell> cells;
  {
    const json default_cells = json::array({json{{"n", 500}, {"rho", 0.5}}});
    const json raw = root.get<json>("cells", default_cells);
    if (!raw.is_array() || raw.empty()) throw ConfigError("survey: 'cells' must be a nonempty array");
    json effective = json::array();
    for (const auto& c : raw) {
      Section s(c, "survey.cells[]");
      Cell cell{s.require<std::size_t>("n"), s.require<double>("rho")};
      effective.push_back(s.finish());
      cells.push_back(cell);
    }
    root.put("cells", effective);
  }
  const json effective = root.finish();

  RunOutput out;
  csv::Table per_rep{{"n", "rho", "replicate", "method", "mu", "sigma2", "mu_lower", "mu_upper",
                      "sigma2_lower", "sigma2_upper", "bias", "bias_sigma_scale", "covered",
                      "failed_bootstrap_replicates"},
                     {}};
  csv::Table summary{{"n", "rho", "method", "bias", "coverage"}, {}};
  json cell_reports = json::array();

  for (std::size_t c = 0; c < cells.size(); ++c) {
    SimulationConfig cfg = base;
    cfg.n = cells[c].n;
    cfg.rho = cells[c].rho;
    validate(cfg);
    if (bdcm.population < cfg.n) throw ConfigError("survey: pseudo_population must be at least n");
    const std::uint64_t cell_seed = derive_seed(seed, 100 + c);
    // One finite population per cell; replicates redraw the sample.
    const Population pop = simulate_population(cfg, cell_seed);

    const auto reps = map_parallel<ReplicateResult>(
        static_cast<std::size_t>(cfg.replicates), jobs, [&](std::size_t r) {
          const SurveySample sample = draw_sample(cfg, pop, cell_seed, r);
          ReplicateResult res;
          for (const auto& m : methods)
            res.methods.push_back(run_method(m, sample, bdcm, derive_seed(cell_seed, 1000 + r)));
          return res;
        });

    json method_reports = json::array();
    for (std::size_t k = 0; k < methods.size(); ++k) {
      double sum_sd = 0.0, sum_var = 0.0;
      int ok = 0, covered = 0, boot_failures = 0;
      for (std::size_t r = 0; r < reps.size(); ++r) {
        const MethodResult& m = reps[r].methods[k];
        boot_failures += m.failures;
        const bool cov = m.ok && covers(m, cfg.mu_x, cfg.var_x);
        per_rep.rows.push_back({std::to_string(cfg.n), num(cfg.rho), std::to_string(r), methods[k], num(m.mu),
                                num(m.sigma2), num(m.lower(0)), num(m.upper(0)), num(m.lower(1)),
                                num(m.upper(1)), num(m.ok ? bias_var(m, cfg.mu_x, cfg.var_x) : NAN),
                                num(m.ok ? bias_sd(m, cfg.mu_x, cfg.var_x) : NAN), cov ? "1" : "0",
                                std::to_string(m.failures)});
        if (!m.ok) continue;
        ++ok;
        sum_sd += bias_sd(m, cfg.mu_x, cfg.var_x);
        sum_var += bias_var(m, cfg.mu_x, cfg.var_x);
        covered += cov ? 1 : 0;
      }
      const double bias = ok ? sum_var / ok : NAN;
      const double coverage = ok ? static_cast<double>(covered) / ok : NAN;
      summary.rows.push_back({std::to_string(cfg.n), num(cfg.rho), methods[k], num(bias), num(coverage)});
      method_reports.push_back({{"method", methods[k]},
                                {"bias", jnum(bias)},
                                {"bias_sigma_scale", jnum(ok ? sum_sd / ok : NAN)},
                                {"coverage", jnum(coverage)},
                                {"successful_replicates", ok},
                                {"failed_bootstrap_replicates", boot_failures}});
    }
    cell_reports.push_back({{"n", cfg.n}, {"rho", cfg.rho}, {"methods", method_reports}});
  }

  write_table(out_dir, "survey_replicates.csv", per_rep, out);
  write_table(out_dir, "survey_summary.csv", summary, out);
  out.report["config"] = effective;
  out.report["results"] = {{"cells", cell_reports},
                           {"truth", {{"mu", base.mu_x}, {"sigma2", base.var_x}}},
                           {"bias_definition", "mean over replicates of ||(mu, sigma^2) - (mu_hat, sigma_hat^2)||"},
                           {"bias_sigma_scale_definition", "same with sigma in place of sigma^2"}};
  return out;
}

// -------------------------------------------------------------- fairness

namespace {

FairDataset read_fair_data(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t y_col = table.column("y");
  const std::size_t a_col = table.column("a");
  std::vector<std::size_t> x_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != y_col && c != a_col) x_cols.push_back(c);
  // S records first, each group in file order.
  std::vector<std::size_t> order;
  for (const char* label : {"S", "T"})
    for (std::size_t r = 0; r < table.rows.size(); ++r)
      if (table.rows[r][a_col] == label) order.push_back(r);
  if (order.size() != table.rows.size()) throw ConfigError("fairness: column 'a' must hold S or T");
  FairDataset data;
  data.x.resize(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(x_cols.size()));
  data.y.resize(static_cast<Eigen::Index>(order.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t r = order[i];
    if (table.rows[r][a_col] == "S") ++data.n_s;
    data.y(static_cast<Eigen::Index>(i)) = table.number(r, y_col);
    for (std::size_t c = 0; c < x_cols.size(); ++c)
      data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = table.number(r, x_cols[c]);
  }
  validate(data);
  return data;
}

void append_cdf(csv::Table& table, const std::string& scheme, const std::string& group,
                const std::vector<double>& values, const std::vector<double>& weights) {
  const SortedAtoms sorted(values);
  double cumulative = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += weights[sorted.order()[k]];
    table.rows.push_back({scheme, group, num(sorted.sorted(k)), num(std::min(cumulative, 1.0))});
  }
}

json fit_json(const FairFit& f) {
  return {{"w2", std::sqrt(f.w2sq)}, {"w2sq", f.w2sq},         {"entropy", f.entropy},
          {"lambda_star", f.lambda}, {"objective", f.objective}, {"iterations", f.iterations},
          {"converged", f.converged}, {"theta_s", jvec(f.theta_s)}, {"theta_t", jvec(f.theta_t)},
          {"sigma2", f.sigma2}};
}

}  // namespace

RunOutput run_fairness_experiment(const json& config, std::uint64_t seed, const std::filesystem::path& out_dir,
                                  int jobs) {
  Section root(config, "fairness");
  FairDataset data;
  if (root.has("data")) {
    data = read_fair_data(root.get<std::string>("data", ""));
  } else {
    Section s = root.child("synth");
    FairSynthConfig sc;
    sc.n_s = s.get<std::size_t>("n_s", sc.n_s);
    sc.n_t = s.get<std::size_t>("n_t", sc.n_t);
    sc.p = s.get<std::size_t>("p", sc.p);
    sc.intercept_s = s.get<double>("intercept_s", sc.intercept_s);
    sc.gap = s.get<double>("gap", sc.gap);
    sc.slope_s = s.get<double>("slope_s", sc.slope_s);
    sc.slope_t = s.get<double>("slope_t", sc.slope_t);
    sc.noise = s.get<double>("noise", sc.noise);
    root.put("synth", s.finish());
    data = synth_fair_data(sc, seed);
  }
  const double lambda_star = root.get<double>("lambda_star", 0.0);
  std::vector<double> default_grid;
  for (int k = 0; k <= 10; ++k) default_grid.push_back(k / 10.0);
  const auto grid = root.get<std::vector<double>>("grid", default_grid);
  InModelConfig im;
  {
    json e;
    im.weights = read_solver(root.child("solver"), e, SolverConfig{20000, 1e-9, 1.0, 0.5});
    root.put("solver", e);
  }
  im.max_cycles = root.get<int>("max_cycles", im.max_cycles);
  im.tolerance = root.get<double>("cycle_tolerance", im.tolerance);
  const json effective = root.finish();

  const FairFit unconstrained = fit_unconstrained(data);
  const FairFit two_step = fit_two_step(data, lambda_star, im.weights);
  const FairFit in_model = fit_in_model(data, lambda_star, im);

  RunOutput out;
  const Eigen::MatrixXd xs = data.x.topRows(static_cast<Eigen::Index>(data.n_s));
  const Eigen::MatrixXd xt = data.x.bottomRows(static_cast<Eigen::Index>(data.n_t()));
  csv::Table cdf{{"scheme", "group", "value", "cumulative"}, {}};
  csv::Table coef{{"scheme", "group", "index", "value"}, {}};
  csv::Table weights{{"scheme", "index", "weight"}, {}};
  const std::pair<const char*, const FairFit*> fits[] = {
      {"unconstrained", &unconstrained}, {"two_step", &two_step}, {"in_model", &in_model}};
  for (const auto& [name, fit] : fits) {
    const Eigen::VectorXd hs = linear_predictor(xs, fit->theta_s);
    const Eigen::VectorXd ht = linear_predictor(xt, fit->theta_t);
    append_cdf(cdf, name, "S", {hs.data(), hs.data() + hs.size()},
               std::vector<double>(data.n_s, 1.0 / static_cast<double>(data.n_s)));
    append_cdf(cdf, name, "T", {ht.data(), ht.data() + ht.size()}, fit->w);
    for (Eigen::Index j = 0; j < fit->theta_s.size(); ++j)
      coef.rows.push_back({name, "S", std::to_string(j), num(fit->theta_s(j))});
    for (Eigen::Index j = 0; j < fit->theta_t.size(); ++j)
      coef.rows.push_back({name, "T", std::to_string(j), num(fit->theta_t(j))});
    for (std::size_t i = 0; i < fit->w.size(); ++i)
      weights.rows.push_back({name, std::to_string(i), num(fit->w[i])});
  }

  struct GridRow {
    FairFit two_step;
    FairFit in_model;
  };
  const auto rows = map_parallel<GridRow>(grid.size(), jobs, [&](std::size_t k) {
    return GridRow{fit_two_step(data, grid[k], im.weights), fit_in_model(data, grid[k], im)};
  });
  csv::Table grid_table{{"scheme", "lambda_star", "w2", "entropy"}, {}};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid_table.rows.push_back({"two_step", num(grid[k]), num(std::sqrt(rows[k].two_step.w2sq)),
                               num(rows[k].two_step.entropy)});
    grid_table.rows.push_back({"in_model", num(grid[k]), num(std::sqrt(rows[k].in_model.w2sq)),
                               num(rows[k].in_model.entropy)});
  }

  write_table(out_dir, "fairness_cdf.csv", cdf, out);
  write_table(out_dir, "fairness_coefficients.csv", coef, out);
  write_table(out_dir, "fairness_weights.csv", weights, out);
  write_table(out_dir, "fairness_grid.csv", grid_table, out);
  out.report["config"] = effective;
  out.report["results"] = {{"n_s", data.n_s},
                           {"n_t", data.n_t()},
                           {"unconstrained", fit_json(unconstrained)},
                           {"two_step", fit_json(two_step)},
                           {"in_model", fit_json(in_model)}};
  return out;
}

// ------------------------------------------------------------- portfolio

namespace {

ReturnMatrix read_returns(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  ReturnMatrix out;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == "period") continue;
    cols.push_back(c);
    out.labels.push_back(table.header[c]);
  }
  out.r.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out.r(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = table.number(r, cols[c]);
  validate(out);
  return out;
}

std::vector<std::string> weight_header(const ReturnMatrix& returns) {
  std::vector<std::string> h;
  for (std::size_t j = 0; j < returns.assets(); ++j) h.push_back("w" + std::to_string(j + 1));
  return h;
}

}  // namespace

RunOutput run_portfolio_experiment(const json& config, std::uint64_t seed, const std::filesystem::path& out_dir,
                                   int jobs) {
  Section root(config, "portfolio");
  ReturnMatrix returns;
  if (root.has("data")) {
    returns = read_returns(root.get<std::string>("data", ""));
  } else {
    Section s = root.child("synth");
    PortfolioSynthConfig sc;
    sc.periods = s.get<std::size_t>("periods", sc.periods);
    sc.crash_probability = s.get<double>("crash_probability", sc.crash_probability);
    sc.crash_mean = s.get<double>("crash_mean", sc.crash_mean);
    sc.crash_sd = s.get<double>("crash_sd", sc.crash_sd);
    root.put("synth", s.finish());
    returns = synth_returns(sc, seed);
  }
  const double mv_lambda = root.get<double>("mv_lambda", 1.0);
  const auto mv_grid = root.get<std::vector<double>>(
      "mv_grid", {0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0});
  const auto grid = root.get<std::vector<double>>(
      "lambda_star_grid",
      {0.0, 0.0025, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
  const bool clip = root.get<bool>("clip_skewness", false);
  PortfolioConfig pc;
  pc.random_starts = root.get<int>("random_starts", pc.random_starts);
  {
    json e;
    pc.solver = read_solver(root.child("solver"), e, pc.solver);
    root.put("solver", e);
    pc.quad = read_quad(root.child("quadrature"), e);
    root.put("quadrature", e);
  }
  const json effective = root.finish();

  const MvTarget target = target_from_mv(returns, mv_lambda, clip);
  const MvResult mv = mv_weights(returns, mv_lambda);
  const auto mv_rows = mv_sweep(returns, mv_grid, jobs);
  const SweepResult sweep = sweep_lambda(returns, target.family, grid, pc, seed, jobs);

  RunOutput out;
  csv::Table mv_table{{"lambda", "mean", "variance", "skewness", "excess_kurtosis", "zero_count"}, {}};
  for (const auto& h : weight_header(returns)) mv_table.header.push_back(h);
  for (const auto& row : mv_rows) {
    const auto& st = row.result.stats;
    std::vector<std::string> cells{num(row.lambda), num(st.mean), num(st.variance), num(st.skewness),
                                   num(st.excess_kurtosis), std::to_string(st.zero_count)};
    for (double w : row.result.weights) cells.push_back(num(w));
    mv_table.rows.push_back(std::move(cells));
  }
  csv::Table sweep_table{{"lambda_star", "entropy", "bd_entropy", "w2sq"}, {}};
  for (const auto& h : weight_header(returns)) sweep_table.header.push_back(h);
  json sweep_json = json::array();
  for (const auto& row : sweep.rows) {
    std::vector<std::string> cells{num(row.lambda_star), num(row.entropy), num(row.bd_entropy), num(row.w2sq)};
    for (double w : row.weights) cells.push_back(num(w));
    sweep_table.rows.push_back(std::move(cells));
    sweep_json.push_back({{"lambda_star", row.lambda_star},
                          {"entropy", row.entropy},
                          {"w2sq", row.w2sq},
                          {"objective", row.objective},
                          {"converged", row.converged},
                          {"skewness", jnum(row.stats.skewness)},
                          {"excess_kurtosis", jnum(row.stats.excess_kurtosis)}});
  }
  write_table(out_dir, "portfolio_mv_sweep.csv", mv_table, out);
  write_table(out_dir, "portfolio_sweep.csv", sweep_table, out);

  const Moments fitted = moments(target.family);
  out.report["config"] = effective;
  out.report["results"] = {
      {"mv", {{"lambda", mv_lambda},
              {"weights", jvec(mv.weights)},
              {"zero_count", mv.stats.zero_count},
              {"mean", mv.stats.mean},
              {"variance", mv.stats.variance},
              {"skewness", jnum(mv.stats.skewness)},
              {"excess_kurtosis", jnum(mv.stats.excess_kurtosis)},
              {"kkt_residual", mv.kkt_residual}}},
      {"target", {{"location", target.family.location()},
                  {"scale", target.family.scale()},
                  {"shape", target.family.shape()},
                  {"mean", fitted.mean},
                  {"variance", fitted.variance},
                  {"skewness", fitted.skewness},
                  {"clipped", target.clipped}}},
      {"sweep", sweep_json},
      {"monotone", sweep.monotone}};
  if (!sweep.monotone) {
    std::ofstream(out_dir / "report.json") << out.report.dump(2) << "\n";
    throw NumericalError("portfolio: entropy or W2^2 trace along lambda* is not monotone");
  }
  return out;
}

// -------------------------------------------------------------- reweight

namespace {

ParametricFamily read_target(Section s) {
  const std::string family = s.require<std::string>("family");
  ParametricFamily out = ParametricFamily::normal(0.0, 1.0);
  if (family == "normal") {
    out = ParametricFamily::normal(s.require<double>("mean"), s.require<double>("variance"));
  } else if (family == "skew_normal") {
    out = ParametricFamily::skew_normal(s.require<double>("location"), s.require<double>("scale"),
                                        s.require<double>("shape"));
  } else if (family == "moments") {
    out = skew_normal_from_moments(
        {s.require<double>("mean"), s.require<double>("variance"), s.require<double>("skewness")});
  } else {
    throw ConfigError("reweight: target family must be normal, skew_normal or moments");
  }
  s.finish();
  return out;
}

}  // namespace

RunOutput run_reweight(const json& config, std::uint64_t /*seed*/, const std::filesystem::path& out_dir,
                       int /*jobs*/) {
  Section root(config, "reweight");
  std::vector<double> atoms;
  if (root.has("data")) {
    const csv::Table table = csv::read_file(root.get<std::string>("data", ""));
    const std::size_t col = table.column(root.get<std::string>("column", "x"));
    for (std::size_t r = 0; r < table.rows.size(); ++r) atoms.push_back(table.number(r, col));
  } else {
    atoms = root.require<std::vector<double>>("atoms");
  }
  if (atoms.empty()) throw ConfigError("reweight: no atoms");
  for (double a : atoms)
    if (!std::isfinite(a)) throw ConfigError("reweight: non-finite atom");
  Section target_section = root.child("target");
  const ParametricFamily target = read_target(target_section);
  root.put("target", config.contains("target") ? config.at("target") : json());
  const bool has_lambda = root.has("lambda");
  const bool has_eps = root.has("eps");
  if (has_lambda == has_eps) throw ConfigError("reweight: give exactly one of 'lambda' and 'eps'");
  SolverConfig solver;
  QuadratureConfig quad;
  {
    json e;
    solver = read_solver(root.child("solver"), e);
    root.put("solver", e);
    quad = read_quad(root.child("quadrature"), e);
    root.put("quadrature", e);
  }

  RunOutput out;
  std::vector<double> weights;
  json result;
  if (has_lambda) {
    const double lambda = root.get<double>("lambda", 0.0);
    const DualSolution d = solve_dual(atoms, target, lambda, solver, quad);
    weights = d.weights;
    result = {{"mode", "dual"},          {"lambda", d.lambda},     {"objective", d.objective},
              {"entropy", d.entropy},    {"w2sq", d.w2sq},         {"iterations", d.iterations},
              {"converged", d.converged}};
  } else {
    const double eps = root.get<double>("eps", 0.0);
    const PrimalSolution p = solve_primal(atoms, target, eps, solver, quad);
    weights = p.weights;
    result = {{"mode", "primal"},
              {"eps", eps},
              {"lambda", p.lambda},
              {"entropy", p.entropy},
              {"w2sq", p.w2sq},
              {"constraint_active", p.constraint_active},
              {"bisection_steps", p.bisection_steps}};
  }
  const json effective = root.finish();

  csv::Table table{{"index", "atom", "weight"}, {}};
  for (std::size_t i = 0; i < atoms.size(); ++i)
    table.rows.push_back({std::to_string(i), num(atoms[i]), num(weights[i])});
  write_table(out_dir, "reweight_weights.csv", table, out);
  result["target"] = target.describe();
  out.report["config"] = effective;
  out.report["results"] = result;
  return out;
}

RunOutput run_command(const std::string& command, const json& config, std::uint64_t seed,
                      const std::filesystem::path& out_dir, int jobs) {
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  // Accept either the bare block or {"<command>": block}; a document
  // holding another subcommand's block is rejected.
  json block = config;
  static const std::set<std::string> kCommands = {"survey", "fairness", "portfolio", "reweight"};
  if (config.is_object()) {
    int named = 0;
    for (const auto& item : config.items()) named += kCommands.count(item.key()) ? 1 : 0;
    if (named > 0) {
      if (named != 1 || config.size() != 1 || !config.contains(command))
        throw ConfigError("config must hold exactly one block, for '" + command + "'");
      block = config.at(command);
    }
  }
  std::filesystem::create_directories(out_dir);
  RunOutput out;
  if (command == "survey")
    out = run_survey_experiment(block, seed, out_dir, jobs);
  else if (command == "fairness")
    out = run_fairness_experiment(block, seed, out_dir, jobs);
  else if (command == "portfolio")
    out = run_portfolio_experiment(block, seed, out_dir, jobs);
  else if (command == "reweight")
    out = run_reweight(block, seed, out_dir, jobs);
  else
    throw ConfigError("unknown command '" + command + "'");
  out.report["command"] = command;
  out.report["seed"] = seed;
  out.report["files"] = out.files;
  std::ofstream file(out_dir / "report.json");
  if (!file) throw ConfigError("cannot write " + (out_dir / "report.json").string());
  file << out.report.dump(2) << "\n";
  return out;
}

}  // namespace otrw
