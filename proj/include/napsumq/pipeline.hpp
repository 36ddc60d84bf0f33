#ifndef NAPSUMQ_PIPELINE_HPP
#define NAPSUMQ_PIPELINE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/inference.hpp"
#include "napsumq/mi_analysis.hpp"
#include "napsumq/med_model.hpp"
#include "napsumq/privacy.hpp"
#include "napsumq/queries.hpp"
#include "napsumq/rng.hpp"
#include "napsumq/schema.hpp"

namespace napsumq {

enum class InferenceMethod { laplace, nuts };

struct DownstreamSpec {
  int response = -1;
  std::vector<int> predictors;
  bool drop_outliers = true;
  double outlier_threshold = 1e3;
  std::vector<double> levels{0.95};
};

struct PipelineConfig {
  Schema schema;
  std::vector<std::vector<int>> scopes;
  PrivacyBudget budget;
  int m = 100;
  long n_syn = 0;
  InferenceMethod inference = InferenceMethod::laplace;
  NutsConfig nuts;
  Backend backend = Backend::enumeration;
  double prior_std = 10.0;
  std::uint64_t seed = 0;

  void validate(bool mi_downstream) const {
    budget.validate();
    if (scopes.empty()) throw ConfigError("config needs at least one query scope");
    if (n_syn < 1) throw ConfigError("n_syn must be at least 1");
    if (m < 1) throw ConfigError("m must be at least 1");
    if (mi_downstream && m < 2)
      throw ConfigError("multiple imputation requires m >= 2 synthetic datasets");
  }
};

struct NapsuResult {
  QueryCollection queries;
  NoisyRelease release;
  double calibrated_sigma = 0;
  long n = 0;
  LaplaceApprox laplace;
  std::optional<PosteriorSamples> nuts;
  Eigen::MatrixXd thetas;  // m rows
  std::vector<Dataset> synthetic;
};

using StageHook = std::function<void(const std::string&)>;

namespace detail {

// Runs one pipeline stage, tagging any domain error with the stage name so
// failures point at the stage that raised them.
template <typename Fn>
auto run_stage(const std::string& name, const StageHook& hook, Fn&& fn) {
  try {
    auto result = fn();
    if (hook) hook(name);
    return result;
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what());
  }
}

inline Eigen::MatrixXd draw_parameters(const NapsuResult& partial, const PipelineConfig& cfg) {
  const int m = cfg.m;
  if (cfg.inference == InferenceMethod::laplace) {
    Eigen::MatrixXd thetas(m, partial.laplace.mean.size());
    for (int i = 0; i < m; ++i) {
      auto rng = make_rng(cfg.seed, {3, static_cast<std::uint64_t>(i)});
      thetas.row(i) = partial.laplace.draw(rng).transpose();
    }
    return thetas;
  }
  // Evenly spaced thinning over the pooled kept draws.
  const Eigen::MatrixXd& draws = partial.nuts->draws;
  const Eigen::Index total = draws.rows();
  if (total < m) throw NumericError("fewer kept draws than synthetic datasets requested");
  Eigen::MatrixXd thetas(m, draws.cols());
  for (int i = 0; i < m; ++i) {
    const Eigen::Index idx = (2 * static_cast<Eigen::Index>(i) + 1) * total / (2 * m);
    thetas.row(i) = draws.row(idx);
  }
  return thetas;
}

}  // namespace detail

// End-to-end generation: canonicalise the queries, release noisy counts under
// the budget, infer the noise-aware posterior, draw m parameter vectors and
// one synthetic dataset per vector. After the mechanism stage only the
// NoisyRelease flows forward; the private dataset is never read again.
inline NapsuResult run_napsu_mq(const PipelineConfig& config, const Dataset& data,
                                bool mi_downstream = true, const StageHook& hook = {}) {
  config.validate(mi_downstream);
  NapsuResult res;

  res.queries = detail::run_stage("canonicalize", hook, [&] {
    return canonicalize(full_sets_for_scopes(config.schema, config.scopes), config.schema);
  });

  Eigen::VectorXd s = detail::run_stage("evaluate", hook, [&] {
    if (data.schema().digest() != config.schema.digest())
      throw ConfigError("dataset schema does not match config schema");
    return res.queries.evaluate_dataset(data);
  });
  res.n = data.num_rows();

  res.calibrated_sigma = detail::run_stage("calibrate", hook, [&] {
    return calibrate_sigma(config.budget, res.queries.sensitivity());
  });

  res.release = detail::run_stage("mechanism", hook, [&] {
    return gaussian_mechanism(s, res.calibrated_sigma, derive_seed(config.seed, {1}),
                              config.budget, res.queries.sensitivity(),
                              res.queries.fingerprint());
  });

  // Privacy firewall: everything below sees only res.release.
  NoiseAwarePosterior posterior(config.schema, res.queries, res.release, res.n,
                                config.prior_std);

  res.laplace = detail::run_stage("laplace", hook,
                                  [&] { return laplace_fit(posterior, derive_seed(config.seed, {2})); });

  if (config.inference == InferenceMethod::nuts) {
    res.nuts = detail::run_stage("nuts", hook, [&] {
      return nuts_sample(posterior, res.laplace, config.nuts, derive_seed(config.seed, {4}));
    });
  }

  res.thetas = detail::run_stage("draw_parameters", hook,
                                 [&] { return detail::draw_parameters(res, config); });

  res.synthetic = detail::run_stage("synthesize", hook, [&] {
    std::vector<Dataset> out;
    out.reserve(config.m);
    for (int i = 0; i < config.m; ++i) {
      MEDModel model;
      model.schema = config.schema;
      model.queries = res.queries;
      model.theta = res.thetas.row(i).transpose();
      model.backend = config.backend;
      out.push_back(sample(model, config.n_syn,
                           derive_seed(config.seed, {5, static_cast<std::uint64_t>(i)})));
    }
    return out;
  });
  return res;
}

struct MiRunResult {
  CombinedResult combined;
  std::map<double, std::vector<ConfidenceInterval>> intervals;  // level -> per coefficient
  double dropped_fraction = 0;
};

inline MiRunResult run_mi_analysis(const std::vector<Dataset>& datasets,
                                   const DownstreamSpec& spec, long n_original) {
  if (datasets.size() < 2) throw ConfigError("run_mi_analysis needs at least two datasets");
  std::vector<AnalysisResult> analyses;
  analyses.reserve(datasets.size());
  for (const auto& ds : datasets)
    analyses.push_back(logistic_fit(ds, spec.response, spec.predictors));

  MiRunResult out;
  if (spec.drop_outliers) {
    OutlierScreen screen = drop_outlier_variances(analyses, spec.outlier_threshold);
    out.dropped_fraction = screen.dropped_fraction;
    if (screen.kept.size() < 2)
      throw NumericError("run_mi_analysis: fewer than two analyses survived screening");
    analyses = std::move(screen.kept);
  }
  out.combined = combine(analyses, datasets.front().num_rows(), n_original);
  for (double level : spec.levels) {
    std::vector<ConfidenceInterval> per_coef;
    for (const auto& e : out.combined.estimates) per_coef.push_back(interval(e, level));
    out.intervals[level] = std::move(per_coef);
  }
  return out;
}

enum class ExperimentMode { na_mi, minus_na, minus_mi, minus_both, pgm_mle_baseline };

inline ExperimentMode experiment_mode_from_string(const std::string& s) {
  if (s == "na_mi") return ExperimentMode::na_mi;
  if (s == "minus_na") return ExperimentMode::minus_na;
  if (s == "minus_mi") return ExperimentMode::minus_mi;
  if (s == "minus_both") return ExperimentMode::minus_both;
  if (s == "pgm_mle_baseline") return ExperimentMode::pgm_mle_baseline;
  throw ConfigError("unknown experiment mode: " + s);
}

struct ExperimentConfig {
  Schema schema;
  std::vector<std::vector<int>> scopes;
  std::function<Dataset(long, std::uint64_t)> generator;
  Eigen::VectorXd true_coefficients;  // non-intercept truths, in design order
  DownstreamSpec downstream;
  long n = 2000;
  long n_syn = 2000;
  int m = 100;
  double delta = 2.5e-7;
  InferenceMethod inference = InferenceMethod::laplace;
  NutsConfig nuts;
  Backend backend = Backend::enumeration;
  int repeats = 100;
  std::vector<double> epsilons{0.5};
  ExperimentMode mode = ExperimentMode::na_mi;
  std::uint64_t seed = 0;
};

struct IntervalRecord {
  int repeat = 0;
  double epsilon = 0;
  int coefficient = 0;  // index into true_coefficients
  double level = 0;
  double lower = 0;
  double upper = 0;
  double width = 0;
  double real_width = 0;  // non-private reference interval on the same repeat
  bool covered = false;
};

struct ExperimentReport {
  std::vector<IntervalRecord> records;
  std::vector<double> epsilons;
  std::vector<double> levels;
  std::vector<std::string> coefficient_names;
  int repeats = 0;
  std::map<double, int> failures;            // epsilon -> excluded repeats
  std::map<double, double> dropped_fraction; // epsilon -> mean over repeats
  double runtime_seconds = 0;

  double coverage(double epsilon, int coefficient, double level) const {
    long hit = 0, total = 0;
    for (const auto& r : records)
      if (r.epsilon == epsilon && r.coefficient == coefficient && r.level == level) {
        ++total;
        hit += r.covered ? 1 : 0;
      }
    if (total == 0) throw ConfigError("no records for requested coverage cell");
    return static_cast<double>(hit) / static_cast<double>(total);
  }

  double median_width(double epsilon, int coefficient, double level) const {
    std::vector<double> widths;
    for (const auto& r : records)
      if (r.epsilon == epsilon && r.coefficient == coefficient && r.level == level)
        widths.push_back(r.width);
    if (widths.empty()) throw ConfigError("no records for requested width cell");
    std::nth_element(widths.begin(), widths.begin() + widths.size() / 2, widths.end());
    return widths[widths.size() / 2];
  }

  double median_width_ratio(double epsilon, int coefficient, double level) const {
    std::vector<double> ratios;
    for (const auto& r : records)
      if (r.epsilon == epsilon && r.coefficient == coefficient && r.level == level &&
          r.real_width > 0)
        ratios.push_back(r.width / r.real_width);
    if (ratios.empty()) throw ConfigError("no records for requested ratio cell");
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    return ratios[ratios.size() / 2];
  }
};

namespace detail {

// Interval a naive analyst would report from one fit: normal quantile with
// the observed-information variance.
inline ConfidenceInterval plain_interval(double q, double v, double level) {
  ConfidenceInterval ci;
  ci.level = level;
  const double z = t_quantile(std::numeric_limits<double>::infinity(), 0.5 + level / 2.0);
  const double half = z * std::sqrt(v);
  ci.lower = q - half;
  ci.upper = q + half;
  return ci;
}

struct RepeatOutcome {
  // level -> per tracked coefficient interval
  std::map<double, std::vector<ConfidenceInterval>> intervals;
  double dropped_fraction = 0;
};

inline RepeatOutcome run_repeat(const ExperimentConfig& cfg, double epsilon,
                                const Dataset& data, std::uint64_t repeat_seed) {
  PipelineConfig pc;
  pc.schema = cfg.schema;
  pc.scopes = cfg.scopes;
  pc.budget = {epsilon, cfg.delta};
  pc.n_syn = cfg.n_syn;
  pc.inference = cfg.inference;
  pc.nuts = cfg.nuts;
  pc.backend = cfg.backend;
  pc.seed = repeat_seed;

  const bool noise_aware =
      cfg.mode == ExperimentMode::na_mi || cfg.mode == ExperimentMode::minus_mi;
  const bool multiple =
      cfg.mode == ExperimentMode::na_mi || cfg.mode == ExperimentMode::minus_na ||
      cfg.mode == ExperimentMode::pgm_mle_baseline;
  pc.m = multiple ? cfg.m : 1;

  RepeatOutcome outcome;
  const int first_coef = 1;  // skip the intercept
  if (noise_aware) {
    NapsuResult res = run_napsu_mq(pc, data, multiple);
    if (multiple) {
      MiRunResult mi = run_mi_analysis(res.synthetic, cfg.downstream, res.n);
      outcome.dropped_fraction = mi.dropped_fraction;
      for (double level : cfg.downstream.levels) {
        auto& per = mi.intervals.at(level);
        outcome.intervals[level] =
            std::vector<ConfidenceInterval>(per.begin() + first_coef, per.end());
      }
    } else {
      AnalysisResult fit =
          logistic_fit(res.synthetic.front(), cfg.downstream.response, cfg.downstream.predictors);
      for (double level : cfg.downstream.levels) {
        std::vector<ConfidenceInterval> per;
        for (Eigen::Index j = first_coef; j < fit.q.size(); ++j)
          per.push_back(plain_interval(fit.q(j), fit.v(j), level));
        outcome.intervals[level] = std::move(per);
      }
    }
    return outcome;
  }

  // Non-noise-aware branches: fit the point model to the noisy release and
  // sample from it directly.
  QueryCollection queries = canonicalize(full_sets_for_scopes(pc.schema, pc.scopes), pc.schema);
  const Eigen::VectorXd s = queries.evaluate_dataset(data);
  const double sigma = calibrate_sigma(pc.budget, queries.sensitivity());
  NoisyRelease release =
      gaussian_mechanism(s, sigma, derive_seed(repeat_seed, {1}), pc.budget,
                         queries.sensitivity(), queries.fingerprint());
  MEDModel point =
      fit_pgm_mle(release, queries, pc.schema, data.num_rows(), pc.backend);

  std::vector<Dataset> synthetic;
  for (int i = 0; i < pc.m; ++i)
    synthetic.push_back(
        sample(point, pc.n_syn, derive_seed(repeat_seed, {5, static_cast<std::uint64_t>(i)})));

  if (multiple) {
    MiRunResult mi = run_mi_analysis(synthetic, cfg.downstream, data.num_rows());
    outcome.dropped_fraction = mi.dropped_fraction;
    for (double level : cfg.downstream.levels) {
      auto& per = mi.intervals.at(level);
      outcome.intervals[level] =
          std::vector<ConfidenceInterval>(per.begin() + first_coef, per.end());
    }
  } else {
    AnalysisResult fit =
        logistic_fit(synthetic.front(), cfg.downstream.response, cfg.downstream.predictors);
    for (double level : cfg.downstream.levels) {
      std::vector<ConfidenceInterval> per;
      for (Eigen::Index j = first_coef; j < fit.q.size(); ++j)
        per.push_back(plain_interval(fit.q(j), fit.v(j), level));
      outcome.intervals[level] = std::move(per);
    }
  }
  return outcome;
}

}  // namespace detail

// Repeated end-to-end runs on freshly generated data, recording interval
// containment of the known generating coefficients. Repeats that fail
// numerically are counted and excluded.
inline ExperimentReport run_coverage_experiment(const ExperimentConfig& cfg) {
  if (cfg.repeats < 1) throw ConfigError("experiment needs at least one repeat");
  if (cfg.epsilons.empty()) throw ConfigError("experiment needs at least one epsilon");
  if (!cfg.generator) throw ConfigError("experiment needs a data generator");
  if (cfg.true_coefficients.size() == 0)
    throw ConfigError("experiment needs the true coefficient values");

  const auto started = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.epsilons = cfg.epsilons;
  report.levels = cfg.downstream.levels;
  report.repeats = cfg.repeats;

  for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei) {
    const double epsilon = cfg.epsilons[ei];
    double dropped_sum = 0;
    int completed = 0;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      const std::uint64_t data_seed =
          derive_seed(cfg.seed, {static_cast<std::uint64_t>(ei), static_cast<std::uint64_t>(rep), 0});
      const std::uint64_t stage_seed =
          derive_seed(cfg.seed, {static_cast<std::uint64_t>(ei), static_cast<std::uint64_t>(rep), 1});
      Dataset data = cfg.generator(cfg.n, data_seed);

      // Non-private reference fit for the width-ratio panel.
      AnalysisResult real_fit =
          logistic_fit(data, cfg.downstream.response, cfg.downstream.predictors);
      if (report.coefficient_names.empty())
        report.coefficient_names.assign(real_fit.coefficient_names.begin() + 1,
                                        real_fit.coefficient_names.end());

      detail::RepeatOutcome outcome;
      try {
        outcome = detail::run_repeat(cfg, epsilon, data, stage_seed);
      } catch (const NumericError&) {
        report.failures[epsilon] += 1;
        continue;
      }
      dropped_sum += outcome.dropped_fraction;
      ++completed;

      for (double level : cfg.downstream.levels) {
        const auto& per = outcome.intervals.at(level);
        if (static_cast<Eigen::Index>(per.size()) != cfg.true_coefficients.size())
          throw ConfigError("true coefficient count does not match the design");
        for (std::size_t j = 0; j < per.size(); ++j) {
          const ConfidenceInterval real_ci = detail::plain_interval(
              real_fit.q(static_cast<Eigen::Index>(j) + 1),
              real_fit.v(static_cast<Eigen::Index>(j) + 1), level);
          IntervalRecord rec;
          rec.repeat = rep;
          rec.epsilon = epsilon;
          rec.coefficient = static_cast<int>(j);
          rec.level = level;
          rec.lower = per[j].lower;
          rec.upper = per[j].upper;
          rec.width = per[j].upper - per[j].lower;
          rec.real_width = real_ci.upper - real_ci.lower;
          const double truth = cfg.true_coefficients(static_cast<Eigen::Index>(j));
          rec.covered = rec.lower <= truth && truth <= rec.upper;
          report.records.push_back(rec);
        }
      }
    }
    report.failures.try_emplace(epsilon, 0);
    report.dropped_fraction[epsilon] = completed > 0 ? dropped_sum / completed : 0.0;
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// Machine-readable panels: coverage per level, width ratios per epsilon, and
// interval strips at the first epsilon. Output bytes are deterministic.
inline std::vector<std::string> emit_plot_data(const ExperimentReport& report,
                                               const std::string& directory) {
  if (report.records.empty() || report.epsilons.empty())
    throw ConfigError("emit_plot_data: empty report");
  std::filesystem::create_directories(directory);
  std::vector<std::string> written;

  auto open = [&](const std::string& name) {
    std::ofstream out(directory + "/" + name);
    if (!out) throw ConfigError("cannot open for writing: " + directory + "/" + name);
    out.precision(12);
    written.push_back(directory + "/" + name);
    return out;
  };

  {
    auto out = open("coverage_vs_level.csv");
    out << "epsilon,coefficient,level,coverage\n";
    for (double eps : report.epsilons)
      for (std::size_t j = 0; j < report.coefficient_names.size(); ++j)
        for (double level : report.levels)
          out << eps << "," << report.coefficient_names[j] << "," << level << ","
              << report.coverage(eps, static_cast<int>(j), level) << "\n";
  }
  {
    auto out = open("width_ratio_vs_epsilon.csv");
    out << "epsilon,coefficient,level,median_width,median_width_ratio\n";
    for (double eps : report.epsilons)
      for (std::size_t j = 0; j < report.coefficient_names.size(); ++j)
        for (double level : report.levels)
          out << eps << "," << report.coefficient_names[j] << "," << level << ","
              << report.median_width(eps, static_cast<int>(j), level) << ","
              << report.median_width_ratio(eps, static_cast<int>(j), level) << "\n";
  }
  {
    auto out = open("interval_strips.csv");
    const double eps = report.epsilons.front();
    out << "epsilon,repeat,coefficient,level,lower,upper,covered\n";
    for (const auto& r : report.records)
      if (r.epsilon == eps)
        out << r.epsilon << "," << r.repeat << ","
            << report.coefficient_names[r.coefficient] << "," << r.level << "," << r.lower
            << "," << r.upper << "," << (r.covered ? 1 : 0) << "\n";
  }
  return written;
}

inline nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["repeats"] = report.repeats;
  j["runtime_seconds"] = report.runtime_seconds;
  j["coefficients"] = report.coefficient_names;
  j["levels"] = report.levels;
  nlohmann::json cells = nlohmann::json::array();
  for (double eps : report.epsilons) {
    nlohmann::json cell;
    cell["epsilon"] = eps;
    cell["failures"] = report.failures.at(eps);
    cell["mean_dropped_fraction"] = report.dropped_fraction.at(eps);
    nlohmann::json coverage = nlohmann::json::array();
    for (std::size_t c = 0; c < report.coefficient_names.size(); ++c)
      for (double level : report.levels)
        coverage.push_back({{"coefficient", report.coefficient_names[c]},
                            {"level", level},
                            {"coverage", report.coverage(eps, static_cast<int>(c), level)},
                            {"median_width", report.median_width(eps, static_cast<int>(c), level)}});
    cell["coverage"] = std::move(coverage);
    cells.push_back(std::move(cell));
  }
  j["epsilons"] = std::move(cells);
  return j;
}

// Experiment setup matching the small synthetic study: three binary
// variables, full three-way queries, logistic regression of the third
// variable on the first two with generating coefficients (1, 0).
inline ExperimentConfig toy_setup() {
  ExperimentConfig cfg;
  cfg.schema = toy_schema();
  cfg.scopes = {{0, 1, 2}};
  cfg.generator = [](long n, std::uint64_t seed) { return sample_toy_data(n, seed); };
  cfg.true_coefficients = Eigen::VectorXd::Zero(2);
  cfg.true_coefficients(0) = 1.0;
  cfg.downstream.response = 2;
  cfg.downstream.predictors = {0, 1};
  cfg.downstream.levels = {0.8, 0.9, 0.95};
  return cfg;
}

inline Schema standin_schema() {
  return Schema::with_cardinalities(
      {{"x0", 5}, {"x1", 2}, {"x2", 2}, {"x3", 3}, {"x4", 2}, {"x5", 2}});
}

// Six-variable generator whose conditionals are all pairwise, so the
// two-way query model is well specified.
inline Dataset sample_standin_data(long n, std::uint64_t rng_seed) {
  if (n < 1) throw ConfigError("sample_standin_data needs n >= 1");
  auto rng = make_rng(rng_seed, {0x73746e64u});
  std::uniform_int_distribution<int> cat5(0, 4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto sigmoid = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };

  Eigen::MatrixXi codes(n, 6);
  for (long i = 0; i < n; ++i) {
    const int x0 = cat5(rng);
    const int x1 = unif(rng) < 0.5 ? 1 : 0;
    const int x2 = unif(rng) < 0.5 ? 1 : 0;
    // x3 | x0: three levels with logits shifted by x0 parity and size.
    double l0 = 0.0, l1 = 0.3 * (x0 >= 2 ? 1 : 0), l2 = -0.2 * (x0 % 2);
    const double zx = std::exp(l0) + std::exp(l1) + std::exp(l2);
    const double u = unif(rng) * zx;
    const int x3 = u < std::exp(l0) ? 0 : (u < std::exp(l0) + std::exp(l1) ? 1 : 2);
    const int x4 = unif(rng) < sigmoid(0.5 * (x3 - 1)) ? 1 : 0;
    const int x5 = unif(rng) < sigmoid(1.0 * x1 + 0.0 * x2) ? 1 : 0;
    codes(i, 0) = x0;
    codes(i, 1) = x1;
    codes(i, 2) = x2;
    codes(i, 3) = x3;
    codes(i, 4) = x4;
    codes(i, 5) = x5;
  }
  return Dataset(standin_schema(), std::move(codes));
}

// Larger-schema setup exercising the junction-tree backend with NUTS
// inference: two-way queries over a tree-width-2 graph, logistic regression
// of x5 on x1 and x2 with generating coefficients (1, 0).
inline ExperimentConfig standin_setup() {
  ExperimentConfig cfg;
  cfg.schema = standin_schema();
  cfg.scopes = {{0, 1}, {1, 5}, {2, 5}, {1, 2}, {0, 3}, {3, 4}};
  cfg.generator = [](long n, std::uint64_t seed) { return sample_standin_data(n, seed); };
  cfg.true_coefficients = Eigen::VectorXd::Zero(2);
  cfg.true_coefficients(0) = 1.0;
  cfg.downstream.response = 5;
  cfg.downstream.predictors = {1, 2};
  cfg.downstream.levels = {0.95};
  cfg.n = 20000;
  cfg.n_syn = 20000;
  cfg.m = 40;
  cfg.delta = 2.5e-9;
  cfg.inference = InferenceMethod::nuts;
  cfg.nuts.chains = 2;
  cfg.nuts.warmup = 400;
  cfg.nuts.samples = 1000;
  cfg.backend = Backend::junction_tree;
  cfg.epsilons = {1.0};
  return cfg;
}

}  // namespace napsumq

#endif  // NAPSUMQ_PIPELINE_HPP
