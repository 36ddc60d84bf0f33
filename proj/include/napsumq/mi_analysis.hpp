#ifndef NAPSUMQ_MI_ANALYSIS_HPP
#define NAPSUMQ_MI_ANALYSIS_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/rng.hpp"
#include "napsumq/schema.hpp"

namespace napsumq {

// One fitted analysis on one dataset: point estimates and their
// within-imputation variances, per coefficient.
struct AnalysisResult {
  Eigen::VectorXd q;
  Eigen::VectorXd v;
  std::vector<std::string> coefficient_names;
  bool converged = true;
  bool separation_flagged = false;
};

struct LogisticOptions {
  double ridge = 0.0;       // L2 penalty; switches variance to bootstrap when positive
  int max_iterations = 100;
  double tol = 1e-10;
  int bootstrap_replicates = 200;
  std::uint64_t bootstrap_seed = 0;
};

namespace detail {

// Dummy-coded design for a categorical regression: intercept plus one
// indicator per non-reference level of each predictor. Rows are aggregated by
// covariate pattern so IRLS cost scales with distinct patterns, not rows.
struct LogisticDesign {
  Eigen::MatrixXd x;        // patterns by coefficients
  Eigen::VectorXd trials;   // rows per pattern
  Eigen::VectorXd successes;
  std::vector<std::string> names;
};

inline LogisticDesign build_logistic_design(const Dataset& ds, int response,
                                            const std::vector<int>& predictors) {
  const Schema& schema = ds.schema();
  const int d = static_cast<int>(schema.variables().size());
  if (response < 0 || response >= d) throw ConfigError("response index out of range");
  if (schema.variables()[response].levels.size() != 2)
    throw ConfigError("logistic_fit requires a binary response");
  for (int p : predictors) {
    if (p < 0 || p >= d) throw ConfigError("predictor index out of range");
    if (p == response) throw ConfigError("response cannot be its own predictor");
  }

  int n_coef = 1;
  std::vector<std::string> names{"intercept"};
  for (int p : predictors) {
    const auto& var = schema.variables()[p];
    for (std::size_t lvl = 1; lvl < var.levels.size(); ++lvl) {
      names.push_back(var.name + "=" + var.levels[lvl]);
      ++n_coef;
    }
  }

  std::map<std::vector<int>, std::pair<long, long>> patterns;  // codes -> (trials, successes)
  const auto& codes = ds.codes();
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    std::vector<int> key(predictors.size());
    for (std::size_t k = 0; k < predictors.size(); ++k) key[k] = codes(i, predictors[k]);
    auto& cell = patterns[key];
    cell.first += 1;
    cell.second += codes(i, response);
  }

  LogisticDesign design;
  design.names = std::move(names);
  design.x.resize(static_cast<Eigen::Index>(patterns.size()), n_coef);
  design.trials.resize(design.x.rows());
  design.successes.resize(design.x.rows());
  Eigen::Index row = 0;
  for (const auto& [key, cell] : patterns) {
    design.x(row, 0) = 1.0;
    int col = 1;
    for (std::size_t k = 0; k < predictors.size(); ++k) {
      const auto& var = schema.variables()[predictors[k]];
      for (std::size_t lvl = 1; lvl < var.levels.size(); ++lvl)
        design.x(row, col++) = key[k] == static_cast<int>(lvl) ? 1.0 : 0.0;
    }
    design.trials(row) = static_cast<double>(cell.first);
    design.successes(row) = static_cast<double>(cell.second);
    ++row;
  }
  return design;
}

struct IrlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;  // penalised observed information at the fit
  bool converged = false;
  bool separation = false;
};

inline IrlsFit irls(const LogisticDesign& design, const LogisticOptions& opts) {
  const Eigen::Index k = design.x.cols();
  IrlsFit fit;
  fit.beta = Eigen::VectorXd::Zero(k);
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Eigen::VectorXd eta = design.x * fit.beta;
    const Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Eigen::VectorXd w =
        (design.trials.array() * p.array() * (1.0 - p.array())).matrix();
    Eigen::VectorXd grad =
        design.x.transpose() * (design.successes - (design.trials.array() * p.array()).matrix()) -
        opts.ridge * fit.beta;
    Eigen::MatrixXd info = design.x.transpose() * w.asDiagonal() * design.x;
    info.diagonal().array() += opts.ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("logistic_fit: singular information matrix");
    const Eigen::VectorXd step = ldlt.solve(grad);
    fit.beta += step;
    fit.information = std::move(info);
    if (!fit.beta.allFinite()) throw NumericError("logistic_fit: estimates not finite");
    if (step.lpNorm<Eigen::Infinity>() < opts.tol) {
      fit.converged = true;
      break;
    }
  }
  // Complete or quasi-complete separation shows up as runaway coefficients.
  fit.separation = fit.beta.lpNorm<Eigen::Infinity>() > 15.0;
  if (fit.information.size() == 0) {
    fit.information = Eigen::MatrixXd::Identity(k, k);
  }
  return fit;
}

}  // namespace detail

// Logistic regression of one binary column on categorical predictors.
// Variances come from the inverse observed information in the unpenalised
// case, and from a row bootstrap when a ridge penalty is active.
inline AnalysisResult logistic_fit(const Dataset& ds, int response,
                                   const std::vector<int>& predictors,
                                   const LogisticOptions& opts = {}) {
  if (ds.num_rows() == 0) throw ConfigError("logistic_fit: empty dataset");
  const detail::LogisticDesign design = detail::build_logistic_design(ds, response, predictors);
  const detail::IrlsFit fit = detail::irls(design, opts);

  AnalysisResult res;
  res.q = fit.beta;
  res.coefficient_names = design.names;
  res.converged = fit.converged;
  res.separation_flagged = fit.separation;

  const Eigen::Index k = design.x.cols();
  if (opts.ridge <= 0.0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.information);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("logistic_fit: information matrix not invertible");
    res.v = ldlt.solve(Eigen::MatrixXd::Identity(k, k)).diagonal();
  } else {
    // Nonparametric bootstrap over rows; the penalised information is not a
    // valid sampling variance.
    auto rng = make_rng(opts.bootstrap_seed, {0x626f6f74u});
    const auto& codes = ds.codes();
    std::uniform_int_distribution<Eigen::Index> pick(0, codes.rows() - 1);
    Eigen::MatrixXd betas(opts.bootstrap_replicates, k);
    Eigen::MatrixXi resampled(codes.rows(), codes.cols());
    for (int b = 0; b < opts.bootstrap_replicates; ++b) {
      for (Eigen::Index i = 0; i < codes.rows(); ++i)
        resampled.row(i) = codes.row(pick(rng));
      Dataset boot(ds.schema(), resampled);
      const auto bdesign = detail::build_logistic_design(boot, response, predictors);
      betas.row(b) = detail::irls(bdesign, opts).beta.transpose();
    }
    const Eigen::RowVectorXd mean = betas.colwise().mean();
    res.v = ((betas.rowwise() - mean).array().square().colwise().sum() /
             static_cast<double>(opts.bootstrap_replicates - 1))
                .transpose();
  }
  if (!res.v.allFinite() || (res.v.array() < 0).any())
    throw NumericError("logistic_fit: invalid variance estimates");
  return res;
}

// Mean of one column of a coded dataset, with its sampling variance. Used as
// a simple analysis for calibration experiments.
inline AnalysisResult mean_fit(const Dataset& ds, int column) {
  if (ds.num_rows() < 2) throw ConfigError("mean_fit needs at least two rows");
  const auto& codes = ds.codes();
  if (column < 0 || column >= codes.cols()) throw ConfigError("mean_fit column out of range");
  const double n = static_cast<double>(codes.rows());
  const Eigen::VectorXd col = codes.col(column).cast<double>();
  const double mean = col.mean();
  const double var = (col.array() - mean).square().sum() / (n - 1.0);
  AnalysisResult res;
  res.q = Eigen::VectorXd::Constant(1, mean);
  res.v = Eigen::VectorXd::Constant(1, var / n);
  res.coefficient_names = {ds.schema().variables()[column].name + "_mean"};
  return res;
}

// Pooled estimate across imputations for one coefficient.
struct CombinedEstimate {
  double q_bar = 0;
  double variance = 0;          // total variance T, after the nonnegative fix
  double dof = 0;               // t degrees of freedom; infinity when b is zero
  double within = 0;
  double between = 0;
  bool variance_clamped = false;
};

struct CombinedResult {
  std::vector<CombinedEstimate> estimates;
  std::vector<std::string> coefficient_names;
  int m = 0;
};

// Rubin's rules with the nonnegative total-variance correction: when the
// raw total (1 + 1/m) b - v_bar goes negative, fall back to scaling the
// within variance by the synthetic-to-real size ratio.
inline CombinedResult combine(const std::vector<AnalysisResult>& results, long n_synthetic,
                              long n_original) {
  const int m = static_cast<int>(results.size());
  if (m < 2) throw ConfigError("combine needs at least two imputations");
  const Eigen::Index k = results[0].q.size();
  for (const auto& r : results)
    if (r.q.size() != k || r.v.size() != k)
      throw ConfigError("combine: inconsistent result dimensions");

  CombinedResult out;
  out.m = m;
  out.coefficient_names = results[0].coefficient_names;
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::VectorXd qs(m), vs(m);
    for (int i = 0; i < m; ++i) {
      qs(i) = results[i].q(j);
      vs(i) = results[i].v(j);
    }
    CombinedEstimate e;
    e.q_bar = qs.mean();
    e.within = vs.mean();
    e.between = (qs.array() - e.q_bar).square().sum() / (m - 1.0);
    if (e.within <= 0 && e.between <= 0)
      throw ConfigError("combine: zero variance in every component");

    const double total = (1.0 + 1.0 / m) * e.between - e.within;
    if (total >= 0) {
      e.variance = total;
    } else {
      e.variance = static_cast<double>(n_synthetic) / static_cast<double>(n_original) *
                   e.within;
      e.variance_clamped = true;
    }
    if (e.between > 0) {
      const double r = (1.0 + 1.0 / m) * e.between / e.within;
      const double frac = 1.0 - 1.0 / r;
      e.dof = (m - 1.0) * frac * frac;
    } else {
      e.dof = std::numeric_limits<double>::infinity();
    }
    out.estimates.push_back(e);
  }
  return out;
}

struct ConfidenceInterval {
  double lower = 0;
  double upper = 0;
  double level = 0;
};

inline double t_quantile(double dof, double prob) {
  if (!(dof > 0)) throw ConfigError("t_quantile: degrees of freedom must be positive");
  if (!(prob > 0 && prob < 1)) throw ConfigError("t_quantile: probability out of range");
  if (!std::isfinite(dof) || dof > 1e8) {
    boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, prob);
  }
  boost::math::students_t_distribution<double> t(dof);
  try {
    return boost::math::quantile(t, prob);
  } catch (const std::overflow_error&) {
    // As dof approaches zero the quantile blows past the floating range; the
    // matching limit is an unbounded interval.
    return prob < 0.5 ? -std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::infinity();
  }
}

inline ConfidenceInterval interval(const CombinedEstimate& e, double level) {
  if (!(level > 0 && level < 1)) throw ConfigError("interval level must be in (0, 1)");
  ConfidenceInterval ci;
  ci.level = level;
  if (e.variance <= 0) {
    ci.lower = e.q_bar;
    ci.upper = e.q_bar;
    return ci;
  }
  const double t = t_quantile(e.dof, 0.5 + level / 2.0);
  const double half = t * std::sqrt(e.variance);
  ci.lower = e.q_bar - half;
  ci.upper = e.q_bar + half;
  return ci;
}

struct OutlierScreen {
  std::vector<AnalysisResult> kept;
  double dropped_fraction = 0;
};

// Removes analyses whose within variance explodes relative to the per-
// coefficient median, which happens under separation in small synthetic sets.
inline OutlierScreen drop_outlier_variances(const std::vector<AnalysisResult>& results,
                                            double ratio_threshold = 1e3) {
  if (results.empty()) throw ConfigError("drop_outlier_variances: no results");
  const Eigen::Index k = results[0].v.size();
  std::vector<double> medians(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> vs;
    vs.reserve(results.size());
    for (const auto& r : results) vs.push_back(r.v(j));
    std::nth_element(vs.begin(), vs.begin() + vs.size() / 2, vs.end());
    medians[j] = vs[vs.size() / 2];
  }
  OutlierScreen screen;
  for (const auto& r : results) {
    bool keep = true;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (medians[j] > 0 && r.v(j) > ratio_threshold * medians[j]) keep = false;
      if (!std::isfinite(r.v(j))) keep = false;
    }
    if (keep) screen.kept.push_back(r);
  }
  screen.dropped_fraction =
      1.0 - static_cast<double>(screen.kept.size()) / static_cast<double>(results.size());
  if (screen.kept.empty())
    throw NumericError("drop_outlier_variances: every analysis was dropped");
  return screen;
}

inline nlohmann::json combined_to_json(const CombinedResult& cr,
                                       const std::vector<double>& levels) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t j = 0; j < cr.estimates.size(); ++j) {
    const auto& e = cr.estimates[j];
    nlohmann::json entry;
    entry["name"] = j < cr.coefficient_names.size() ? cr.coefficient_names[j]
                                                    : "coef" + std::to_string(j);
    entry["estimate"] = e.q_bar;
    entry["variance"] = e.variance;
    entry["within_variance"] = e.within;
    entry["between_variance"] = e.between;
    entry["dof"] = std::isfinite(e.dof) ? nlohmann::json(e.dof) : nlohmann::json("inf");
    entry["variance_clamped"] = e.variance_clamped;
    nlohmann::json intervals = nlohmann::json::array();
    for (double level : levels) {
      const ConfidenceInterval ci = interval(e, level);
      intervals.push_back({{"level", level}, {"lower", ci.lower}, {"upper", ci.upper}});
    }
    entry["intervals"] = std::move(intervals);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace napsumq

#endif  // NAPSUMQ_MI_ANALYSIS_HPP
