// Acceptance suite: end-to-end checks of calibration, ablation behaviour,
// backend oracles, and sampler health. Each criterion prints one PASS/FAIL
// line; the exit code is the number of failures.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "napsumq/pipeline.hpp"

using namespace napsumq;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %2d  %s  (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = gauss(rng);
  return v;
}

ExperimentConfig toy_experiment(ExperimentMode mode, std::vector<double> epsilons,
                                std::uint64_t seed) {
  ExperimentConfig cfg = toy_setup();
  cfg.mode = mode;
  cfg.epsilons = std::move(epsilons);
  cfg.repeats = 100;
  cfg.seed = seed;
  cfg.downstream.levels = {0.95};
  return cfg;
}

// Criteria 1-4 share these runs.
struct ToyRuns {
  ExperimentReport na_mi;       // epsilons 0.1, 0.5, 1.0
  ExperimentReport minus_na;    // 0.1
  ExperimentReport minus_mi;    // 0.1
  ExperimentReport minus_both;  // 0.1
};

ToyRuns run_toy_experiments() {
  ToyRuns runs;
  runs.na_mi = run_coverage_experiment(
      toy_experiment(ExperimentMode::na_mi, {0.1, 0.5, 1.0}, 1001));
  runs.minus_na =
      run_coverage_experiment(toy_experiment(ExperimentMode::minus_na, {0.1}, 1002));
  runs.minus_mi =
      run_coverage_experiment(toy_experiment(ExperimentMode::minus_mi, {0.1}, 1003));
  runs.minus_both =
      run_coverage_experiment(toy_experiment(ExperimentMode::minus_both, {0.1}, 1004));
  return runs;
}

void criterion_1(const ToyRuns& runs) {
  const double c0 = runs.na_mi.coverage(0.5, 0, 0.95);
  const double c1 = runs.na_mi.coverage(0.5, 1, 0.95);
  report(1, "noise-aware MI calibration at eps 0.5", c0 >= 0.90 && c1 >= 0.90,
         "coverage " + fmt(c0) + ", " + fmt(c1) + ", need >= 0.90");
}

void criterion_2(const ToyRuns& runs) {
  const double c0 = runs.minus_both.coverage(0.1, 0, 0.95);
  const double c1 = runs.minus_both.coverage(0.1, 1, 0.95);
  report(2, "naive baseline overconfident at eps 0.1", c0 <= 0.85 || c1 <= 0.85,
         "coverage " + fmt(c0) + ", " + fmt(c1) + ", need one <= 0.85");
}

void criterion_3(const ToyRuns& runs) {
  bool pass = true;
  std::string detail;
  for (int c = 0; c < 2; ++c) {
    const double full = runs.na_mi.coverage(0.1, c, 0.95);
    const double no_na = runs.minus_na.coverage(0.1, c, 0.95);
    const double no_mi = runs.minus_mi.coverage(0.1, c, 0.95);
    pass = pass && full >= no_na + 0.05 && full >= no_mi + 0.05;
    detail += (c ? "; " : "") + fmt(full) + " vs -NA " + fmt(no_na) + ", -MI " + fmt(no_mi);
  }
  report(3, "ablation ordering at eps 0.1 by 5 points", pass, detail);
}

void criterion_4(const ToyRuns& runs) {
  bool pass = true;
  std::string detail;
  for (int c = 0; c < 2; ++c) {
    const double wide = runs.na_mi.median_width(0.1, c, 0.95);
    const double narrow = runs.na_mi.median_width(1.0, c, 0.95);
    pass = pass && wide > narrow;
    detail += (c ? "; " : "") + fmt(wide) + " > " + fmt(narrow);
  }
  report(4, "widths shrink as the privacy budget grows", pass, detail);
}

bool backends_agree(const Schema& schema, const std::vector<std::vector<int>>& scopes,
                    int trials, std::mt19937_64& rng, double& worst) {
  const QueryCollection qc = canonicalize(full_sets_for_scopes(schema, scopes), schema);
  for (int t = 0; t < trials; ++t) {
    MEDModel m;
    m.schema = schema;
    m.queries = qc;
    m.theta = random_vec(qc.size(), rng, 0.8);
    m.backend = Backend::enumeration;
    const double lp_enum = log_partition(m);
    const MomentPair mp_enum = moments(m);
    m.backend = Backend::junction_tree;
    const double lp_jt = log_partition(m);
    const MomentPair mp_jt = moments(m);

    worst = std::max(worst, std::abs(lp_jt - lp_enum) / std::max(1.0, std::abs(lp_enum)));
    worst = std::max(worst, (mp_enum.mu - mp_jt.mu).cwiseAbs().maxCoeff());
    worst = std::max(worst, (mp_enum.sigma - mp_jt.sigma).cwiseAbs().maxCoeff());

    for (const auto& scope : scopes) {
      MEDModel e = m;
      e.backend = Backend::enumeration;
      const Eigen::VectorXd pe = log_marginal(e, scope).logv.array().exp();
      const Eigen::VectorXd pj = log_marginal(m, scope).logv.array().exp();
      worst = std::max(worst, (pe - pj).cwiseAbs().maxCoeff());
    }
    if (worst > 1e-8) return false;
  }
  return true;
}

void criterion_5() {
  std::mt19937_64 rng(2025);
  double worst = 0;
  bool pass = true;
  pass = pass && backends_agree(toy_schema(), {{0, 1, 2}}, 20, rng, worst);
  pass = pass &&
         backends_agree(Schema::with_cardinalities({{"a", 3}, {"b", 2}, {"c", 2}, {"d", 2}}),
                        {{0, 1}, {1, 2}, {2, 3}}, 15, rng, worst);
  pass = pass && backends_agree(standin_schema(),
                                standin_setup().scopes, 15, rng, worst);
  report(5, "enumeration and junction tree agree to 1e-8", pass,
         "worst deviation " + fmt(worst) + " over 50 draws");
}

void criterion_6() {
  Schema schema = toy_schema();
  QueryCollection qc = canonicalize(full_marginal_set(schema, {0, 1, 2}), schema);
  Dataset data = sample_toy_data(2000, 606);
  NoisyRelease release =
      gaussian_mechanism(qc.evaluate_dataset(data), 5.0, 607, {1.0, 1e-6},
                         qc.sensitivity(), qc.fingerprint());
  NoiseAwarePosterior post(schema, qc, release, 2000);

  std::mt19937_64 rng(608);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd theta = random_vec(post.dim(), rng, 0.8);
    const Eigen::VectorXd g = post.log_density_grad(theta).second;
    for (int j = 0; j < post.dim(); ++j) {
      Eigen::VectorXd up = theta, dn = theta;
      up(j) += 1e-6;
      dn(j) -= 1e-6;
      const double fd = (post.log_density(up) - post.log_density(dn)) / 2e-6;
      worst = std::max(worst, std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  report(6, "posterior gradient matches finite differences", worst < 1e-4,
         "max relative error " + fmt(worst));
}

void criterion_7() {
  bool pass = true;
  double worst_gap = 0;
  for (double eps : {0.1, 0.3, 0.5, 1.0, 100.0})
    for (double delta : {2.5e-7, 4.7e-10})
      for (double sens : {std::sqrt(2.0), std::sqrt(6.0)}) {
        const PrivacyBudget budget{eps, delta};
        const double sigma = calibrate_sigma(budget, sens);
        const double achieved = delta_of(eps, sigma, sens);
        if (!(achieved <= delta && achieved >= delta - 1e-12)) pass = false;
        worst_gap = std::max(worst_gap, delta - achieved);
      }
  // Scaling law: the calibrated noise is linear in the sensitivity.
  double worst_scale = 0;
  for (double eps : {0.1, 1.0}) {
    const PrivacyBudget budget{eps, 2.5e-7};
    const double base = calibrate_sigma(budget, 1.0);
    for (double c : {std::sqrt(2.0), 3.0, 10.0}) {
      const double scaled = calibrate_sigma(budget, c);
      worst_scale = std::max(worst_scale, std::abs(scaled - c * base) / (c * base));
    }
  }
  pass = pass && worst_scale < 1e-10;
  report(7, "mechanism calibration round trip and scaling", pass,
         "max delta slack " + fmt(worst_gap) + ", scale error " + fmt(worst_scale));
}

void criterion_8() {
  std::mt19937_64 rng(808);
  bool pass = true;
  double worst_ratio = 0;
  const std::vector<std::pair<Schema, std::vector<std::vector<int>>>> setups = {
      {toy_schema(), {{0, 1, 2}}},
      {Schema::with_cardinalities({{"a", 3}, {"b", 2}, {"c", 4}}), {{0, 1}, {1, 2}}},
  };
  for (const auto& [schema, scopes] : setups) {
    const QueryCollection raw = full_sets_for_scopes(schema, scopes);
    const QueryCollection canon = canonicalize(raw, schema);
    for (const QueryCollection* qc : {&raw, &canon}) {
      const double bound = raw.sensitivity();
      for (int t = 0; t < 1000; ++t) {
        Eigen::MatrixXi a(20, schema.num_variables());
        for (long i = 0; i < 20; ++i)
          for (int j = 0; j < schema.num_variables(); ++j)
            a(i, j) = static_cast<int>(rng() % schema.cardinality(j));
        Eigen::MatrixXi b = a;
        const long row = static_cast<long>(rng() % 20);
        for (int j = 0; j < schema.num_variables(); ++j)
          b(row, j) = static_cast<int>(rng() % schema.cardinality(j));
        const Eigen::VectorXd sa = qc->evaluate_dataset(Dataset(schema, a));
        const Eigen::VectorXd sb = qc->evaluate_dataset(Dataset(schema, b));
        const double ratio = (sa - sb).norm() / bound;
        worst_ratio = std::max(worst_ratio, ratio);
        if (ratio > 1.0 + 1e-12) pass = false;
      }
    }
  }
  report(8, "neighbouring datasets respect the sensitivity bound", pass,
         "worst ratio to bound " + fmt(worst_ratio));
}

void criterion_9() {
  auto scalar = [](double q, double v) {
    AnalysisResult r;
    r.q = Eigen::VectorXd::Constant(1, q);
    r.v = Eigen::VectorXd::Constant(1, v);
    r.coefficient_names = {"x"};
    return r;
  };
  bool pass = true;
  // Two unit-variance estimates 1 and 3 pool to q = 2, T = 2, dof = 4/9.
  CombinedResult a = combine({scalar(1, 1), scalar(3, 1)}, 100, 100);
  pass = pass && std::abs(a.estimates[0].q_bar - 2.0) < 1e-12 &&
         std::abs(a.estimates[0].variance - 2.0) < 1e-12 &&
         std::abs(a.estimates[0].dof - 4.0 / 9.0) < 1e-12;
  // Near-identical estimates force the clamped branch.
  CombinedResult b = combine({scalar(2, 1), scalar(2 + 1e-9, 1)}, 500, 1000);
  pass = pass && b.estimates[0].variance_clamped &&
         std::abs(b.estimates[0].variance - 0.5) < 1e-9;
  // Exactly identical estimates give infinite dof.
  CombinedResult c = combine({scalar(2, 1), scalar(2, 1)}, 100, 100);
  pass = pass && std::isinf(c.estimates[0].dof);
  report(9, "combining rules reproduce hand-computed cases", pass,
         "q " + fmt(a.estimates[0].q_bar) + ", T " + fmt(a.estimates[0].variance) +
             ", dof " + fmt(a.estimates[0].dof));
}

int numeric_rank(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-9 * sv(0)) ++rank;
  return rank;
}

void criterion_10() {
  bool pass = true;
  std::string detail;
  const std::vector<std::pair<Schema, std::vector<std::vector<int>>>> setups = {
      {toy_schema(), {{0, 1, 2}}},
      {Schema::with_cardinalities({{"a", 3}, {"b", 2}, {"c", 2}, {"d", 2}}),
       {{0, 1}, {1, 2}, {2, 3}}},
      {standin_schema(), standin_setup().scopes},
  };
  for (const auto& [schema, scopes] : setups) {
    const QueryCollection raw = full_sets_for_scopes(schema, scopes);
    const QueryCollection canon = canonicalize(raw, schema);

    Eigen::MatrixXd ac = detail::feature_matrix(schema, canon, 1000000);
    Eigen::MatrixXd ao = detail::feature_matrix(schema, raw, 1000000);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(ac.rows());
    Eigen::MatrixXd ac1(ac.rows(), ac.cols() + 1);
    ac1 << ac, ones;
    Eigen::MatrixXd ao1(ao.rows(), ao.cols() + 1);
    ao1 << ao, ones;
    Eigen::MatrixXd both(ac.rows(), ac1.cols() + ao.cols());
    both << ac1, ao;

    const bool full_rank = numeric_rank(ac1) == static_cast<int>(ac1.cols());
    const bool same_span = numeric_rank(both) == numeric_rank(ac1) &&
                           numeric_rank(ao1) == numeric_rank(ac1);
    const QueryCollection twice = canonicalize(canon, schema);
    const bool idempotent =
        twice.size() == canon.size() && twice.fingerprint() == canon.fingerprint();
    if (!(full_rank && same_span && idempotent)) pass = false;
    detail += std::to_string(canon.size()) + "q ";
  }
  report(10, "canonical queries are identifiable and idempotent", pass,
         "canonical sizes " + detail);
}

void criterion_11() {
  // Analytic surrogate: correlated Gaussian, means within 3 Monte Carlo
  // standard errors.
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 1.2, 1.2, 1.0;
  const Eigen::MatrixXd prec = cov.inverse();
  auto target = [&prec](const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
    grad = -prec * z;
    return -0.5 * z.dot(prec * z);
  };
  NutsConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 400;
  cfg.samples = 1000;
  PosteriorSamples surrogate = nuts_run(target, 2, cfg, 1111);
  bool pass = true;
  std::string detail = "surrogate z ";
  for (int j = 0; j < 2; ++j) {
    const double se = std::sqrt(cov(j, j) / surrogate.ess(j));
    const double z = std::abs(surrogate.draws.col(j).mean()) / se;
    detail += fmt(z) + " ";
    if (z > 3.0) pass = false;
  }

  // Toy posterior run with the full sampler budget.
  Schema schema = toy_schema();
  QueryCollection qc = canonicalize(full_marginal_set(schema, {0, 1, 2}), schema);
  Dataset data = sample_toy_data(2000, 1112);
  const double sigma = calibrate_sigma({0.5, 2.5e-7}, qc.sensitivity());
  NoisyRelease release = gaussian_mechanism(qc.evaluate_dataset(data), sigma, 1113,
                                            {0.5, 2.5e-7}, qc.sensitivity(), qc.fingerprint());
  NoiseAwarePosterior post(schema, qc, release, 2000);
  LaplaceApprox la = laplace_fit(post, 1114);
  NutsConfig full;
  full.chains = 4;
  full.warmup = 800;
  full.samples = 2000;
  PosteriorSamples s = nuts_sample(post, la, full, 1115);
  const double max_rhat = s.r_hat.maxCoeff();
  const double min_ess = s.ess.minCoeff();
  if (max_rhat > 1.05 || min_ess < 400) pass = false;
  report(11, "sampler recovers surrogates and mixes on the toy posterior", pass,
         detail + "| max rhat " + fmt(max_rhat) + ", min ess " + fmt(min_ess));
}

void criterion_12() {
  std::printf("NOTE  criterion 12  the census-scale studies (1.79M-cell domains, "
              "multi-hour sampling runs) are out of desk-scale reach by design; "
              "a 6-variable junction-tree stand-in substitutes\n");
  ExperimentConfig cfg = standin_setup();
  cfg.repeats = 20;
  cfg.seed = 1201;
  ExperimentReport rep = run_coverage_experiment(cfg);
  const double c0 = rep.coverage(1.0, 0, 0.95);
  const double c1 = rep.coverage(1.0, 1, 0.95);
  int excluded = 0;
  for (const auto& [eps, count] : rep.failures) excluded += count;
  const bool pass = c0 >= 0.90 && c1 >= 0.90;
  report(12, "stand-in schema calibration with NUTS", pass,
         "coverage " + fmt(c0) + ", " + fmt(c1) + ", excluded repeats " +
             std::to_string(excluded) + ", runtime " + fmt(rep.runtime_seconds) + " s");
}

}  // namespace

int main() {
  const auto started = std::chrono::steady_clock::now();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  const ToyRuns runs = run_toy_experiments();
  criterion_1(runs);
  criterion_2(runs);
  criterion_3(runs);
  criterion_4(runs);
  criterion_12();
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::printf("%d of 12 criteria passed in %.1f s\n", 12 - failures, elapsed);
  return failures;
}
