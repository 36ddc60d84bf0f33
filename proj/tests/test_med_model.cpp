#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "napsumq/med_model.hpp"

using namespace napsumq;

namespace {

MEDModel toy_model(Eigen::VectorXd theta, Backend backend) {
  MEDModel m;
  m.schema = toy_schema();
  m.queries = canonicalize(full_marginal_set(m.schema, {0, 1, 2}), m.schema);
  m.theta = std::move(theta);
  m.backend = backend;
  return m;
}

Eigen::VectorXd random_theta(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t(i) = gauss(rng);
  return t;
}

}  // namespace

TEST_CASE("log partition of the uniform model") {
  MEDModel m = toy_model(Eigen::VectorXd::Zero(7), Backend::enumeration);
  CHECK(log_partition(m) == Catch::Approx(std::log(8.0)).epsilon(1e-12));
  m.backend = Backend::junction_tree;
  CHECK(log_partition(m) == Catch::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("log partition agrees across backends on random parameters") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    MEDModel m = toy_model(random_theta(7, rng), Backend::enumeration);
    const double enum_lp = log_partition(m);
    m.backend = Backend::junction_tree;
    const double jt_lp = log_partition(m);
    CHECK(jt_lp == Catch::Approx(enum_lp).epsilon(1e-10));
  }
}

TEST_CASE("log partition is overflow safe") {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(7);
  theta(0) = 50.0;
  MEDModel m = toy_model(theta, Backend::enumeration);
  CHECK(std::isfinite(log_partition(m)));
  m.backend = Backend::junction_tree;
  CHECK(std::isfinite(log_partition(m)));
}

TEST_CASE("normalization holds on enumeration domains") {
  std::mt19937_64 rng(6);
  MEDModel m = toy_model(random_theta(7, rng), Backend::enumeration);
  const auto [p, logz] = detail::cell_probabilities(m);
  CHECK(p.sum() == Catch::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("moments of a single canonical binary query at theta zero") {
  Schema s = Schema::with_cardinalities({{"a", 2}});
  MEDModel m;
  m.schema = s;
  m.queries = canonicalize(full_marginal_set(s, {0}), s);
  m.theta = Eigen::VectorXd::Zero(1);
  MomentPair mp = moments(m);
  CHECK(mp.mu(0) == Catch::Approx(0.5));
  CHECK(mp.sigma(0, 0) == Catch::Approx(0.25));
}

TEST_CASE("moments equal finite differences of the log partition") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    MEDModel m = toy_model(random_theta(7, rng), Backend::enumeration);
    MomentPair mp = moments(m);
    const double h = 1e-5;
    for (int j = 0; j < 7; ++j) {
      MEDModel up = m, dn = m;
      up.theta(j) += h;
      dn.theta(j) -= h;
      const double fd = (log_partition(up) - log_partition(dn)) / (2 * h);
      CHECK(mp.mu(j) == Catch::Approx(fd).margin(1e-4 * std::max(1.0, std::abs(fd))));
    }
  }
}

TEST_CASE("covariance equals the finite-difference Hessian") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    MEDModel m = toy_model(random_theta(7, rng, 0.7), Backend::enumeration);
    MomentPair mp = moments(m);
    const double h = 1e-4;
    for (int j = 0; j < 7; ++j)
      for (int k = 0; k < 7; ++k) {
        MEDModel pp = m, pm = m, mpp = m, mm = m;
        pp.theta(j) += h;
        pp.theta(k) += h;
        pm.theta(j) += h;
        pm.theta(k) -= h;
        mpp.theta(j) -= h;
        mpp.theta(k) += h;
        mm.theta(j) -= h;
        mm.theta(k) -= h;
        const double fd = (log_partition(pp) - log_partition(pm) - log_partition(mpp) +
                           log_partition(mm)) /
                          (4 * h * h);
        CHECK(mp.sigma(j, k) == Catch::Approx(fd).margin(1e-3 * std::max(1.0, std::abs(fd))));
      }
  }
}

TEST_CASE("Bernoulli variance identity on the diagonal") {
  std::mt19937_64 rng(9);
  MEDModel m = toy_model(random_theta(7, rng), Backend::enumeration);
  MomentPair mp = moments(m);
  for (int j = 0; j < 7; ++j)
    CHECK(mp.sigma(j, j) == Catch::Approx(mp.mu(j) * (1 - mp.mu(j))).epsilon(1e-10));
}

TEST_CASE("moments agree across backends") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    MEDModel m = toy_model(random_theta(7, rng), Backend::enumeration);
    MomentPair a = moments(m);
    m.backend = Backend::junction_tree;
    MomentPair b = moments(m);
    CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.sigma - b.sigma).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("junction tree marginals match enumeration on every query scope") {
  Schema s = Schema::with_cardinalities({{"a", 3}, {"b", 2}, {"c", 2}, {"d", 2}});
  QueryCollection qc =
      canonicalize(full_sets_for_scopes(s, {{0, 1}, {1, 2}, {2, 3}}), s);
  std::mt19937_64 rng(11);
  MEDModel m;
  m.schema = s;
  m.queries = qc;
  m.theta = random_theta(qc.size(), rng);
  m.backend = Backend::enumeration;
  for (const auto& scope : std::vector<std::vector<int>>{{0}, {1}, {0, 1}, {1, 2}, {2, 3},
                                                         {0, 3}}) {
    LogFactor enum_marg = log_marginal(m, scope);
    MEDModel jt = m;
    jt.backend = Backend::junction_tree;
    LogFactor jt_marg = log_marginal(jt, scope);
    REQUIRE(enum_marg.logv.size() == jt_marg.logv.size());
    CHECK((enum_marg.logv.array().exp() - jt_marg.logv.array().exp()).abs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("tree width gate rejects dense models") {
  const int d = 10;
  std::vector<std::pair<std::string, int>> spec;
  for (int i = 0; i < d; ++i) spec.emplace_back("v" + std::to_string(i), 2);
  Schema s = Schema::with_cardinalities(spec);
  std::vector<std::vector<int>> scopes;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) scopes.push_back({i, j});
  QueryCollection qc = canonicalize(full_sets_for_scopes(s, scopes), s);
  MEDModel m;
  m.schema = s;
  m.queries = qc;
  m.theta = Eigen::VectorXd::Zero(qc.size());
  m.backend = Backend::junction_tree;
  m.width_limit = 3;
  CHECK_THROWS_AS(log_partition(m), NumericError);
  m.width_limit = 12;
  CHECK(std::isfinite(log_partition(m)));
  CHECK(report_induced_width(m) == 9);
}

TEST_CASE("sampling the uniform model hits all cells evenly") {
  MEDModel m = toy_model(Eigen::VectorXd::Zero(7), Backend::enumeration);
  Dataset ds = sample(m, 100000, 13);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(8);
  const auto& c = ds.codes();
  for (Eigen::Index i = 0; i < c.rows(); ++i) freq(4 * c(i, 0) + 2 * c(i, 1) + c(i, 2)) += 1;
  freq /= static_cast<double>(c.rows());
  CHECK((freq.array() - 0.125).abs().maxCoeff() < 0.01);
}

TEST_CASE("sampling edge cases and determinism") {
  MEDModel m = toy_model(Eigen::VectorXd::Zero(7), Backend::enumeration);
  CHECK(sample(m, 0, 1).num_rows() == 0);
  Dataset a = sample(m, 100, 2);
  Dataset b = sample(m, 100, 2);
  CHECK(a.codes() == b.codes());
}

TEST_CASE("both backends sample the same distribution") {
  std::mt19937_64 rng(14);
  MEDModel m = toy_model(random_theta(7, rng, 0.8), Backend::enumeration);
  Dataset ds_enum = sample(m, 100000, 3);
  m.backend = Backend::junction_tree;
  Dataset ds_jt = sample(m, 100000, 4);
  Eigen::VectorXd fa = Eigen::VectorXd::Zero(8), fb = Eigen::VectorXd::Zero(8);
  for (Eigen::Index i = 0; i < ds_enum.num_rows(); ++i) {
    const auto& c = ds_enum.codes();
    fa(4 * c(i, 0) + 2 * c(i, 1) + c(i, 2)) += 1;
  }
  for (Eigen::Index i = 0; i < ds_jt.num_rows(); ++i) {
    const auto& c = ds_jt.codes();
    fb(4 * c(i, 0) + 2 * c(i, 1) + c(i, 2)) += 1;
  }
  fa /= static_cast<double>(ds_enum.num_rows());
  fb /= static_cast<double>(ds_jt.num_rows());
  CHECK((fa - fb).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("pgm baseline matches moments on a noiseless release") {
  std::mt19937_64 rng(15);
  Eigen::VectorXd theta_star = random_theta(7, rng, 0.5);
  MEDModel truth = toy_model(theta_star, Backend::enumeration);
  MomentPair mp = moments(truth);
  const long n = 1000000;

  NoisyRelease release;
  release.s_tilde = static_cast<double>(n) * mp.mu;  // exact expected counts
  release.sigma_dp = 1e-9;
  release.sensitivity = std::sqrt(2.0);
  release.budget = {1.0, 1e-6};
  release.query_fingerprint = truth.queries.fingerprint();

  MEDModel fitted = fit_pgm_mle(release, truth.queries, truth.schema, n);
  MomentPair fitted_mp = moments(fitted);
  CHECK((fitted_mp.mu - mp.mu).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("pgm baseline fixed point at the uniform release") {
  MEDModel uniform = toy_model(Eigen::VectorXd::Zero(7), Backend::enumeration);
  MomentPair mp = moments(uniform);
  const long n = 2000;
  NoisyRelease release;
  release.s_tilde = static_cast<double>(n) * mp.mu;
  release.sigma_dp = 1.0;
  release.sensitivity = std::sqrt(2.0);
  release.budget = {1.0, 1e-6};
  release.query_fingerprint = uniform.queries.fingerprint();
  MEDModel fitted = fit_pgm_mle(release, uniform.queries, uniform.schema, n);
  MomentPair fitted_mp = moments(fitted);
  CHECK((release.s_tilde - n * fitted_mp.mu).squaredNorm() < 1e-8);
}

TEST_CASE("pgm baseline rejects mismatched fingerprints") {
  MEDModel m = toy_model(Eigen::VectorXd::Zero(7), Backend::enumeration);
  NoisyRelease release;
  release.s_tilde = Eigen::VectorXd::Zero(7);
  release.query_fingerprint = 1234;  // wrong
  CHECK_THROWS_AS(fit_pgm_mle(release, m.queries, m.schema, 100), ConfigError);
}
