#include <catch2/catch_amalgamated.hpp>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>

#include "napsumq/privacy.hpp"

using namespace napsumq;

namespace {

// Independent evaluation of the mechanism bound with a second normal CDF
// implementation (boost.math). Only valid away from the deep tail.
double delta_reference(double epsilon, double sigma, double sensitivity) {
  boost::math::normal_distribution<long double> norm(0.0L, 1.0L);
  const long double a = sensitivity / (2.0L * sigma) - epsilon * sigma / sensitivity;
  const long double b = -sensitivity / (2.0L * sigma) - epsilon * sigma / sensitivity;
  return static_cast<double>(boost::math::cdf(norm, a) -
                             std::exp((long double)epsilon) * boost::math::cdf(norm, b));
}

}  // namespace

TEST_CASE("delta_of matches an independent CDF evaluation") {
  CHECK(delta_of(1.0, 1.0, 1.0) ==
        Catch::Approx(delta_reference(1.0, 1.0, 1.0)).margin(1e-10));
  CHECK(delta_of(0.5, 2.0, std::sqrt(2.0)) ==
        Catch::Approx(delta_reference(0.5, 2.0, std::sqrt(2.0))).margin(1e-12));
  CHECK(delta_of(3.0, 0.7, 2.0) ==
        Catch::Approx(delta_reference(3.0, 0.7, 2.0)).margin(1e-12));
}

TEST_CASE("delta_of limits and monotonicity") {
  CHECK(delta_of(1.0, 1e6, 1.0) < 1e-10);
  CHECK(delta_of(1.0, 0.5, 1.0) > delta_of(1.0, 1.0, 1.0));
  CHECK(delta_of(1.0, 1.0, 1.0) > delta_of(1.0, 2.0, 1.0));
  CHECK_THROWS_AS(delta_of(-1.0, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(delta_of(1.0, 0.0, 1.0), ConfigError);
}

TEST_CASE("delta_of survives the deep tail at large epsilon") {
  const double d = delta_of(100.0, 50.0, 1.0);
  CHECK(std::isfinite(d));
  CHECK(d >= 0.0);
  CHECK(d < 1e-100);
}

TEST_CASE("calibrate_sigma round trip on the paper grid") {
  const double delta = 2.5e-7;
  for (double eps : {0.1, 0.5, 1.0, 100.0}) {
    const double sigma = calibrate_sigma({eps, delta}, std::sqrt(2.0));
    const double back = delta_of(eps, sigma, std::sqrt(2.0));
    CHECK(back <= delta);
    CHECK(back >= delta - 1e-12);
  }
}

TEST_CASE("calibrate_sigma randomized round trips") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double eps = std::exp(std::log(0.05) + u01(rng) * std::log(100.0 / 0.05));
    const double delta = std::exp(std::log(1e-12) + u01(rng) * std::log(1e-2 / 1e-12));
    const double sens = 0.5 + 9.5 * u01(rng);
    const double sigma = calibrate_sigma({eps, delta}, sens);
    const double back = delta_of(eps, sigma, sens);
    CHECK(back <= delta);
    CHECK(back >= delta - 1e-12);
  }
}

TEST_CASE("calibration scaling law in the sensitivity") {
  const PrivacyBudget budget{1.0, 1e-6};
  const double base = calibrate_sigma(budget, 1.0);
  for (double c : {0.5, 2.0, 7.0}) {
    CHECK(calibrate_sigma(budget, c) == Catch::Approx(c * base).epsilon(1e-10));
  }
}

TEST_CASE("looser epsilon needs less noise") {
  const double delta = 2.5e-7;
  CHECK(calibrate_sigma({100.0, delta}, 1.0) < calibrate_sigma({0.1, delta}, 1.0));
}

TEST_CASE("delta_of decreasing in epsilon at fixed sigma") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double sigma = 0.5 + 4.0 * u01(rng);
    const double eps = 0.1 + 3.0 * u01(rng);
    CHECK(delta_of(eps, sigma, 1.0) > delta_of(eps * 1.5, sigma, 1.0));
  }
}

TEST_CASE("gaussian mechanism basics") {
  Eigen::VectorXd s(2);
  s << 5, 3;
  const PrivacyBudget budget{1.0, 1e-6};

  NoisyRelease tiny = gaussian_mechanism(s, 1e-12, 4, budget, 1.0, 123);
  CHECK((tiny.s_tilde - s).cwiseAbs().maxCoeff() < 1e-9);

  NoisyRelease a = gaussian_mechanism(s, 2.0, 99, budget, 1.0, 123);
  NoisyRelease b = gaussian_mechanism(s, 2.0, 99, budget, 1.0, 123);
  CHECK(a.s_tilde == b.s_tilde);
  NoisyRelease c = gaussian_mechanism(s, 2.0, 100, budget, 1.0, 123);
  CHECK(a.s_tilde != c.s_tilde);

  CHECK_THROWS_AS(gaussian_mechanism(s, 0.0, 1, budget, 1.0, 123), ConfigError);
}

TEST_CASE("gaussian mechanism sample variance concentrates") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(100000);
  NoisyRelease r = gaussian_mechanism(zero, 2.0, 31, {1.0, 1e-6}, 1.0, 0);
  const double var = r.s_tilde.squaredNorm() / r.s_tilde.size();
  CHECK(var > 3.9);
  CHECK(var < 4.1);
}

TEST_CASE("release JSON round trip") {
  Eigen::VectorXd s(3);
  s << 1.5, -2.25, 7.0;
  NoisyRelease r;
  r.s_tilde = s;
  r.sigma_dp = 3.25;
  r.sensitivity = std::sqrt(2.0);
  r.budget = {0.5, 2.5e-7};
  r.query_fingerprint = 0xdeadbeefcafeULL;
  r.seed = 42;
  NoisyRelease back = release_from_json(release_to_json(r));
  CHECK(back.s_tilde == r.s_tilde);
  CHECK(back.sigma_dp == r.sigma_dp);
  CHECK(back.sensitivity == r.sensitivity);
  CHECK(back.budget.epsilon == r.budget.epsilon);
  CHECK(back.budget.delta == r.budget.delta);
  CHECK(back.query_fingerprint == r.query_fingerprint);
  CHECK(back.seed == r.seed);
}
