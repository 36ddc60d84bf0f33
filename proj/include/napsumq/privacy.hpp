#ifndef NAPSUMQ_PRIVACY_HPP
#define NAPSUMQ_PRIVACY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/rng.hpp"

namespace napsumq {

struct PrivacyBudget {
  double epsilon = 0;
  double delta = 0;

  void validate() const {
    if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
    if (!(delta > 0 && delta < 1)) throw ConfigError("delta must lie in (0,1)");
  }
};

namespace detail {

// Scaled complementary error function exp(z^2) erfc(z) for z > 0, via the
// Laplace continued fraction. Converges fast for the z >= 5 range we use it in.
inline double erfcx_large(double z) {
  double cf = 0.0;
  for (int k = 60; k >= 1; --k) cf = (0.5 * k) / (z + cf);
  constexpr double inv_sqrt_pi = 0.5641895835477562869;
  return inv_sqrt_pi / (z + cf);
}

// log Phi(x), stable deep into the lower tail (x ~ -1000 still fine).
inline double log_norm_cdf(double x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  const double z = -x * inv_sqrt2;
  if (z < 5.0) return std::log(0.5 * std::erfc(z));
  return std::log(0.5) - z * z + std::log(erfcx_large(z));
}

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

}  // namespace detail

// Analytic Gaussian-mechanism bound:
//   delta = Phi(D/(2s) - es/D) - e^e Phi(-D/(2s) - es/D).
// The e^e Phi(.) product is evaluated in log space; naive evaluation turns
// into 0 * inf for large epsilon.
inline double delta_of(double epsilon, double sigma, double sensitivity) {
  if (!(epsilon > 0) || !(sigma > 0) || !(sensitivity > 0))
    throw ConfigError("delta_of: all arguments must be positive");
  const double ratio = sigma / sensitivity;
  const double a = 0.5 / ratio - epsilon * ratio;
  const double b = -0.5 / ratio - epsilon * ratio;
  const double l1 = detail::log_norm_cdf(a);
  const double l2 = epsilon + detail::log_norm_cdf(b);
  // l1 > l2 holds for every valid parameter triple.
  const double d = std::exp(l1 + std::log1p(-std::exp(l2 - l1)));
  return std::min(std::max(d, 0.0), 1.0);
}

// Smallest sigma with delta_of(epsilon, sigma, sensitivity) <= delta.
// delta_of is strictly decreasing in sigma, so bisection on log sigma over an
// auto-expanding bracket suffices.
inline double calibrate_sigma(const PrivacyBudget& budget, double sensitivity) {
  budget.validate();
  if (!(sensitivity > 0)) throw ConfigError("calibrate_sigma: sensitivity must be positive");

  double lo = std::log(1e-3 * sensitivity);
  double hi = std::log(1e6 * sensitivity);
  int expand = 0;
  while (delta_of(budget.epsilon, std::exp(hi), sensitivity) > budget.delta) {
    hi += std::log(10.0);
    if (++expand > 30)
      throw NumericError("calibrate_sigma: bracketing failure, upper endpoint " +
                         std::to_string(std::exp(hi)));
  }
  expand = 0;
  while (delta_of(budget.epsilon, std::exp(lo), sensitivity) < budget.delta) {
    lo -= std::log(10.0);
    if (++expand > 30)
      throw NumericError("calibrate_sigma: bracketing failure, lower endpoint " +
                         std::to_string(std::exp(lo)));
  }
  for (int it = 0; it < 96 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (delta_of(budget.epsilon, std::exp(mid), sensitivity) <= budget.delta)
      hi = mid;
    else
      lo = mid;
  }
  return std::exp(hi);
}

// Perturbed query counts plus everything needed to reason about them without
// the private data.
struct NoisyRelease {
  Eigen::VectorXd s_tilde;
  double sigma_dp = 0;
  double sensitivity = 0;
  PrivacyBudget budget;
  std::uint64_t query_fingerprint = 0;
  std::uint64_t seed = 0;
};

inline NoisyRelease gaussian_mechanism(const Eigen::VectorXd& s, double sigma,
                                       std::uint64_t rng_seed, const PrivacyBudget& budget,
                                       double sensitivity, std::uint64_t query_fingerprint) {
  if (!(sigma > 0)) throw ConfigError("gaussian_mechanism: sigma must be positive");
  auto rng = make_rng(rng_seed, {0x6d656368u});
  std::normal_distribution<double> noise(0.0, sigma);
  NoisyRelease r;
  r.s_tilde = s;
  for (Eigen::Index j = 0; j < s.size(); ++j) r.s_tilde(j) += noise(rng);
  r.sigma_dp = sigma;
  r.sensitivity = sensitivity;
  r.budget = budget;
  r.query_fingerprint = query_fingerprint;
  r.seed = rng_seed;
  return r;
}

inline nlohmann::json release_to_json(const NoisyRelease& r) {
  nlohmann::json j;
  j["s_tilde"] = std::vector<double>(r.s_tilde.data(), r.s_tilde.data() + r.s_tilde.size());
  j["sigma_dp"] = r.sigma_dp;
  j["epsilon"] = r.budget.epsilon;
  j["delta"] = r.budget.delta;
  j["sensitivity"] = r.sensitivity;
  j["query_fingerprint"] = std::to_string(r.query_fingerprint);
  j["seed"] = std::to_string(r.seed);
  return j;
}

inline NoisyRelease release_from_json(const nlohmann::json& j) {
  NoisyRelease r;
  const auto vals = j.at("s_tilde").get<std::vector<double>>();
  r.s_tilde = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  r.sigma_dp = j.at("sigma_dp").get<double>();
  r.budget.epsilon = j.at("epsilon").get<double>();
  r.budget.delta = j.at("delta").get<double>();
  r.sensitivity = j.at("sensitivity").get<double>();
  r.query_fingerprint = std::stoull(j.at("query_fingerprint").get<std::string>());
  r.seed = std::stoull(j.at("seed").get<std::string>());
  return r;
}

}  // namespace napsumq

#endif  // NAPSUMQ_PRIVACY_HPP
