#ifndef NAPSUMQ_MCMC_DIAGNOSTICS_HPP
#define NAPSUMQ_MCMC_DIAGNOSTICS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace napsumq {

// Split-chain potential scale reduction and effective sample size for one
// parameter. `chains` holds equal-length scalar traces.
namespace detail {

inline std::vector<Eigen::VectorXd> split_chains(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    const Eigen::Index h = c.size() / 2;
    halves.push_back(c.head(h));
    halves.push_back(c.segment(h, h));
  }
  return halves;
}

inline double autocovariance(const Eigen::VectorXd& x, Eigen::Index lag, double mean) {
  const Eigen::Index n = x.size();
  double acc = 0;
  for (Eigen::Index t = 0; t < n - lag; ++t) acc += (x(t) - mean) * (x(t + lag) - mean);
  return acc / static_cast<double>(n);
}

}  // namespace detail

inline double split_r_hat(const std::vector<Eigen::VectorXd>& chains) {
  const auto halves = detail::split_chains(chains);
  const int m = static_cast<int>(halves.size());
  const auto n = static_cast<double>(halves[0].size());
  Eigen::VectorXd means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    means(c) = halves[c].mean();
    vars(c) = (halves[c].array() - means(c)).square().sum() / (n - 1);
  }
  const double grand = means.mean();
  const double b = n / (m - 1.0) * (means.array() - grand).square().sum();
  const double w = vars.mean();
  if (w <= 0) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

// Effective sample size via Geyer's initial positive/monotone sequence on the
// chain-averaged autocorrelations.
inline double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  const auto halves = detail::split_chains(chains);
  const int m = static_cast<int>(halves.size());
  const auto n = static_cast<Eigen::Index>(halves[0].size());
  const auto nd = static_cast<double>(n);

  Eigen::VectorXd means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    means(c) = halves[c].mean();
    vars(c) = (halves[c].array() - means(c)).square().sum() / (nd - 1);
  }
  const double grand = means.mean();
  const double b = nd / (m - 1.0) * (means.array() - grand).square().sum();
  const double w = vars.mean();
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  if (var_plus <= 0) return static_cast<double>(m) * nd;

  auto rho = [&](Eigen::Index lag) {
    double acov = 0;
    for (int c = 0; c < m; ++c) acov += detail::autocovariance(halves[c], lag, means(c));
    acov /= m;
    return 1.0 - (w - acov) / var_plus;
  };

  double tau = 1.0;  // = 1 + 2 * sum of usable autocorrelations
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 1; k + 1 < n; k += 2) {
    double pair = rho(k) + rho(k + 1);
    if (pair < 0) break;
    pair = std::min(pair, prev_pair);  // enforce monotonicity
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  return static_cast<double>(m) * nd / tau;
}

}  // namespace napsumq

#endif  // NAPSUMQ_MCMC_DIAGNOSTICS_HPP
