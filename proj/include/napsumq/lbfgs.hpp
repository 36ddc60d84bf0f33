#ifndef NAPSUMQ_LBFGS_HPP
#define NAPSUMQ_LBFGS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <utility>

namespace napsumq {

struct LbfgsOptions {
  int max_iterations = 500;
  double improvement_tol = 1e-5;  // stop when an iteration improves less than this
  double gradient_tol = 1e-4;     // and the gradient is this flat
  double divergence_jump = 1000;  // loss increase treated as divergence
  int memory = 10;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

// Limited-memory BFGS with two-loop recursion and Armijo backtracking.
// `fg(x, grad)` returns the objective and fills the gradient.
template <typename FG>
LbfgsResult lbfgs_minimize(FG&& fg, Eigen::VectorXd x0, const LbfgsOptions& opts = {}) {
  LbfgsResult res;
  res.x = std::move(x0);
  const Eigen::Index d = res.x.size();
  Eigen::VectorXd grad(d);
  res.f = fg(res.x, grad);

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;  // (s, y)
  double gamma = 1.0;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(history.size());
    for (int i = static_cast<int>(history.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = history[i];
      const double rho = 1.0 / y.dot(s);
      alpha[i] = rho * s.dot(q);
      q -= alpha[i] * y;
    }
    q *= gamma;
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, y] = history[i];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(q);
      q += (alpha[i] - beta) * s;
    }
    const Eigen::VectorXd direction = -q;
    const double slope = grad.dot(direction);
    if (slope >= 0) {
      history.clear();  // lost curvature; restart from steepest descent next round
      gamma = 1.0;
      continue;
    }

    double step = 1.0;
    double f_new = 0;
    Eigen::VectorXd x_new, grad_new(d);
    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      x_new = res.x + step * direction;
      f_new = fg(x_new, grad_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = grad.lpNorm<Eigen::Infinity>() < opts.gradient_tol;
      break;
    }
    if (f_new > res.f + opts.divergence_jump || !std::isfinite(f_new)) {
      res.diverged = true;
      break;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      history.emplace_back(s, y);
      if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
      gamma = sy / y.squaredNorm();
    }

    const double improvement = res.f - f_new;
    res.x = std::move(x_new);
    res.f = f_new;
    grad = grad_new;
    if (improvement < opts.improvement_tol &&
        grad.lpNorm<Eigen::Infinity>() < opts.gradient_tol) {
      res.converged = true;
      break;
    }
  }
  res.gradient = grad;
  if (!res.diverged && grad.lpNorm<Eigen::Infinity>() < opts.gradient_tol)
    res.converged = true;
  return res;
}

}  // namespace napsumq

#endif  // NAPSUMQ_LBFGS_HPP
