#ifndef NAPSUMQ_INFERENCE_HPP
#define NAPSUMQ_INFERENCE_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/lbfgs.hpp"
#include "napsumq/mcmc_diagnostics.hpp"
#include "napsumq/med_model.hpp"
#include "napsumq/rng.hpp"

namespace napsumq {

// Posterior over theta given the noisy release, under the CLT approximation
//   s_tilde ~ N(n mu(theta), n Sigma(theta) + sigma_dp^2 I)
// with a N(0, prior_std^2 I) prior. Gradients are exact: the derivative of
// Sigma is the third central moment of the features, accumulated over the
// enumerated domain, so this object requires an enumerable domain.
class NoiseAwarePosterior {
 public:
  NoiseAwarePosterior(Schema schema, QueryCollection queries, NoisyRelease release, long n,
                      double prior_std = 10.0, long enumeration_cap = 1'000'000)
      : schema_(std::move(schema)),
        queries_(std::move(queries)),
        release_(std::move(release)),
        n_(n),
        prior_std_(prior_std) {
    if (!(prior_std_ > 0)) throw ConfigError("prior_std must be positive");
    if (n_ < 1) throw ConfigError("n must be positive");
    if (release_.query_fingerprint != queries_.fingerprint())
      throw ConfigError("release fingerprint does not match query collection");
    if (release_.s_tilde.size() != queries_.size())
      throw ConfigError("release length does not match query count");
    features_ = detail::feature_matrix(schema_, queries_, enumeration_cap);
  }

  int dim() const { return queries_.size(); }
  const Schema& schema() const { return schema_; }
  const QueryCollection& queries() const { return queries_; }
  const NoisyRelease& release() const { return release_; }
  long n() const { return n_; }
  double prior_std() const { return prior_std_; }

  double log_density(const Eigen::VectorXd& theta) const {
    return log_density_impl(theta, nullptr);
  }

  // Returns log density (up to a theta-independent constant) and gradient.
  std::pair<double, Eigen::VectorXd> log_density_grad(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd grad;
    const double f = log_density_impl(theta, &grad);
    return {f, std::move(grad)};
  }

 private:
  double log_density_impl(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    if (theta.size() != dim()) throw ConfigError("theta dimension mismatch");
    const double nd = static_cast<double>(n_);
    const Eigen::MatrixXd& A = features_;
    const Eigen::VectorXd logits = A * theta;
    const double logz = logsumexp(logits);
    const Eigen::VectorXd p = (logits.array() - logz).exp();
    const Eigen::VectorXd mu = A.transpose() * p;
    Eigen::MatrixXd sigma = A.transpose() * p.asDiagonal() * A - mu * mu.transpose();
    sigma = 0.5 * (sigma + sigma.transpose()).eval();

    Eigen::MatrixXd c = nd * sigma;
    c.diagonal().array() += release_.sigma_dp * release_.sigma_dp;
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
      throw NumericError("posterior covariance not PD, smallest eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()));
    }

    const Eigen::VectorXd r = release_.s_tilde - nd * mu;
    const Eigen::VectorXd w = llt.solve(r);
    const double logdet =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double prior = -0.5 * theta.squaredNorm() / (prior_std_ * prior_std_);
    const double value = -0.5 * r.dot(w) - 0.5 * logdet + prior;

    if (grad) {
      // Centered features; third-central-moment contractions give dSigma.
      const Eigen::MatrixXd centered = A.rowwise() - mu.transpose();
      const Eigen::VectorXd proj = centered * w;                       // a~ . w per cell
      const Eigen::MatrixXd solved = llt.solve(centered.transpose());  // C^-1 a~^T
      const Eigen::VectorXd quad =
          (centered.array() * solved.transpose().array()).rowwise().sum();

      const Eigen::VectorXd term_mean = nd * (sigma * w);
      const Eigen::VectorXd term_quad =
          0.5 * nd * (centered.transpose() * (p.array() * proj.array().square()).matrix());
      const Eigen::VectorXd term_logdet =
          -0.5 * nd * (centered.transpose() * (p.array() * quad.array()).matrix());
      *grad = term_mean + term_quad + term_logdet - theta / (prior_std_ * prior_std_);
    }
    return value;
  }

  Schema schema_;
  QueryCollection queries_;
  NoisyRelease release_;
  long n_;
  double prior_std_;
  Eigen::MatrixXd features_;
};

struct LaplaceApprox {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd cholesky;  // lower factor of covariance
  int restarts_used = 0;

  Eigen::VectorXd draw(std::mt19937_64& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
    return mean + cholesky * z;
  }
};

namespace detail {

// Central finite differences of the exact gradient, symmetrized.
inline Eigen::MatrixXd neg_log_density_hessian_fd(const NoiseAwarePosterior& post,
                                                  const Eigen::VectorXd& at) {
  const int d = post.dim();
  Eigen::MatrixXd h(d, d);
  for (int j = 0; j < d; ++j) {
    const double step = 1e-4 * (1.0 + std::abs(at(j)));
    Eigen::VectorXd up = at, dn = at;
    up(j) += step;
    dn(j) -= step;
    const Eigen::VectorXd gdiff =
        post.log_density_grad(up).second - post.log_density_grad(dn).second;
    h.col(j) = -gdiff / (2.0 * step);
  }
  return 0.5 * (h + h.transpose()).eval();
}

inline Eigen::LLT<Eigen::MatrixXd> llt_with_jitter(Eigen::MatrixXd m,
                                                   const std::string& context) {
  const double base = m.diagonal().mean();
  double jitter = 0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::MatrixXd probe = m;
    probe.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(probe);
    if (llt.info() == Eigen::Success) return llt;
    jitter = jitter == 0 ? 1e-8 * base : jitter * 10;
    if (jitter > 1e-4 * base * 10) break;
  }
  throw NumericError(context + ": matrix not PD after jitter escalation");
}

}  // namespace detail

// MAP by LBFGS with the stop-on-small-improvement protocol and random
// restarts on divergence; covariance from the finite-difference Hessian of
// the exact gradient at the mode.
inline LaplaceApprox laplace_fit(const NoiseAwarePosterior& post, std::uint64_t rng_seed,
                                 int max_iterations = 500, int max_restarts = 5) {
  const int d = post.dim();
  auto objective = [&post](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    auto [f, g] = post.log_density_grad(x);
    grad = -g;
    return -f;
  };

  LbfgsOptions opts;
  opts.max_iterations = max_iterations;
  opts.improvement_tol = 1e-5;
  opts.gradient_tol = 1e-4;
  opts.divergence_jump = 1000;

  auto restart_rng = make_rng(rng_seed, {0x6c617031u});
  std::normal_distribution<double> init_gauss(0.0, 0.1);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(d);
  LbfgsResult best;
  int attempt = 0;
  for (;; ++attempt) {
    LbfgsResult res = lbfgs_minimize(objective, start, opts);
    if (res.converged && !res.diverged) {
      best = std::move(res);
      break;
    }
    if (attempt >= max_restarts)
      throw NumericError("laplace_fit: restart budget exhausted without convergence");
    for (int j = 0; j < d; ++j) start(j) = init_gauss(restart_rng);
  }

  LaplaceApprox la;
  la.mean = best.x;
  la.restarts_used = attempt;

  const Eigen::MatrixXd hess = detail::neg_log_density_hessian_fd(post, la.mean);
  auto llt = detail::llt_with_jitter(hess, "laplace_fit Hessian");
  la.covariance = llt.solve(Eigen::MatrixXd::Identity(d, d));
  la.covariance = 0.5 * (la.covariance + la.covariance.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> cov_llt(la.covariance);
  if (cov_llt.info() != Eigen::Success)
    throw NumericError("laplace_fit: covariance not PD");
  la.cholesky = cov_llt.matrixL();
  return la;
}

struct NutsConfig {
  int chains = 4;
  int warmup = 800;
  int samples = 2000;  // kept per chain
  int max_depth = 12;
  double target_accept = 0.8;
};

struct PosteriorSamples {
  Eigen::MatrixXd draws;  // pooled, one row per kept draw
  std::vector<int> chain_ids;
  Eigen::VectorXd r_hat;
  Eigen::VectorXd ess;
  long divergences = 0;
  long total_transitions = 0;
  bool rhat_flagged = false;       // some parameter above 1.05
  bool divergence_warning = false; // more than 1% divergent transitions
};

namespace detail {

struct PhasePoint {
  Eigen::VectorXd z;
  Eigen::VectorXd r;
  Eigen::VectorXd grad;  // of logp at z
  double logp = 0;

  double hamiltonian() const { return logp - 0.5 * r.squaredNorm(); }
};

template <typename Target>
void leapfrog(Target&& target, PhasePoint& p, double step) {
  p.r += 0.5 * step * p.grad;
  p.z += step * p.r;
  p.logp = target(p.z, p.grad);
  p.r += 0.5 * step * p.grad;
}

template <typename Target>
struct NutsTree {
  PhasePoint leftmost, rightmost, proposal;
  double log_weight = -std::numeric_limits<double>::infinity();
  double accept_sum = 0;
  long accept_count = 0;
  long divergences = 0;
  bool turning = false;
};

inline bool u_turn(const PhasePoint& minus, const PhasePoint& plus) {
  const Eigen::VectorXd span = plus.z - minus.z;
  return span.dot(minus.r) < 0 || span.dot(plus.r) < 0;
}

// Recursive multinomial NUTS doubling.
template <typename Target>
NutsTree<Target> build_tree(Target&& target, const PhasePoint& from, int direction,
                            int depth, double step, double h0, std::mt19937_64& rng) {
  if (depth == 0) {
    PhasePoint p = from;
    leapfrog(target, p, direction * step);
    NutsTree<Target> t;
    const double h = p.hamiltonian();
    const double dh = h - h0;
    t.leftmost = p;
    t.rightmost = p;
    t.proposal = std::move(p);
    t.log_weight = dh;
    t.accept_sum = std::min(1.0, std::exp(dh));
    t.accept_count = 1;
    if (!(dh > -1000.0)) {  // catches NaN as well
      t.divergences = 1;
      t.turning = true;
    }
    return t;
  }

  NutsTree<Target> first =
      build_tree(target, from, direction, depth - 1, step, h0, rng);
  if (first.turning) return first;
  const PhasePoint& edge = direction > 0 ? first.rightmost : first.leftmost;
  NutsTree<Target> second =
      build_tree(target, edge, direction, depth - 1, step, h0, rng);

  NutsTree<Target> merged;
  merged.leftmost = direction > 0 ? first.leftmost : second.leftmost;
  merged.rightmost = direction > 0 ? second.rightmost : first.rightmost;
  const double total =
      std::max(first.log_weight, second.log_weight) +
      std::log(std::exp(first.log_weight - std::max(first.log_weight, second.log_weight)) +
               std::exp(second.log_weight - std::max(first.log_weight, second.log_weight)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  merged.proposal = unif(rng) < std::exp(second.log_weight - total)
                        ? std::move(second.proposal)
                        : std::move(first.proposal);
  merged.log_weight = total;
  merged.accept_sum = first.accept_sum + second.accept_sum;
  merged.accept_count = first.accept_count + second.accept_count;
  merged.divergences = first.divergences + second.divergences;
  merged.turning = second.turning || u_turn(merged.leftmost, merged.rightmost);
  return merged;
}

}  // namespace detail

// Generic NUTS with dual-averaging step-size adaptation on an identity-mass
// target. `target(z, grad)` returns log density and fills its gradient.
template <typename Target>
PosteriorSamples nuts_run(Target&& target, int dim, const NutsConfig& config,
                          std::uint64_t rng_seed) {
  PosteriorSamples out;
  out.draws.resize(static_cast<Eigen::Index>(config.chains) * config.samples, dim);
  out.chain_ids.resize(out.draws.rows());

  std::vector<std::vector<Eigen::VectorXd>> traces(
      dim, std::vector<Eigen::VectorXd>(config.chains, Eigen::VectorXd(config.samples)));

  for (int chain = 0; chain < config.chains; ++chain) {
    auto rng = make_rng(rng_seed, {0x6e757473u, static_cast<std::uint64_t>(chain)});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    detail::PhasePoint current;
    current.z = Eigen::VectorXd::Zero(dim);
    for (int j = 0; j < dim; ++j) current.z(j) = 0.1 * gauss(rng);
    current.grad.resize(dim);
    current.logp = target(current.z, current.grad);

    // Reasonable-step heuristic: double or halve until the one-step
    // acceptance crosses one half.
    double step = 1.0;
    {
      detail::PhasePoint probe = current;
      probe.r.resize(dim);
      for (int j = 0; j < dim; ++j) probe.r(j) = gauss(rng);
      const double h0 = probe.hamiltonian();
      detail::PhasePoint moved = probe;
      detail::leapfrog(target, moved, step);
      double dh = moved.hamiltonian() - h0;
      const double dir = dh > std::log(0.5) ? 1.0 : -1.0;
      for (int it = 0; it < 50; ++it) {
        step *= std::pow(2.0, dir);
        moved = probe;
        detail::leapfrog(target, moved, step);
        dh = moved.hamiltonian() - h0;
        if (!std::isfinite(dh)) dh = -std::numeric_limits<double>::infinity();
        if (dir > 0 ? dh <= std::log(0.5) : dh >= std::log(0.5)) break;
      }
    }

    // Dual averaging (standard constants).
    const double mu_da = std::log(10.0 * step);
    double log_step = std::log(step);
    double log_step_avg = log_step;
    double h_bar = 0;
    const double gamma = 0.05, t0 = 10.0, kappa = 0.75;

    const int total = config.warmup + config.samples;
    for (int iter = 0; iter < total; ++iter) {
      current.r.resize(dim);
      for (int j = 0; j < dim; ++j) current.r(j) = gauss(rng);
      const double h0 = current.hamiltonian();

      detail::NutsTree<Target> tree;
      tree.leftmost = current;
      tree.rightmost = current;
      tree.proposal = current;
      tree.log_weight = 0.0;
      double accept_sum = 0;
      long accept_count = 0;
      for (int depth = 0; depth < config.max_depth; ++depth) {
        const int direction = unif(rng) < 0.5 ? -1 : 1;
        const detail::PhasePoint& edge =
            direction > 0 ? tree.rightmost : tree.leftmost;
        auto sub = detail::build_tree(target, edge, direction, depth,
                                      std::exp(log_step), h0, rng);
        accept_sum += sub.accept_sum;
        accept_count += sub.accept_count;
        if (iter >= config.warmup) out.divergences += sub.divergences;
        if (sub.turning) break;

        // Biased progressive sampling toward the fresh subtree.
        if (std::log(unif(rng)) < sub.log_weight - tree.log_weight)
          tree.proposal = sub.proposal;
        const double mx = std::max(tree.log_weight, sub.log_weight);
        tree.log_weight = mx + std::log(std::exp(tree.log_weight - mx) +
                                        std::exp(sub.log_weight - mx));
        if (direction > 0)
          tree.rightmost = sub.rightmost;
        else
          tree.leftmost = sub.leftmost;
        if (detail::u_turn(tree.leftmost, tree.rightmost)) break;
      }
      current = tree.proposal;
      if (iter >= config.warmup) out.total_transitions += 1;

      const double accept_stat =
          accept_count > 0 ? accept_sum / static_cast<double>(accept_count) : 0.0;
      if (iter < config.warmup) {
        const double m = static_cast<double>(iter + 1);
        h_bar = (1.0 - 1.0 / (m + t0)) * h_bar +
                (config.target_accept - accept_stat) / (m + t0);
        log_step = mu_da - std::sqrt(m) / gamma * h_bar;
        const double eta = std::pow(m, -kappa);
        log_step_avg = eta * log_step + (1.0 - eta) * log_step_avg;
        if (iter == config.warmup - 1) log_step = log_step_avg;
      } else {
        const int kept = iter - config.warmup;
        const Eigen::Index row =
            static_cast<Eigen::Index>(chain) * config.samples + kept;
        out.draws.row(row) = current.z.transpose();
        out.chain_ids[row] = chain;
        for (int j = 0; j < dim; ++j) traces[j][chain](kept) = current.z(j);
      }
    }
  }

  out.r_hat.resize(dim);
  out.ess.resize(dim);
  for (int j = 0; j < dim; ++j) {
    out.r_hat(j) = split_r_hat(traces[j]);
    out.ess(j) = effective_sample_size(traces[j]);
  }
  out.rhat_flagged = (out.r_hat.array() > 1.05).any();
  out.divergence_warning =
      out.divergences > 0.01 * static_cast<double>(out.total_transitions);
  return out;
}

// NUTS over the Laplace-whitened parameterisation theta = mean + L z, then
// mapped back to theta. The whitening supplies the metric, so warmup adapts
// the step size only.
inline PosteriorSamples nuts_sample(const NoiseAwarePosterior& post, const LaplaceApprox& la,
                                    const NutsConfig& config, std::uint64_t rng_seed) {
  const int d = post.dim();
  const Eigen::MatrixXd& l = la.cholesky;
  auto target = [&post, &la, &l](const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
    try {
      const Eigen::VectorXd theta = la.mean + l * z;
      auto [f, g] = post.log_density_grad(theta);
      grad = l.transpose() * g;
      return f;
    } catch (const NumericError&) {
      grad = Eigen::VectorXd::Zero(z.size());
      return -std::numeric_limits<double>::infinity();
    }
  };
  PosteriorSamples s = nuts_run(target, d, config, rng_seed);
  // Map whitened draws back; diagnostics are affine-invariant per coordinate
  // only up to mixing, so recompute them on the theta scale.
  Eigen::MatrixXd theta_draws(s.draws.rows(), d);
  for (Eigen::Index i = 0; i < s.draws.rows(); ++i)
    theta_draws.row(i) = (la.mean + l * s.draws.row(i).transpose()).transpose();
  s.draws = std::move(theta_draws);

  std::vector<std::vector<Eigen::VectorXd>> traces(
      d, std::vector<Eigen::VectorXd>(config.chains, Eigen::VectorXd(config.samples)));
  for (Eigen::Index i = 0; i < s.draws.rows(); ++i) {
    const int chain = s.chain_ids[i];
    const Eigen::Index kept = i - static_cast<Eigen::Index>(chain) * config.samples;
    for (int j = 0; j < d; ++j) traces[j][chain](kept) = s.draws(i, j);
  }
  for (int j = 0; j < d; ++j) {
    s.r_hat(j) = split_r_hat(traces[j]);
    s.ess(j) = effective_sample_size(traces[j]);
  }
  s.rhat_flagged = (s.r_hat.array() > 1.05).any();
  return s;
}

inline void samples_to_csv(const PosteriorSamples& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "chain";
  for (Eigen::Index j = 0; j < s.draws.cols(); ++j) out << ",theta" << j;
  out << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < s.draws.rows(); ++i) {
    out << s.chain_ids[i];
    for (Eigen::Index j = 0; j < s.draws.cols(); ++j) out << "," << s.draws(i, j);
    out << "\n";
  }
}

inline nlohmann::json diagnostics_to_json(const PosteriorSamples& s) {
  nlohmann::json j;
  j["r_hat"] = std::vector<double>(s.r_hat.data(), s.r_hat.data() + s.r_hat.size());
  j["ess"] = std::vector<double>(s.ess.data(), s.ess.data() + s.ess.size());
  j["divergences"] = s.divergences;
  j["total_transitions"] = s.total_transitions;
  j["rhat_flagged"] = s.rhat_flagged;
  j["divergence_warning"] = s.divergence_warning;
  return j;
}

}  // namespace napsumq

#endif  // NAPSUMQ_INFERENCE_HPP
