#ifndef NAPSUMQ_MED_MODEL_HPP
#define NAPSUMQ_MED_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/factor.hpp"
#include "napsumq/junction_tree.hpp"
#include "napsumq/privacy.hpp"
#include "napsumq/queries.hpp"
#include "napsumq/rng.hpp"
#include "napsumq/schema.hpp"

namespace napsumq {

enum class Backend { enumeration, junction_tree };

struct MomentPair {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// Log-linear maximum-entropy distribution P(x) = exp(theta . a(x) - theta0).
struct MEDModel {
  Schema schema;
  QueryCollection queries;
  Eigen::VectorXd theta;
  Backend backend = Backend::enumeration;
  long enumeration_cap = 1'000'000;
  int width_limit = 12;
};

namespace detail {

inline std::vector<int> cards_of(const Schema& schema) {
  std::vector<int> cards(schema.num_variables());
  for (int j = 0; j < schema.num_variables(); ++j) cards[j] = schema.cardinality(j);
  return cards;
}

inline long checked_domain_size(const Schema& schema, long cap) {
  const auto size = schema.domain_size();
  if (!size || *size > static_cast<std::uint64_t>(cap))
    throw ConfigError("domain too large for enumeration (cap " + std::to_string(cap) + ")");
  return static_cast<long>(*size);
}

// Dense 0/1 feature matrix over the full enumerated domain, one row per
// domain cell in mixed-radix order (last variable fastest).
inline Eigen::MatrixXd feature_matrix(const Schema& schema, const QueryCollection& qc,
                                      long cap) {
  const long cells = checked_domain_size(schema, cap);
  const int d = schema.num_variables();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(cells, qc.size());
  Eigen::RowVectorXi row = Eigen::RowVectorXi::Zero(d);
  for (long idx = 0; idx < cells; ++idx) {
    for (int j = 0; j < qc.size(); ++j)
      if (qc.query(j).matches(row)) A(idx, j) = 1.0;
    int pos = d - 1;
    while (pos >= 0) {
      if (++row(pos) < schema.cardinality(pos)) break;
      row(pos) = 0;
      --pos;
    }
  }
  return A;
}

inline Eigen::RowVectorXi decode_cell(const Schema& schema, long idx) {
  const int d = schema.num_variables();
  Eigen::RowVectorXi row(d);
  for (int j = d - 1; j >= 0; --j) {
    row(j) = static_cast<int>(idx % schema.cardinality(j));
    idx /= schema.cardinality(j);
  }
  return row;
}

// Group queries by scope into log-factors with entries theta_j at matching
// cells; this is the Markov-network form of the model.
inline std::vector<LogFactor> model_factors(const Schema& schema, const QueryCollection& qc,
                                            const Eigen::VectorXd& theta) {
  std::map<std::vector<int>, LogFactor> by_scope;
  for (int j = 0; j < qc.size(); ++j) {
    const MarginalQuery& q = qc.query(j);
    auto it = by_scope.find(q.scope);
    if (it == by_scope.end()) {
      std::vector<int> card;
      for (int v : q.scope) card.push_back(schema.cardinality(v));
      it = by_scope.emplace(q.scope, LogFactor::zeros(q.scope, card)).first;
    }
    it->second.logv(it->second.index_of(q.value)) += theta(j);
  }
  std::vector<LogFactor> out;
  out.reserve(by_scope.size());
  for (auto& [scope, f] : by_scope) out.push_back(std::move(f));
  return out;
}

// Cell probabilities under the enumeration backend, plus the log-partition.
inline std::pair<Eigen::VectorXd, double> cell_probabilities(const MEDModel& m) {
  const Eigen::MatrixXd A =
      feature_matrix(m.schema, m.queries, m.enumeration_cap);
  const Eigen::VectorXd logits = A * m.theta;
  const double logz = logsumexp(logits);
  return {(logits.array() - logz).exp(), logz};
}

}  // namespace detail

inline double log_partition(const MEDModel& m) {
  if (m.theta.size() != m.queries.size())
    throw ConfigError("theta length does not match query count");
  if (m.backend == Backend::enumeration) {
    const Eigen::MatrixXd A =
        detail::feature_matrix(m.schema, m.queries, m.enumeration_cap);
    return logsumexp(A * m.theta);
  }
  JunctionTree jt(detail::model_factors(m.schema, m.queries, m.theta),
                  detail::cards_of(m.schema), m.width_limit);
  return jt.log_partition();
}

// Normalised probability table over an arbitrary variable scope.
inline LogFactor log_marginal(const MEDModel& m, std::vector<int> scope) {
  std::sort(scope.begin(), scope.end());
  if (m.backend == Backend::enumeration) {
    // Brute-force domain summation; deliberately independent of the
    // variable-elimination path so the two can cross-check each other.
    const long cells = detail::checked_domain_size(m.schema, m.enumeration_cap);
    std::vector<int> card;
    for (int v : scope) card.push_back(m.schema.cardinality(v));
    LogFactor out = LogFactor::zeros(scope, card);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(out.table_size());
    const auto [p, logz] = detail::cell_probabilities(m);
    for (long idx = 0; idx < cells; ++idx) {
      const Eigen::RowVectorXi row = detail::decode_cell(m.schema, idx);
      std::vector<int> values;
      values.reserve(scope.size());
      for (int v : scope) values.push_back(row(v));
      acc(out.index_of(values)) += p(idx);
    }
    out.logv = acc.array().max(1e-300).log();
    return out;
  }
  const auto factors = detail::model_factors(m.schema, m.queries, m.theta);
  const auto cards = detail::cards_of(m.schema);
  VEResult r = variable_eliminate(factors, std::move(scope), cards, m.width_limit);
  VEResult z = variable_eliminate(factors, {}, cards, m.width_limit);
  r.factor.logv.array() -= z.factor.logv(0);
  return r.factor;
}

inline int report_induced_width(const MEDModel& m) {
  JunctionTree jt(detail::model_factors(m.schema, m.queries, m.theta),
                  detail::cards_of(m.schema), m.width_limit);
  return jt.induced_width();
}

inline MomentPair moments(const MEDModel& m) {
  if (m.theta.size() != m.queries.size())
    throw ConfigError("theta length does not match query count");
  const int nq = m.queries.size();
  MomentPair out;
  if (m.backend == Backend::enumeration) {
    const Eigen::MatrixXd A =
        detail::feature_matrix(m.schema, m.queries, m.enumeration_cap);
    const auto [p, logz] = detail::cell_probabilities(m);
    out.mu = A.transpose() * p;
    Eigen::MatrixXd second = A.transpose() * p.asDiagonal() * A;
    out.sigma = second - out.mu * out.mu.transpose();
  } else {
    const auto factors = detail::model_factors(m.schema, m.queries, m.theta);
    const auto cards = detail::cards_of(m.schema);
    const double logz =
        variable_eliminate(factors, {}, cards, m.width_limit).factor.logv(0);

    // Joint marginals per merged scope pair; cached since many query pairs
    // share the same scope union.
    std::map<std::vector<int>, LogFactor> cache;
    auto marginal_table = [&](const std::vector<int>& scope) -> const LogFactor& {
      auto it = cache.find(scope);
      if (it == cache.end()) {
        VEResult r = variable_eliminate(factors, scope, cards, m.width_limit);
        r.factor.logv.array() -= logz;
        it = cache.emplace(scope, std::move(r.factor)).first;
      }
      return it->second;
    };

    out.mu.resize(nq);
    for (int j = 0; j < nq; ++j) {
      const MarginalQuery& q = m.queries.query(j);
      const LogFactor& t = marginal_table(q.scope);
      out.mu(j) = std::exp(t.logv(t.index_of(q.value)));
    }
    out.sigma.resize(nq, nq);
    for (int j = 0; j < nq; ++j) {
      for (int k = j; k < nq; ++k) {
        double e_jk;
        if (j == k) {
          e_jk = out.mu(j);
        } else {
          const MarginalQuery& qj = m.queries.query(j);
          const MarginalQuery& qk = m.queries.query(k);
          // Indicator product: zero when the queries disagree on a shared
          // variable, otherwise the joint marginal of the merged assignment.
          std::vector<int> merged_scope;
          std::vector<int> merged_value;
          bool consistent = true;
          std::size_t a = 0, b = 0;
          while (a < qj.scope.size() || b < qk.scope.size()) {
            if (b == qk.scope.size() ||
                (a < qj.scope.size() && qj.scope[a] < qk.scope[b])) {
              merged_scope.push_back(qj.scope[a]);
              merged_value.push_back(qj.value[a]);
              ++a;
            } else if (a == qj.scope.size() || qk.scope[b] < qj.scope[a]) {
              merged_scope.push_back(qk.scope[b]);
              merged_value.push_back(qk.value[b]);
              ++b;
            } else {
              if (qj.value[a] != qk.value[b]) consistent = false;
              merged_scope.push_back(qj.scope[a]);
              merged_value.push_back(qj.value[a]);
              ++a;
              ++b;
            }
          }
          if (!consistent) {
            e_jk = 0.0;
          } else {
            const LogFactor& t = marginal_table(merged_scope);
            e_jk = std::exp(t.logv(t.index_of(merged_value)));
          }
        }
        const double cov = e_jk - out.mu(j) * out.mu(k);
        out.sigma(j, k) = cov;
        out.sigma(k, j) = cov;
      }
    }
  }
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  return out;
}

inline Dataset sample(const MEDModel& m, long n_rows, std::uint64_t rng_seed) {
  if (n_rows == 0) return Dataset::empty(m.schema);
  if (n_rows < 0) throw ConfigError("sample: negative row count");
  auto rng = make_rng(rng_seed, {0x73616d70u});
  const int d = m.schema.num_variables();
  Eigen::MatrixXi codes(n_rows, d);

  if (m.backend == Backend::enumeration) {
    const auto [p, logz] = detail::cell_probabilities(m);
    Eigen::VectorXd cdf(p.size());
    double acc = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p(i);
      cdf(i) = acc;
    }
    cdf(p.size() - 1) = 1.0;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (long i = 0; i < n_rows; ++i) {
      const double u = unif(rng);
      Eigen::Index lo = 0, hi = cdf.size() - 1;
      while (lo < hi) {
        const Eigen::Index mid = (lo + hi) / 2;
        if (cdf(mid) < u)
          lo = mid + 1;
        else
          hi = mid;
      }
      codes.row(i) = detail::decode_cell(m.schema, lo);
    }
  } else {
    JunctionTree jt(detail::model_factors(m.schema, m.queries, m.theta),
                    detail::cards_of(m.schema), m.width_limit);
    std::vector<int> row(d, 0);
    for (long i = 0; i < n_rows; ++i) {
      jt.sample_row(rng, row);
      for (int j = 0; j < d; ++j) codes(i, j) = row[j];
    }
  }
  return Dataset(m.schema, std::move(codes));
}

// Moment-matching baseline: minimise ||s_tilde/n - mu(theta)||^2 by gradient
// descent with Armijo backtracking. This ignores the DP noise model, which is
// exactly the behaviour the ablations measure.
inline MEDModel fit_pgm_mle(const NoisyRelease& release, const QueryCollection& queries,
                            const Schema& schema, long n,
                            Backend backend = Backend::enumeration) {
  if (release.query_fingerprint != queries.fingerprint())
    throw ConfigError("fit_pgm_mle: release fingerprint does not match query collection");
  if (n < 1) throw ConfigError("fit_pgm_mle: n must be positive");

  MEDModel m;
  m.schema = schema;
  m.queries = queries;
  m.backend = backend;
  m.theta = Eigen::VectorXd::Zero(queries.size());

  const double nd = static_cast<double>(n);
  auto objective = [&](const Eigen::VectorXd& theta, MomentPair* mp) {
    MEDModel probe = m;
    probe.theta = theta;
    MomentPair mm = moments(probe);
    const double f = (release.s_tilde - nd * mm.mu).squaredNorm();
    if (mp) *mp = std::move(mm);
    return f;
  };

  MomentPair mp;
  double f = objective(m.theta, &mp);
  double step = 1.0 / (nd * nd);
  for (int it = 0; it < 5000; ++it) {
    const Eigen::VectorXd grad = -2.0 * nd * mp.sigma * (release.s_tilde - nd * mp.mu);
    const double g2 = grad.squaredNorm();
    if (g2 < 1e-18) break;

    double trial_step = std::min(step * 2.0, 1e3);
    double f_new = 0;
    Eigen::VectorXd theta_new;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      theta_new = m.theta - trial_step * grad;
      f_new = objective(theta_new, nullptr);
      if (!std::isfinite(f_new))
        throw NumericError("fit_pgm_mle: non-finite objective (diverged step)");
      if (f_new <= f - 1e-4 * trial_step * g2) {
        accepted = true;
        break;
      }
      trial_step *= 0.5;
    }
    if (!accepted) break;
    const double improvement = f - f_new;
    m.theta = theta_new;
    f = objective(m.theta, &mp);
    step = trial_step;
    if (improvement < 1e-8) break;
  }
  return m;
}

inline nlohmann::json model_to_json(const MEDModel& m) {
  nlohmann::json j;
  j["schema_digest"] = std::to_string(m.schema.digest());
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& q : m.queries.queries())
    qs.push_back({{"scope", q.scope}, {"value", q.value}});
  j["queries"] = qs;
  j["full_set_scopes"] = m.queries.full_set_scopes();
  j["canonical"] = m.queries.canonical();
  j["theta"] = std::vector<double>(m.theta.data(), m.theta.data() + m.theta.size());
  j["backend"] = m.backend == Backend::enumeration ? "enumeration" : "junction_tree";
  return j;
}

}  // namespace napsumq

#endif  // NAPSUMQ_MED_MODEL_HPP
