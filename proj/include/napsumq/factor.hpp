#ifndef NAPSUMQ_FACTOR_HPP
#define NAPSUMQ_FACTOR_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "napsumq/errors.hpp"

namespace napsumq {

inline double logsumexp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

// Table of log-values over a sorted set of discrete variables. The last
// scope variable varies fastest.
struct LogFactor {
  std::vector<int> scope;
  std::vector<int> card;
  Eigen::VectorXd logv;

  static LogFactor zeros(std::vector<int> scope, std::vector<int> card) {
    LogFactor f;
    f.scope = std::move(scope);
    f.card = std::move(card);
    f.logv = Eigen::VectorXd::Zero(f.table_size());
    return f;
  }

  static LogFactor scalar(double value) {
    LogFactor f;
    f.logv = Eigen::VectorXd::Constant(1, value);
    return f;
  }

  Eigen::Index table_size() const {
    Eigen::Index n = 1;
    for (int c : card) n *= c;
    return n;
  }

  int position_of(int var) const {
    for (std::size_t k = 0; k < scope.size(); ++k)
      if (scope[k] == var) return static_cast<int>(k);
    return -1;
  }

  // Strides matching the last-fastest layout.
  std::vector<Eigen::Index> strides() const {
    std::vector<Eigen::Index> s(scope.size());
    Eigen::Index acc = 1;
    for (int k = static_cast<int>(scope.size()) - 1; k >= 0; --k) {
      s[k] = acc;
      acc *= card[k];
    }
    return s;
  }

  Eigen::Index index_of(const std::vector<int>& values) const {
    Eigen::Index idx = 0;
    Eigen::Index stride = 1;
    for (int k = static_cast<int>(scope.size()) - 1; k >= 0; --k) {
      idx += values[k] * stride;
      stride *= card[k];
    }
    return idx;
  }
};

namespace detail {

// Iterate the joint assignments of `scope`, calling fn(values, flat_index).
template <typename Fn>
void for_each_assignment(const std::vector<int>& card, Fn&& fn) {
  const int k = static_cast<int>(card.size());
  std::vector<int> values(k, 0);
  Eigen::Index idx = 0;
  while (true) {
    fn(values, idx);
    ++idx;
    int pos = k - 1;
    while (pos >= 0) {
      if (++values[pos] < card[pos]) break;
      values[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

}  // namespace detail

// Sum (in log space: pointwise add) a factor into a host table whose scope
// contains the factor's scope.
inline void add_into(LogFactor& host, const LogFactor& part) {
  if (part.scope.empty()) {
    host.logv.array() += part.logv(0);
    return;
  }
  std::vector<int> pos(part.scope.size());
  for (std::size_t k = 0; k < part.scope.size(); ++k) {
    const int p = host.position_of(part.scope[k]);
    if (p < 0) throw NumericError("add_into: factor scope not contained in host");
    pos[k] = p;
  }
  const auto part_strides = part.strides();
  detail::for_each_assignment(host.card, [&](const std::vector<int>& values, Eigen::Index idx) {
    Eigen::Index pidx = 0;
    for (std::size_t k = 0; k < part.scope.size(); ++k)
      pidx += values[pos[k]] * part_strides[k];
    host.logv(idx) += part.logv(pidx);
  });
}

// Product (log-space sum) of factors over the union scope.
inline LogFactor multiply_all(const std::vector<const LogFactor*>& factors) {
  std::vector<int> scope;
  std::vector<int> card;
  for (const LogFactor* f : factors)
    for (std::size_t k = 0; k < f->scope.size(); ++k)
      if (std::find(scope.begin(), scope.end(), f->scope[k]) == scope.end()) {
        scope.push_back(f->scope[k]);
        card.push_back(f->card[k]);
      }
  std::vector<std::size_t> order(scope.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scope[a] < scope[b];
  });
  std::vector<int> sscope, scard;
  for (std::size_t i : order) {
    sscope.push_back(scope[i]);
    scard.push_back(card[i]);
  }
  LogFactor out = LogFactor::zeros(std::move(sscope), std::move(scard));
  for (const LogFactor* f : factors) add_into(out, *f);
  return out;
}

// Log-sum-exp a single variable out of the factor.
inline LogFactor marginalize_out(const LogFactor& f, int var) {
  const int p = f.position_of(var);
  if (p < 0) throw NumericError("marginalize_out: variable not in scope");
  std::vector<int> scope, card;
  for (std::size_t k = 0; k < f.scope.size(); ++k)
    if (static_cast<int>(k) != p) {
      scope.push_back(f.scope[k]);
      card.push_back(f.card[k]);
    }
  if (scope.empty()) return LogFactor::scalar(logsumexp(f.logv));

  LogFactor out = LogFactor::zeros(scope, card);
  out.logv.setConstant(-std::numeric_limits<double>::infinity());
  const auto in_strides = f.strides();
  const int vcard = f.card[p];
  Eigen::VectorXd buffer(vcard);
  detail::for_each_assignment(out.card, [&](const std::vector<int>& values, Eigen::Index idx) {
    Eigen::Index base = 0;
    int vi = 0;
    for (std::size_t k = 0; k < f.scope.size(); ++k) {
      if (static_cast<int>(k) == p) continue;
      base += values[vi++] * in_strides[k];
    }
    for (int c = 0; c < vcard; ++c) buffer(c) = f.logv(base + c * in_strides[p]);
    out.logv(idx) = logsumexp(buffer);
  });
  return out;
}

// Slice the factor at fixed values of some of its variables.
inline LogFactor condition(const LogFactor& f, const std::vector<int>& vars,
                           const std::vector<int>& values) {
  std::vector<int> fixed_pos;
  std::vector<int> fixed_val;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const int p = f.position_of(vars[k]);
    if (p >= 0) {
      fixed_pos.push_back(p);
      fixed_val.push_back(values[k]);
    }
  }
  std::vector<int> scope, card;
  for (std::size_t k = 0; k < f.scope.size(); ++k)
    if (std::find(fixed_pos.begin(), fixed_pos.end(), static_cast<int>(k)) == fixed_pos.end()) {
      scope.push_back(f.scope[k]);
      card.push_back(f.card[k]);
    }
  const auto in_strides = f.strides();
  Eigen::Index base = 0;
  for (std::size_t k = 0; k < fixed_pos.size(); ++k)
    base += fixed_val[k] * in_strides[fixed_pos[k]];
  if (scope.empty()) return LogFactor::scalar(f.logv(base));

  LogFactor out = LogFactor::zeros(scope, card);
  std::vector<Eigen::Index> free_strides;
  for (std::size_t k = 0; k < f.scope.size(); ++k)
    if (std::find(fixed_pos.begin(), fixed_pos.end(), static_cast<int>(k)) == fixed_pos.end())
      free_strides.push_back(in_strides[k]);
  detail::for_each_assignment(out.card, [&](const std::vector<int>& vals, Eigen::Index idx) {
    Eigen::Index src = base;
    for (std::size_t k = 0; k < free_strides.size(); ++k) src += vals[k] * free_strides[k];
    out.logv(idx) = f.logv(src);
  });
  return out;
}

}  // namespace napsumq

#endif  // NAPSUMQ_FACTOR_HPP
