#ifndef NAPSUMQ_QUERIES_HPP
#define NAPSUMQ_QUERIES_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/schema.hpp"

namespace napsumq {

// Indicator that a row restricted to `scope` equals `value`.
struct MarginalQuery {
  std::vector<int> scope;  // strictly increasing variable indices
  std::vector<int> value;  // codes, aligned with scope

  bool matches(const Eigen::Ref<const Eigen::RowVectorXi>& row) const {
    for (std::size_t k = 0; k < scope.size(); ++k)
      if (row(scope[k]) != value[k]) return false;
    return true;
  }

  bool operator==(const MarginalQuery& other) const {
    return scope == other.scope && value == other.value;
  }
  bool operator<(const MarginalQuery& other) const {
    if (scope != other.scope) return scope < other.scope;
    return value < other.value;
  }
};

// Ordered concatenation of marginal queries, tracking which scopes entered
// as full sets (that count drives the sensitivity bound).
class QueryCollection {
 public:
  QueryCollection() = default;
  QueryCollection(std::vector<MarginalQuery> queries,
                  std::vector<std::vector<int>> full_set_scopes, bool canonical)
      : queries_(std::move(queries)),
        full_set_scopes_(std::move(full_set_scopes)),
        canonical_(canonical) {
    for (const auto& q : queries_) {
      if (q.scope.empty()) throw ConfigError("query with empty scope");
      if (q.scope.size() != q.value.size())
        throw ConfigError("query scope/value length mismatch");
      if (!std::is_sorted(q.scope.begin(), q.scope.end()) ||
          std::adjacent_find(q.scope.begin(), q.scope.end()) != q.scope.end())
        throw ConfigError("query scope must be strictly increasing");
    }
  }

  int size() const { return static_cast<int>(queries_.size()); }
  const std::vector<MarginalQuery>& queries() const { return queries_; }
  const MarginalQuery& query(int j) const { return queries_.at(j); }
  const std::vector<std::vector<int>>& full_set_scopes() const { return full_set_scopes_; }
  int num_full_sets() const { return static_cast<int>(full_set_scopes_.size()); }
  bool canonical() const { return canonical_; }

  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::RowVectorXi>& row) const {
    Eigen::VectorXd out(size());
    for (int j = 0; j < size(); ++j) out(j) = queries_[j].matches(row) ? 1.0 : 0.0;
    return out;
  }

  // a(X) = sum over rows; component j counts rows matching query j.
  Eigen::VectorXd evaluate_dataset(const Dataset& ds) const {
    if (!(ds.schema().num_variables() > max_variable_index()))
      throw ConfigError("dataset schema too small for query scopes");
    Eigen::VectorXd s = Eigen::VectorXd::Zero(size());
    const auto& codes = ds.codes();
    for (Eigen::Index i = 0; i < codes.rows(); ++i)
      for (int j = 0; j < size(); ++j)
        if (queries_[j].matches(codes.row(i))) s(j) += 1.0;
    return s;
  }

  // Thm-1 bound sqrt(2 n_s); after canonical pruning the released queries are
  // sums within the original full sets, so the pre-canonical bound still holds.
  double sensitivity() const {
    if (full_set_scopes_.empty())
      throw ConfigError("sensitivity requires a collection built from full sets");
    return std::sqrt(2.0 * num_full_sets());
  }

  int max_variable_index() const {
    int mx = -1;
    for (const auto& q : queries_)
      for (int v : q.scope) mx = std::max(mx, v);
    return mx;
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) {
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    };
    mix(canonical_ ? 1 : 0);
    mix(queries_.size());
    for (const auto& q : queries_) {
      mix(q.scope.size());
      for (std::size_t k = 0; k < q.scope.size(); ++k) {
        mix(static_cast<std::uint64_t>(q.scope[k]));
        mix(static_cast<std::uint64_t>(q.value[k]) + 0x9e37);
      }
    }
    mix(full_set_scopes_.size());
    for (const auto& s : full_set_scopes_) {
      mix(s.size());
      for (int v : s) mix(static_cast<std::uint64_t>(v));
    }
    return h;
  }

 private:
  std::vector<MarginalQuery> queries_;
  std::vector<std::vector<int>> full_set_scopes_;
  bool canonical_ = false;
};

// One query per joint value of the scoped variables, lexicographic by codes.
inline QueryCollection full_marginal_set(const Schema& schema, std::vector<int> scope) {
  if (scope.empty()) throw ConfigError("full_marginal_set: empty scope");
  std::sort(scope.begin(), scope.end());
  if (std::adjacent_find(scope.begin(), scope.end()) != scope.end())
    throw ConfigError("full_marginal_set: repeated variable in scope");
  for (int v : scope)
    if (v < 0 || v >= schema.num_variables())
      throw ConfigError("full_marginal_set: variable index out of range");

  std::vector<MarginalQuery> queries;
  std::vector<int> value(scope.size(), 0);
  const int k = static_cast<int>(scope.size());
  while (true) {
    queries.push_back({scope, value});
    int pos = k - 1;
    while (pos >= 0) {
      if (++value[pos] < schema.cardinality(scope[pos])) break;
      value[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return QueryCollection(std::move(queries), {scope}, false);
}

inline QueryCollection concatenate(const std::vector<QueryCollection>& parts) {
  std::vector<MarginalQuery> queries;
  std::vector<std::vector<int>> scopes;
  for (const auto& part : parts) {
    if (part.canonical())
      throw ConfigError("cannot concatenate canonicalised collections");
    queries.insert(queries.end(), part.queries().begin(), part.queries().end());
    scopes.insert(scopes.end(), part.full_set_scopes().begin(),
                  part.full_set_scopes().end());
  }
  return QueryCollection(std::move(queries), std::move(scopes), false);
}

inline QueryCollection full_sets_for_scopes(const Schema& schema,
                                            const std::vector<std::vector<int>>& scopes) {
  std::vector<QueryCollection> parts;
  parts.reserve(scopes.size());
  for (const auto& s : scopes) parts.push_back(full_marginal_set(schema, s));
  return concatenate(parts);
}

// Canonical pruning at reference assignment x* = (0,...,0).
//
// For every scope D in the downward closure of the input scopes, the
// canonical factor is structurally non-one exactly at the assignments whose
// scoped values are all off the reference. Each such (D, v) is re-expressed
// as the original-scope queries on the first full set covering D that
// restrict to v on D; queries already emitted are collapsed. The result is a
// subset of the original full-set queries, so one changed row still moves at
// most two components per full set and the Thm-1 bound carries over. If a
// canonical parameter contributed no fresh query, identifiability would need
// tied parameters; that never occurs for the settings in scope and we refuse
// rather than invent semantics for it.
inline QueryCollection canonicalize(const QueryCollection& qc, const Schema& schema) {
  if (qc.canonical()) {
    return qc;  // idempotent
  }
  if (qc.num_full_sets() == 0)
    throw ConfigError("canonicalize requires a concatenation of full sets");

  // Downward closure of the full-set scopes, excluding the empty set.
  // Larger scopes first so subset-scope replacements land on fresh queries.
  std::set<std::vector<int>> closure;
  for (const auto& scope : qc.full_set_scopes()) {
    const int k = static_cast<int>(scope.size());
    for (unsigned mask = 1; mask < (1u << k); ++mask) {
      std::vector<int> sub;
      for (int b = 0; b < k; ++b)
        if (mask & (1u << b)) sub.push_back(scope[b]);
      closure.insert(std::move(sub));
    }
  }
  std::vector<std::vector<int>> ordered(closure.begin(), closure.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const std::vector<int>& a, const std::vector<int>& b) {
                     return a.size() > b.size();
                   });

  std::vector<MarginalQuery> queries;
  std::set<MarginalQuery> seen;
  for (const auto& scope : ordered) {
    // First input full set covering this scope.
    const std::vector<int>* host = nullptr;
    for (const auto& fs : qc.full_set_scopes())
      if (std::includes(fs.begin(), fs.end(), scope.begin(), scope.end())) {
        host = &fs;
        break;
      }
    if (!host) throw ConfigError("canonicalize: closure scope not covered by a full set");

    // Non-reference assignments of `scope`, lexicographically.
    const int k = static_cast<int>(scope.size());
    std::vector<int> value(k, 1);
    while (true) {
      // Replacement: all completions of (scope, value) to the host scope.
      std::vector<int> free_vars;
      for (int v : *host)
        if (!std::binary_search(scope.begin(), scope.end(), v)) free_vars.push_back(v);
      std::vector<int> free_val(free_vars.size(), 0);
      int added = 0;
      while (true) {
        MarginalQuery q;
        q.scope = *host;
        q.value.resize(host->size());
        for (std::size_t i = 0; i < host->size(); ++i) {
          const int var = (*host)[i];
          const auto sit = std::lower_bound(scope.begin(), scope.end(), var);
          if (sit != scope.end() && *sit == var) {
            q.value[i] = value[sit - scope.begin()];
          } else {
            const auto fit = std::lower_bound(free_vars.begin(), free_vars.end(), var);
            q.value[i] = free_val[fit - free_vars.begin()];
          }
        }
        if (seen.insert(q).second) {
          queries.push_back(std::move(q));
          ++added;
        }
        int pos = static_cast<int>(free_vars.size()) - 1;
        while (pos >= 0) {
          if (++free_val[pos] < schema.cardinality(free_vars[pos])) break;
          free_val[pos] = 0;
          --pos;
        }
        if (pos < 0) break;
      }
      if (added == 0)
        throw ConfigError(
            "canonicalize: canonical parameter fully collapsed; parameter tying required");

      int pos = k - 1;
      while (pos >= 0) {
        if (++value[pos] < schema.cardinality(scope[pos])) break;
        value[pos] = 1;
        --pos;
      }
      if (pos < 0) break;
    }
  }
  return QueryCollection(std::move(queries), qc.full_set_scopes(), true);
}

// Query-spec file: JSON list of scopes given as variable-name lists.
inline std::vector<std::vector<int>> scopes_from_json(const nlohmann::json& j,
                                                      const Schema& schema) {
  if (!j.is_array()) throw ConfigError("query spec must be a list of scopes");
  std::vector<std::vector<int>> scopes;
  for (const auto& entry : j) {
    std::vector<int> scope;
    for (const auto& name : entry) scope.push_back(schema.index_of(name.get<std::string>()));
    std::sort(scope.begin(), scope.end());
    scopes.push_back(std::move(scope));
  }
  return scopes;
}

inline nlohmann::json scopes_to_json(const std::vector<std::vector<int>>& scopes,
                                     const Schema& schema) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& scope : scopes) {
    nlohmann::json names = nlohmann::json::array();
    for (int v : scope) names.push_back(schema.variable(v).name);
    out.push_back(names);
  }
  return out;
}

}  // namespace napsumq

#endif  // NAPSUMQ_QUERIES_HPP
