#ifndef NAPSUMQ_JUNCTION_TREE_HPP
#define NAPSUMQ_JUNCTION_TREE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "napsumq/errors.hpp"
#include "napsumq/factor.hpp"

namespace napsumq {

namespace detail {

// Min-fill choice among `candidates` given the current adjacency structure.
// Deterministic tie-break by variable index.
inline int min_fill_variable(const std::vector<std::set<int>>& adj,
                             const std::set<int>& candidates) {
  int best = -1;
  long best_fill = -1;
  for (int v : candidates) {
    std::vector<int> nbrs(adj[v].begin(), adj[v].end());
    long fill = 0;
    for (std::size_t a = 0; a < nbrs.size(); ++a)
      for (std::size_t b = a + 1; b < nbrs.size(); ++b)
        if (!adj[nbrs[a]].count(nbrs[b])) ++fill;
    if (best < 0 || fill < best_fill) {
      best = v;
      best_fill = fill;
    }
  }
  return best;
}

inline void connect_clique(std::vector<std::set<int>>& adj, const std::vector<int>& vars) {
  for (std::size_t a = 0; a < vars.size(); ++a)
    for (std::size_t b = a + 1; b < vars.size(); ++b) {
      adj[vars[a]].insert(vars[b]);
      adj[vars[b]].insert(vars[a]);
    }
}

}  // namespace detail

struct VEResult {
  LogFactor factor;
  int induced_width = 0;
};

// Sum-product variable elimination: eliminates every variable outside `keep`
// using the min-fill order, returning the unnormalised log-marginal table
// over exactly the `keep` scope (sorted). `card_by_var` gives cardinalities
// for all variables in play.
inline VEResult variable_eliminate(std::vector<LogFactor> factors, std::vector<int> keep,
                                   const std::vector<int>& card_by_var,
                                   int width_limit = 16) {
  std::sort(keep.begin(), keep.end());
  std::set<int> vars;
  for (const auto& f : factors)
    for (int v : f.scope) vars.insert(v);
  for (int v : keep) vars.insert(v);

  const int max_var = vars.empty() ? -1 : *vars.rbegin();
  std::vector<std::set<int>> adj(max_var + 1);
  for (const auto& f : factors) detail::connect_clique(adj, f.scope);

  // Keep variables not covered by any factor enter as unit singletons.
  for (int v : keep) {
    bool covered = false;
    for (const auto& f : factors)
      if (f.position_of(v) >= 0) covered = true;
    if (!covered)
      factors.push_back(LogFactor::zeros({v}, {card_by_var[v]}));
  }

  std::set<int> to_eliminate;
  for (int v : vars)
    if (!std::binary_search(keep.begin(), keep.end(), v)) to_eliminate.insert(v);

  int width = 0;
  double logz_offset = 0;  // accumulates fully-summed-out scalar factors
  while (!to_eliminate.empty()) {
    const int v = detail::min_fill_variable(adj, to_eliminate);
    std::vector<LogFactor> bucket;
    std::vector<LogFactor> rest;
    for (auto& f : factors) {
      if (f.position_of(v) >= 0)
        bucket.push_back(std::move(f));
      else
        rest.push_back(std::move(f));
    }
    std::vector<const LogFactor*> ptrs;
    for (const auto& f : bucket) ptrs.push_back(&f);
    LogFactor product = multiply_all(ptrs);
    width = std::max(width, static_cast<int>(product.scope.size()) - 1);
    if (width > width_limit)
      throw NumericError("variable elimination induced width " + std::to_string(width) +
                         " exceeds limit " + std::to_string(width_limit));
    LogFactor summed = marginalize_out(product, v);
    if (summed.scope.empty())
      logz_offset += summed.logv(0);
    else
      rest.push_back(std::move(summed));
    factors = std::move(rest);

    detail::connect_clique(adj, product.scope);
    for (int u : product.scope)
      if (u != v) adj[u].erase(v);
    adj[v].clear();
    to_eliminate.erase(v);
  }

  std::vector<const LogFactor*> ptrs;
  for (const auto& f : factors) ptrs.push_back(&f);
  LogFactor out = ptrs.empty() ? LogFactor::scalar(0.0) : multiply_all(ptrs);
  out.logv.array() += logz_offset;
  width = std::max(width, static_cast<int>(out.scope.size()) - 1);

  // Expand to the full keep scope when some keep variables stayed detached.
  if (out.scope != keep) {
    std::vector<int> missing, mcard;
    for (int v : keep)
      if (out.position_of(v) < 0) {
        missing.push_back(v);
        mcard.push_back(card_by_var[v]);
      }
    std::vector<LogFactor> parts;
    parts.push_back(std::move(out));
    if (!missing.empty()) parts.push_back(LogFactor::zeros(missing, mcard));
    std::vector<const LogFactor*> p2;
    for (const auto& f : parts) p2.push_back(&f);
    out = multiply_all(p2);
  }
  VEResult r;
  r.factor = std::move(out);
  r.induced_width = width;
  return r;
}

// Calibrated clique tree over the model's factors, used for the normalising
// constant and forward sampling. Built once per parameter vector.
class JunctionTree {
 public:
  struct Clique {
    std::vector<int> vars;  // sorted
    int parent = -1;
    std::vector<int> children;
    std::vector<int> sep_vars;   // intersection with parent
    std::vector<int> rest_vars;  // vars minus sep
    LogFactor table;             // potential + messages from children
    // Sampling cache: conditional CDF of rest given separator assignment.
    Eigen::MatrixXd cond_cdf;
    std::vector<Eigen::Index> sep_stride_in_assign;   // per sep var, mixed-radix stride
    std::vector<int> rest_card;
  };

  JunctionTree(const std::vector<LogFactor>& model_factors,
               const std::vector<int>& card_by_var, int width_limit = 16) {
    const int d = static_cast<int>(card_by_var.size());
    std::vector<std::set<int>> adj(d);
    for (const auto& f : model_factors) detail::connect_clique(adj, f.scope);

    // Triangulate by min-fill, collecting elimination cliques.
    std::set<int> remaining;
    for (int v = 0; v < d; ++v) remaining.insert(v);
    std::vector<std::vector<int>> elim_cliques;
    while (!remaining.empty()) {
      const int v = detail::min_fill_variable(adj, remaining);
      std::vector<int> clique{v};
      for (int u : adj[v])
        if (remaining.count(u)) clique.push_back(u);
      std::sort(clique.begin(), clique.end());
      detail::connect_clique(adj, clique);
      for (int u : adj[v]) adj[u].erase(v);
      adj[v].clear();
      remaining.erase(v);
      elim_cliques.push_back(std::move(clique));
    }

    // Drop cliques subsumed by another.
    std::vector<std::vector<int>> maximal;
    for (std::size_t i = 0; i < elim_cliques.size(); ++i) {
      const auto& c = elim_cliques[i];
      bool subsumed = false;
      for (std::size_t j = 0; j < elim_cliques.size() && !subsumed; ++j) {
        if (j == i) continue;
        const auto& o = elim_cliques[j];
        if (o.size() > c.size() && std::includes(o.begin(), o.end(), c.begin(), c.end()))
          subsumed = true;
        if (o == c && j < i) subsumed = true;
      }
      if (!subsumed) maximal.push_back(c);
    }

    induced_width_ = 0;
    for (const auto& c : maximal)
      induced_width_ = std::max(induced_width_, static_cast<int>(c.size()) - 1);
    if (induced_width_ > width_limit)
      throw NumericError("junction tree induced width " + std::to_string(induced_width_) +
                         " exceeds limit " + std::to_string(width_limit));

    // Maximum-intersection spanning forest (Prim, deterministic order).
    const int k = static_cast<int>(maximal.size());
    cliques_.resize(k);
    for (int i = 0; i < k; ++i) cliques_[i].vars = maximal[i];
    std::vector<bool> in_tree(k, false);
    for (int start = 0; start < k; ++start) {
      if (in_tree[start]) continue;
      in_tree[start] = true;
      roots_.push_back(start);
      order_.push_back(start);
      while (true) {
        int best_child = -1, best_parent = -1;
        long best_w = -1;
        for (int i = 0; i < k; ++i) {
          if (in_tree[i]) continue;
          for (int j = 0; j < k; ++j) {
            if (!in_tree[j]) continue;
            std::vector<int> inter;
            std::set_intersection(maximal[i].begin(), maximal[i].end(), maximal[j].begin(),
                                  maximal[j].end(), std::back_inserter(inter));
            const long w = static_cast<long>(inter.size());
            if (w > best_w) {
              best_w = w;
              best_child = i;
              best_parent = j;
            }
          }
        }
        if (best_child < 0 || best_w == 0) break;
        in_tree[best_child] = true;
        cliques_[best_child].parent = best_parent;
        cliques_[best_parent].children.push_back(best_child);
        order_.push_back(best_child);
      }
    }

    // Separators and rest sets.
    for (auto& c : cliques_) {
      if (c.parent >= 0)
        std::set_intersection(c.vars.begin(), c.vars.end(), cliques_[c.parent].vars.begin(),
                              cliques_[c.parent].vars.end(), std::back_inserter(c.sep_vars));
      std::set_difference(c.vars.begin(), c.vars.end(), c.sep_vars.begin(), c.sep_vars.end(),
                          std::back_inserter(c.rest_vars));
      std::vector<int> card;
      for (int v : c.vars) card.push_back(card_by_var[v]);
      c.table = LogFactor::zeros(c.vars, card);
      for (int v : c.rest_vars) c.rest_card.push_back(card_by_var[v]);
    }

    // Assign each factor to the first clique containing its scope.
    for (const auto& f : model_factors) {
      bool placed = false;
      for (int i : order_) {
        auto& c = cliques_[i];
        if (std::includes(c.vars.begin(), c.vars.end(), f.scope.begin(), f.scope.end())) {
          add_into(c.table, f);
          placed = true;
          break;
        }
      }
      if (!placed) throw NumericError("junction tree: factor scope not covered by any clique");
    }

    // Upward pass: leaves to roots.
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      auto& c = cliques_[*it];
      if (c.parent < 0) continue;
      LogFactor msg = c.table;
      for (int v : c.rest_vars) msg = marginalize_out(msg, v);
      add_into(cliques_[c.parent].table, msg);
    }

    log_partition_ = 0;
    for (int r : roots_) log_partition_ += logsumexp(cliques_[r].table.logv);

    build_sampling_cache(card_by_var);
  }

  double log_partition() const { return log_partition_; }
  int induced_width() const { return induced_width_; }

  // One joint sample; `out` must have size >= number of variables.
  template <typename Rng>
  void sample_row(Rng& rng, std::vector<int>& out) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i : order_) {
      const Clique& c = cliques_[i];
      Eigen::Index sep_idx = 0;
      for (std::size_t k = 0; k < c.sep_vars.size(); ++k)
        sep_idx += out[c.sep_vars[k]] * c.sep_stride_in_assign[k];
      const auto row = c.cond_cdf.row(sep_idx);
      const double u = unif(rng);
      Eigen::Index lo = 0, hi = row.size() - 1;
      while (lo < hi) {
        const Eigen::Index mid = (lo + hi) / 2;
        if (row(mid) < u)
          lo = mid + 1;
        else
          hi = mid;
      }
      Eigen::Index rest_idx = lo;
      for (int k = static_cast<int>(c.rest_vars.size()) - 1; k >= 0; --k) {
        out[c.rest_vars[k]] = static_cast<int>(rest_idx % c.rest_card[k]);
        rest_idx /= c.rest_card[k];
      }
    }
  }

 private:
  void build_sampling_cache(const std::vector<int>& card_by_var) {
    for (auto& c : cliques_) {
      Eigen::Index n_sep = 1, n_rest = 1;
      for (int v : c.sep_vars) n_sep *= card_by_var[v];
      for (std::size_t k = 0; k < c.rest_vars.size(); ++k) n_rest *= c.rest_card[k];

      c.sep_stride_in_assign.assign(c.sep_vars.size(), 1);
      for (int k = static_cast<int>(c.sep_vars.size()) - 2; k >= 0; --k)
        c.sep_stride_in_assign[k] =
            c.sep_stride_in_assign[k + 1] * card_by_var[c.sep_vars[k + 1]];

      // Split the clique table into (sep assignment, rest assignment) cells.
      Eigen::MatrixXd logp(n_sep, n_rest);
      const auto strides = c.table.strides();
      std::vector<Eigen::Index> sep_pos, rest_pos;
      for (int v : c.sep_vars) sep_pos.push_back(c.table.position_of(v));
      for (int v : c.rest_vars) rest_pos.push_back(c.table.position_of(v));
      detail::for_each_assignment(c.table.card, [&](const std::vector<int>& values,
                                                    Eigen::Index idx) {
        Eigen::Index si = 0;
        for (std::size_t k = 0; k < sep_pos.size(); ++k)
          si += values[sep_pos[k]] * c.sep_stride_in_assign[k];
        Eigen::Index ri = 0;
        for (std::size_t k = 0; k < rest_pos.size(); ++k) {
          ri = ri * c.rest_card[k];
          ri += values[rest_pos[k]];
        }
        logp(si, ri) = c.table.logv(idx);
      });

      c.cond_cdf.resize(n_sep, n_rest);
      for (Eigen::Index s = 0; s < n_sep; ++s) {
        const double mx = logp.row(s).maxCoeff();
        Eigen::VectorXd p = (logp.row(s).array() - mx).exp();
        const double total = p.sum();
        double acc = 0;
        for (Eigen::Index r = 0; r < n_rest; ++r) {
          acc += p(r) / total;
          c.cond_cdf(s, r) = acc;
        }
        c.cond_cdf(s, n_rest - 1) = 1.0;
      }
    }
  }

  std::vector<Clique> cliques_;
  std::vector<int> order_;  // root-first traversal
  std::vector<int> roots_;
  double log_partition_ = 0;
  int induced_width_ = 0;
};

}  // namespace napsumq

#endif  // NAPSUMQ_JUNCTION_TREE_HPP
