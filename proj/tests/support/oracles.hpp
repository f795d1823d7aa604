#pragma once

// Independent reference implementations used by the tests. Nothing here
// calls into the path or tie code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <vector>

#include "gravity/graph.hpp"

namespace oracle {

using Adjacency = std::vector<std::vector<std::pair<std::size_t, double>>>;

inline Adjacency adjacency(const gravity::Graph& g) {
  Adjacency adj(g.size());
  for (std::size_t v = 0; v < g.size(); ++v)
    for (const auto& nb : g.neighbors(v)) adj[v].emplace_back(nb.vertex, nb.weight);
  return adj;
}

/// Plain BFS hop distances; -1 when unreachable.
inline std::vector<int> bfs(const Adjacency& adj, std::size_t src) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<std::size_t> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto [v, w] : adj[u]) {
      (void)w;
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

inline double wdeg(const Adjacency& adj, std::size_t v) {
  double s = 0.0;
  for (auto [u, w] : adj[v]) {
    (void)u;
    s += w;
  }
  return s;
}

/// Enumerates every simple path from i to j with at most `max_hops` edges
/// and returns the shortest one, breaking hop ties by lexicographic order.
inline std::optional<std::vector<std::size_t>> best_path(const Adjacency& adj, std::size_t i,
                                                         std::size_t j, int max_hops) {
  std::optional<std::vector<std::size_t>> best;
  std::vector<std::size_t> cur{i};
  std::vector<bool> on(adj.size(), false);
  on[i] = true;
  auto better = [&](const std::vector<std::size_t>& p) {
    if (!best) return true;
    if (p.size() != best->size()) return p.size() < best->size();
    return p < *best;
  };
  auto dfs = [&](auto&& self, std::size_t u) -> void {
    if (u == j) {
      if (better(cur)) best = cur;
      return;
    }
    if (static_cast<int>(cur.size()) - 1 >= max_hops) return;
    for (auto [v, w] : adj[u]) {
      (void)w;
      if (on[v]) continue;
      on[v] = true;
      cur.push_back(v);
      self(self, v);
      cur.pop_back();
      on[v] = false;
    }
  };
  dfs(dfs, i);
  return best;
}

inline double tie(const Adjacency& adj, std::size_t i, std::size_t j, int max_hops) {
  if (i == j) return 0.0;
  const auto p = best_path(adj, i, j, max_hops);
  if (!p) return 0.0;
  double t = 1.0;
  for (std::size_t k = 0; k + 1 < p->size(); ++k) {
    const double a = wdeg(adj, (*p)[k]);
    const double b = wdeg(adj, (*p)[k + 1]);
    t *= a / std::max(a, b);
  }
  return t;
}

inline std::vector<std::vector<double>> tie_matrix(const gravity::Graph& g, int max_hops) {
  const auto adj = adjacency(g);
  std::vector<std::vector<double>> t(g.size(), std::vector<double>(g.size(), 0.0));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) t[i][j] = tie(adj, i, j, max_hops);
  return t;
}

inline double cosine01(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return 0.5 * (1.0 + ab / std::sqrt(aa * bb));
}

}  // namespace oracle
