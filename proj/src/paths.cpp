#include "gravity/paths.hpp"

#include <deque>

#include <fmt/format.h>

#include "gravity/parallel.hpp"

namespace gravity {

PathTable::PathTable(std::size_t n, int max_hops)
    : n_(n), max_hops_(max_hops), hops_(n * n, kUnreachable), next_(n * n, 0) {}

std::optional<int> PathTable::hops(std::size_t i, std::size_t j) const {
  if (!reachable(i, j)) return std::nullopt;
  return hops_[i * n_ + j];
}

std::vector<std::size_t> PathTable::path(std::size_t i, std::size_t j) const {
  if (!reachable(i, j)) return {};
  std::vector<std::size_t> out{i};
  while (out.back() != j) out.push_back(next(out.back(), j));
  return out;
}

std::size_t PathTable::pair_count() const {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) c += reachable(i, j) ? 1 : 0;
  return c;
}

void PathTable::set(std::size_t i, std::size_t j, std::uint8_t hops, std::uint32_t next) {
  hops_[i * n_ + j] = hops;
  next_[i * n_ + j] = next;
}

PathTable all_pairs_paths(const Graph& g, int max_hops) {
  if (max_hops < 1 || max_hops >= PathTable::kUnreachable) {
    throw ValidationError(fmt::format("hop radius must lie in [1, 254], got {}", max_hops));
  }
  const std::size_t n = g.size();
  std::vector<std::uint8_t> dist(n * n, PathTable::kUnreachable);

  parallel_for(n, [&](std::size_t s) {
    std::uint8_t* d = dist.data() + s * n;
    std::deque<std::size_t> queue{s};
    d[s] = 0;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      if (d[u] == max_hops) continue;
      for (const auto& nb : g.neighbors(u)) {
        if (d[nb.vertex] != PathTable::kUnreachable) continue;
        d[nb.vertex] = static_cast<std::uint8_t>(d[u] + 1);
        queue.push_back(nb.vertex);
      }
    }
  });

  PathTable table(n, max_hops);
  parallel_for(n, [&](std::size_t i) {
    const std::uint8_t* di = dist.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || di[j] == PathTable::kUnreachable) continue;
      // neighbors are sorted, so the first one on a shortest path is the
      // lexicographically smallest continuation
      for (const auto& nb : g.neighbors(i)) {
        if (dist[nb.vertex * n + j] == di[j] - 1) {
          table.set(i, j, di[j], static_cast<std::uint32_t>(nb.vertex));
          break;
        }
      }
    }
  });
  return table;
}

}  // namespace gravity
