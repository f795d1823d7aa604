#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gravity/graph.hpp"

namespace gravity {

/// Hop-shortest paths between all ordered pairs within a hop radius.
///
/// Among equal-hop paths the lexicographically smallest vertex sequence is
/// kept. Every suffix of such a path is itself the smallest path from its
/// first vertex, so the table stores only hop counts and the next vertex on
/// the path.
class PathTable {
 public:
  static constexpr std::uint8_t kUnreachable = 0xFF;

  PathTable() = default;
  PathTable(std::size_t n, int max_hops);

  std::size_t size() const { return n_; }
  int max_hops() const { return max_hops_; }

  /// True for i != j with hop distance <= max_hops.
  bool reachable(std::size_t i, std::size_t j) const {
    return i != j && hops_[i * n_ + j] != kUnreachable;
  }
  /// Hop distance, or nullopt when absent (i == j or beyond the radius).
  std::optional<int> hops(std::size_t i, std::size_t j) const;
  /// Vertex after i on the stored path towards j.
  std::size_t next(std::size_t i, std::size_t j) const { return next_[i * n_ + j]; }
  /// Full stored path [i, ..., j]; empty when absent.
  std::vector<std::size_t> path(std::size_t i, std::size_t j) const;
  std::size_t pair_count() const;

  void set(std::size_t i, std::size_t j, std::uint8_t hops, std::uint32_t next);

 private:
  std::size_t n_ = 0;
  int max_hops_ = 0;
  std::vector<std::uint8_t> hops_;
  std::vector<std::uint32_t> next_;
};

/// BFS from every vertex, bounded at `max_hops` (1 <= max_hops < 255).
PathTable all_pairs_paths(const Graph& g, int max_hops);

}  // namespace gravity
