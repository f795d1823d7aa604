#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gravity/graph.hpp"
#include "gravity/tensor.hpp"

namespace fixture {

using gravity::Graph;
using gravity::Tensor;

inline Tensor ones(std::size_t n, std::size_t d) { return Tensor(n, d, 1.0); }

inline Graph path3() {
  Graph g(3, ones(3, 2));
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 1.0);
  return g;
}

/// a=0, b=1, c=2 with w_ab = 2, w_bc = 1, w_ac = 1.
inline Graph weighted_triangle() {
  Graph g(3, ones(3, 2));
  g.add_edge(0, 1, 2.0);
  g.add_edge(1, 2, 1.0);
  g.add_edge(0, 2, 1.0);
  return g;
}

inline Graph complete(std::size_t n, Tensor features) {
  Graph g(n, std::move(features));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j, 1.0);
  return g;
}

inline Graph complete(std::size_t n) { return complete(n, ones(n, 2)); }

inline Graph cycle(std::size_t n) {
  Graph g(n, ones(n, 2));
  for (std::size_t i = 0; i < n; ++i) g.add_edge(i, (i + 1) % n, 1.0);
  return g;
}

inline Graph star(std::size_t leaves) {
  Graph g(leaves + 1, ones(leaves + 1, 2));
  for (std::size_t i = 1; i <= leaves; ++i) g.add_edge(0, i, 1.0);
  return g;
}

/// Erdos-Renyi style graph with random positive weights and features.
inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng, std::size_t dim = 3,
                          bool unit_weights = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x(n, dim);
  for (auto& v : x.data()) v = normal(rng);
  Graph g(n, std::move(x));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (u(rng) < p) g.add_edge(i, j, unit_weights ? 1.0 : 0.25 + 2.0 * u(rng));
  return g;
}

inline Graph random_tree(std::size_t n, std::mt19937_64& rng, std::size_t dim = 3) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Tensor x(n, dim);
  for (auto& v : x.data()) v = normal(rng);
  Graph g(n, std::move(x));
  for (std::size_t v = 1; v < n; ++v) {
    std::uniform_int_distribution<std::size_t> parent(0, v - 1);
    g.add_edge(parent(rng), v, u(rng));
  }
  return g;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gravity_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
