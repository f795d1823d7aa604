#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gravity/tensor.hpp"

namespace gravity {

struct Neighbor {
  std::size_t vertex;
  double weight;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline constexpr int kUnlabeled = -1;

/// Undirected weighted graph with per-vertex attributes and optional labels.
///
/// Invariants (checked by validate()): symmetric adjacency with equal
/// weights, sorted neighbor lists, no self-loops, strictly positive finite
/// weights, finite features, every label in [0, K).
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t n_vertices, Tensor features);

  /// Adds the undirected edge {u, v}. Rejects self-loops, duplicates and
  /// non-positive or non-finite weights.
  void add_edge(std::size_t u, std::size_t v, double weight);
  void set_labels(std::vector<int> labels, int n_classes);

  std::size_t size() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  std::size_t feature_dim() const { return features_.cols(); }
  const Tensor& features() const { return features_; }
  const std::vector<Neighbor>& neighbors(std::size_t v) const { return adjacency_.at(v); }
  bool has_edge(std::size_t u, std::size_t v) const;
  double edge_weight(std::size_t u, std::size_t v) const;

  bool has_labels() const { return n_classes_ > 0; }
  int n_classes() const { return n_classes_; }
  int label(std::size_t v) const { return labels_.empty() ? kUnlabeled : labels_.at(v); }
  const std::vector<int>& labels() const { return labels_; }

  void validate() const;

  /// Copy with vertex v renamed to perm[v].
  Graph permuted(std::span<const std::size_t> perm) const;
  /// Copy with every edge weight multiplied by `factor` > 0.
  Graph rescaled(double factor) const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::vector<std::vector<Neighbor>> adjacency_;
  std::size_t edge_count_ = 0;
  Tensor features_;
  std::vector<int> labels_;
  int n_classes_ = 0;
};

/// Sum of incident edge weights; 0 for an isolated vertex.
double weighted_degree(const Graph& g, std::size_t v);

struct GraphFiles {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::optional<std::filesystem::path> labels;
};

/// Edge file: `src<TAB>dst<TAB>weight` lines, `#` comments, each undirected
/// edge listed once. Feature file: headerless CSV, row v = vertex v. Label
/// file: first line `K=<int>`, then `vertex,label` rows.
Graph load_graph(const GraphFiles& files);
void save_graph(const Graph& g, const GraphFiles& files);

/// Writes the three files into strings with the exact formatting used by
/// save_graph (features and weights with 17 significant digits so that a
/// reload is bit-identical).
std::string format_edges(const Graph& g);
std::string format_features(const Graph& g);
std::string format_labels(const Graph& g);

/// FNV-1a digest over the normalized content; used to recognise the training
/// graph inside a model archive.
std::string graph_fingerprint(const Graph& g);

struct SbmConfig {
  int blocks = 4;
  std::size_t per_block = 20;
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t feature_dim = 16;
  double feature_shift = 2.0;
  std::uint64_t seed = 0;
};

/// Stochastic block model with unit edge weights. Feature coordinate c is
/// owned by class c mod K; a vertex of class k draws N(shift, 1) on its own
/// coordinates and N(0, 1) elsewhere. Labels are block indices.
Graph generate_sbm(const SbmConfig& cfg);

}  // namespace gravity
