#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gravity/paths.hpp"
#include "gravity/tensor.hpp"
#include "gravity/ties.hpp"

namespace gravity {

/// Rescaled cosine (1 + cos(a, b)) / 2 in [0, 1]; 0 if either vector has
/// zero norm.
double similarity(std::span<const double> a, std::span<const double> b);

/// Row-by-row similarity between the rows of a and the rows of b.
Tensor similarity_matrix(const Tensor& a, const Tensor& b);

/// Gated force kernel: values(i, j) = s(i, j) * t(i, j) where the pair is
/// reachable and s * t >= lambda, else 0. Diagonal is 0.
struct ForceKernel {
  Tensor values;
  std::vector<std::uint8_t> gate;
  double lambda = 0.0;

  std::size_t size() const { return values.rows(); }
  bool open(std::size_t i, std::size_t j) const { return gate[i * size() + j] != 0; }
};

void require_lambda(double lambda);

/// The frozen part of the kernel for a given similarity matrix: t(i, j)
/// where the gate is open, 0 elsewhere. Multiplying this entrywise with the
/// similarity matrix yields the kernel values.
Tensor gated_ties(const Tensor& sim, const TieMatrix& ties, const PathTable& paths, double lambda);

/// `feats` may be raw attributes or latent rows.
ForceKernel force_kernel(const Tensor& feats, const TieMatrix& ties, const PathTable& paths,
                         double lambda);

struct GroupForce {
  Tensor values;
  Tensor membership;
};

/// N x K binary matrix; row v is one-hot at labels[v] when `include[v]` is
/// set and the vertex is labelled, zero otherwise. `include` may be empty
/// (all vertices).
Tensor membership_matrix(std::span<const int> labels, int n_classes,
                         std::span<const std::uint8_t> include = {});

/// values = kernel * membership, with order-invariant row reductions.
GroupForce group_force(const ForceKernel& k, const Tensor& membership);

/// { j : gate(i, j) }.
std::vector<std::size_t> receptive_field(const ForceKernel& k, std::size_t i);

}  // namespace gravity
