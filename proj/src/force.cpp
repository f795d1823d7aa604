#include "gravity/force.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gravity/autodiff.hpp"

namespace gravity {

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("similarity: dimension mismatch {} vs {}", a.size(), b.size()));
  }
  const Tensor ta = Tensor::row_vector(a);
  const Tensor tb = Tensor::row_vector(b);
  if (!ta.all_finite() || !tb.all_finite()) throw ValidationError("similarity: non-finite input");
  return similarity_matrix(ta, tb)(0, 0);
}

Tensor similarity_matrix(const Tensor& a, const Tensor& b) {
  if (!a.all_finite() || !b.all_finite()) throw ValidationError("similarity: non-finite input");
  ad::Tape tape;
  return ad::cosine01(tape.constant(a), tape.constant(b)).value();
}

void require_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError(fmt::format("λ must lie in [0,1], got {}", lambda));
  }
}

Tensor gated_ties(const Tensor& sim, const TieMatrix& ties, const PathTable& paths, double lambda) {
  require_lambda(lambda);
  const std::size_t n = sim.rows();
  if (sim.cols() != n || ties.size() != n || paths.size() != n) {
    throw ValidationError("gated_ties: similarity, ties and paths must cover the same vertices");
  }
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!paths.reachable(i, j)) continue;
      const double t = ties(i, j);
      if (sim(i, j) * t >= lambda) out(i, j) = t;
    }
  return out;
}

ForceKernel force_kernel(const Tensor& feats, const TieMatrix& ties, const PathTable& paths,
                         double lambda) {
  require_lambda(lambda);
  const std::size_t n = feats.rows();
  if (ties.size() != n || paths.size() != n) {
    throw ValidationError(fmt::format("force_kernel: {} feature rows but ties/paths cover {}/{}", n,
                                      ties.size(), paths.size()));
  }
  const Tensor sim = similarity_matrix(feats, feats);
  ForceKernel k;
  k.lambda = lambda;
  k.values = Tensor(n, n);
  k.gate.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!paths.reachable(i, j)) continue;
      const double v = sim(i, j) * ties(i, j);
      if (v >= lambda) {
        k.values(i, j) = v;
        k.gate[i * n + j] = 1;
      }
    }
  return k;
}

Tensor membership_matrix(std::span<const int> labels, int n_classes,
                         std::span<const std::uint8_t> include) {
  if (n_classes < 1) throw ValidationError("membership needs K >= 1");
  if (!include.empty() && include.size() != labels.size()) {
    throw ValidationError("membership: include mask length mismatch");
  }
  Tensor m(labels.size(), static_cast<std::size_t>(n_classes));
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] == kUnlabeled || (!include.empty() && include[v] == 0)) continue;
    if (labels[v] < 0 || labels[v] >= n_classes) throw ValidationError("membership: label out of range");
    m(v, static_cast<std::size_t>(labels[v])) = 1.0;
  }
  return m;
}

GroupForce group_force(const ForceKernel& k, const Tensor& membership) {
  const std::size_t n = k.size();
  if (membership.rows() != n) {
    throw ValidationError(fmt::format("group_force: kernel is {}x{}, membership has {} rows", n, n,
                                      membership.rows()));
  }
  for (std::size_t v = 0; v < n; ++v) {
    double row = 0.0;
    for (double x : membership.row(v)) {
      if (x != 0.0 && x != 1.0) throw ValidationError("group_force: membership must be binary");
      row += x;
    }
    if (row > 1.0) throw ValidationError("group_force: membership rows must be one-hot or zero");
  }
  ad::Tape tape;
  GroupForce g;
  g.values = ad::aggregate(tape.constant(k.values), tape.constant(membership)).value();
  g.membership = membership;
  return g;
}

std::vector<std::size_t> receptive_field(const ForceKernel& k, std::size_t i) {
  if (i >= k.size()) throw ValidationError(fmt::format("vertex {} out of range", i));
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k.size(); ++j)
    if (k.open(i, j)) out.push_back(j);
  return out;
}

}  // namespace gravity
