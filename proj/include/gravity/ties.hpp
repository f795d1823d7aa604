#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "gravity/graph.hpp"
#include "gravity/params.hpp"
#include "gravity/paths.hpp"
#include "gravity/tensor.hpp"

namespace gravity {

/// N x N directional social ties in [0, 1]; entry (i, j) is the influence of
/// j on i. Diagonal is 0 and unreachable pairs are 0. Not symmetric.
struct TieMatrix {
  Tensor values;

  std::size_t size() const { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Product over consecutive path edges (a, b) of wd(a) / max(wd(a), wd(b)),
/// where wd is the weighted degree. 0 when no path within the radius.
double tie_exact(const Graph& g, const PathTable& paths, std::size_t i, std::size_t j);
TieMatrix tie_matrix_exact(const Graph& g, const PathTable& paths);

inline constexpr std::size_t kStructuralDim = 8;
using StructuralFeatures = std::array<double, kStructuralDim>;

/// [degree, weighted degree, clustering coefficient, mean neighbor degree]
/// followed by the mean of the same four statistics over the neighbors.
/// Not normalized.
StructuralFeatures structural_embedding(const Graph& g, std::size_t v);
Tensor structural_embeddings(const Graph& g);

struct TieModelOptions {
  std::size_t epochs = 2000;
  double lr = 1e-3;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
};

/// Inductive tie approximator: a two-layer pair scorer with logistic output
/// over [z(emb_i), z(emb_j), hops(i, j) / H], where z applies the
/// normalization constants fitted on the training graph.
struct TieModel {
  int hop_radius = 3;
  std::array<double, kStructuralDim> mean{};
  std::array<double, kStructuralDim> scale{};
  ParamStore params;

  std::size_t input_dim() const { return 2 * kStructuralDim + 1; }
};

/// Fits the scorer by full-batch Adam on the mean squared error against
/// `truth` over every ordered pair reachable in `paths`.
TieModel tie_model_train(const Graph& g, const TieMatrix& truth, const PathTable& paths,
                         const TieModelOptions& opt);

/// Mean squared error over the reachable pairs of `paths`; writes the exact
/// gradient into m.params (one fused pass, no tape).
double tie_model_mse_grad(TieModel& m, const Graph& g, const TieMatrix& truth, const PathTable& paths);

/// Logistic score in (0, 1) for a reachable pair; 0 when unreachable.
double tie_model_predict(const TieModel& m, const Graph& g, const PathTable& paths, std::size_t i,
                         std::size_t j);
TieMatrix tie_model_predict_matrix(const TieModel& m, const Graph& g, const PathTable& paths);

struct TieMetrics {
  double mae = 0.0;
  double mse = 0.0;
  double mape = 0.0;
  std::size_t n_pairs = 0;
  /// Pairs entering MAPE (truth >= 1e-8).
  std::size_t n_pairs_used = 0;
};

/// MAE and MSE over ordered off-diagonal pairs (restricted to pairs
/// reachable in `support` when given); MAPE over those with truth >= 1e-8.
TieMetrics tie_metrics(const TieMatrix& pred, const TieMatrix& truth,
                       const PathTable* support = nullptr);

nlohmann::json tie_model_to_json(const TieModel& m);
TieModel tie_model_from_json(const nlohmann::json& j);
void save_tie_model(const TieModel& m, const std::filesystem::path& path);
TieModel load_tie_model(const std::filesystem::path& path);

inline constexpr int kTieModelVersion = 1;

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace gravity
