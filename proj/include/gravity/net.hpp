#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gravity/autodiff.hpp"
#include "gravity/graph.hpp"
#include "gravity/params.hpp"
#include "gravity/paths.hpp"
#include "gravity/ties.hpp"

namespace gravity {

struct EncoderConfig {
  std::size_t input_dim = 0;
  /// One aggregation layer per entry.
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 2;
  double lambda = 0.0;
  int hop_radius = 3;

  /// Number of weight layers (hidden layers plus the output map).
  std::size_t layers() const { return hidden_dims.size() + 1; }
  void validate() const;
};

struct DiscriminatorConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 2;

  std::size_t layers() const { return hidden_dims.size() + 1; }
  void validate() const;
};

enum class SilhouetteNormalization { kSum, kMean };

SilhouetteNormalization parse_normalization(const std::string& s);
std::string to_string(SilhouetteNormalization n);

/// Parameters "enc.W<p>", "enc.b<p>" for p = 1..P; weights are in x out.
ParamStore init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng);
/// Parameters "dis.W<r>", "dis.b<r>" for r = 1..R. The output layer W_R
/// starts at zero (uniform first prediction); the rest are Glorot.
ParamStore init_discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng);

/// Gate masks seen during a forward pass, in evaluation order (encoder
/// hidden layers, then the latent kernel). With `replay` set, the stored
/// masks are reused instead of being recomputed, which freezes every gate.
struct GateMemo {
  std::vector<Tensor> masks;
  bool replay = false;
  std::size_t cursor = 0;

  Tensor next(const Tensor& sim, const TieMatrix& ties, const PathTable& paths, double lambda);
};

/// z^0 = X; for each hidden layer, k = gated kernel on z (similarity
/// recomputed on z, ties fixed), a = z + k z, z = relu(a W + b). Output
/// y = tanh(z W_P + b_P).
ad::Var encode(ad::Tape& tape, std::span<const ad::Var> enc, const Tensor& features,
               const TieMatrix& ties, const PathTable& paths, const EncoderConfig& cfg,
               GateMemo* memo = nullptr, std::vector<ad::Var>* layers = nullptr);

/// Gated force kernel on the rows of y.
ad::Var latent_kernel(ad::Var y, const TieMatrix& ties, const PathTable& paths, double lambda,
                      GateMemo* memo = nullptr);

/// h^0 = rows, h^r = relu(h W_r + b_r), output softmax(h W_R + b_R).
ad::Var discriminate(ad::Var rows, std::span<const ad::Var> dis, const DiscriminatorConfig& cfg);

/// `sim` is the n x n similarity among labelled embeddings, `labels` their
/// classes. Returns the scalar sum of (1 - Sil) / 2. Gradients follow the
/// attained min/max branch.
ad::Var silhouette_loss(ad::Var sim, std::vector<int> labels, SilhouetteNormalization norm);

/// Sum over rows of 1 - probs[row, label].
ad::Var discriminator_loss(ad::Var probs, const std::vector<int>& labels);

struct Embedding {
  Tensor values;
  /// z^0 .. z^{P-1}.
  std::vector<Tensor> layers;
};

Embedding encoder_forward(const ParamStore& params, const Graph& g, const TieMatrix& ties,
                          const PathTable& paths, const EncoderConfig& cfg);

std::vector<double> discriminator_forward(const ParamStore& params, std::span<const double> force_row,
                                          const DiscriminatorConfig& cfg);

struct SilhouetteTerms {
  std::vector<double> in;
  std::vector<double> out;
  std::vector<double> score;
};

/// Per-vertex In, Out and Sil over `labeled` (indices into emb rows).
SilhouetteTerms silhouette_terms(const Tensor& emb, std::span<const int> labels,
                                 std::span<const std::size_t> labeled, SilhouetteNormalization norm);

struct LossWithGrad {
  double value = 0.0;
  Tensor grad;
};

/// Loss and d(loss)/d(emb).
LossWithGrad silhouette_loss(const Tensor& emb, std::span<const int> labels,
                             std::span<const std::size_t> labeled, SilhouetteNormalization norm);

/// Loss and d(loss)/d(probs); one probability row per entry of labels.
LossWithGrad discriminator_loss(const Tensor& probs, std::span<const int> labels);

/// enc + gamma * disc; gamma must be >= 0.
double total_loss(double enc_loss, double disc_loss, double gamma);

struct ObjectiveSetup {
  const Tensor* features = nullptr;
  const TieMatrix* ties = nullptr;
  const PathTable* paths = nullptr;
  /// Class per vertex; only `train` entries are read.
  const std::vector<int>* labels = nullptr;
  std::vector<std::size_t> train;
  int n_classes = 2;
  EncoderConfig encoder;
  DiscriminatorConfig discriminator;
  double gamma = 1.0;
  SilhouetteNormalization normalization = SilhouetteNormalization::kSum;
};

struct ObjectiveTerms {
  ad::Var embedding;
  ad::Var group_force;
  ad::Var probs;
  ad::Var encoder_loss;
  ad::Var discriminator_loss;
  ad::Var total;
};

/// Full forward pass: encoder, latent kernel, group force over the training
/// members, discriminator on training rows, both losses and their sum.
ObjectiveTerms build_objective(ad::Tape& tape, std::span<const ad::Var> enc,
                               std::span<const ad::Var> dis, const ObjectiveSetup& setup,
                               GateMemo* memo = nullptr);

}  // namespace gravity
