#include "gravity/net.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "gravity/force.hpp"

namespace gravity {

void EncoderConfig::validate() const {
  if (input_dim < 1) throw ValidationError("encoder input_dim must be >= 1");
  if (output_dim < 2) throw ValidationError("encoder output_dim q must be >= 2");
  for (auto h : hidden_dims)
    if (h < 1) throw ValidationError("encoder hidden dims must be >= 1");
  require_lambda(lambda);
  if (hop_radius < 1) throw ValidationError("hop radius must be >= 1");
}

void DiscriminatorConfig::validate() const {
  if (input_dim < 1 || output_dim < 2) {
    throw ValidationError("discriminator needs input_dim >= 1 and output_dim = K >= 2");
  }
  if (input_dim != output_dim) {
    throw ValidationError(fmt::format("discriminator input ({}) and output ({}) must both equal K",
                                      input_dim, output_dim));
  }
  for (auto h : hidden_dims)
    if (h < 1) throw ValidationError("discriminator hidden dims must be >= 1");
}

SilhouetteNormalization parse_normalization(const std::string& s) {
  if (s == "sum") return SilhouetteNormalization::kSum;
  if (s == "mean") return SilhouetteNormalization::kMean;
  throw ValidationError("silhouette_normalization must be 'sum' or 'mean', got '" + s + "'");
}

std::string to_string(SilhouetteNormalization n) {
  return n == SilhouetteNormalization::kSum ? "sum" : "mean";
}

namespace {

ParamStore init_stack(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                      std::size_t out, std::mt19937_64& rng) {
  ParamStore store;
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  for (std::size_t p = 1; p < dims.size(); ++p) {
    store.add_glorot(fmt::format("{}.W{}", prefix, p), dims[p - 1], dims[p], rng);
    store.add(fmt::format("{}.b{}", prefix, p), Tensor(1, dims[p]));
  }
  return store;
}

void require_stack(std::span<const ad::Var> vars, std::size_t layers, const char* what) {
  if (vars.size() != 2 * layers) {
    throw ValidationError(fmt::format("{}: expected {} parameter tensors, got {}", what, 2 * layers,
                                      vars.size()));
  }
}

}  // namespace

ParamStore init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  return init_stack("enc", cfg.input_dim, cfg.hidden_dims, cfg.output_dim, rng);
}

ParamStore init_discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ParamStore store = init_stack("dis", cfg.input_dim, cfg.hidden_dims, cfg.output_dim, rng);
  // Output layer starts at zero so the first softmax is uniform. With raw
  // group-force inputs a random output layer saturates and 1 - p has no
  // gradient for confidently wrong rows.
  store.at(fmt::format("dis.W{}", cfg.layers())).value.fill(0.0);
  return store;
}

Tensor GateMemo::next(const Tensor& sim, const TieMatrix& ties, const PathTable& paths, double lambda) {
  if (replay) {
    if (cursor >= masks.size()) throw ValidationError("gate memo exhausted during replay");
    return masks[cursor++];
  }
  masks.push_back(gated_ties(sim, ties, paths, lambda));
  ++cursor;
  return masks.back();
}

ad::Var latent_kernel(ad::Var y, const TieMatrix& ties, const PathTable& paths, double lambda,
                      GateMemo* memo) {
  ad::Tape& tape = *y.tape;
  auto sim = ad::cosine01(y, y);
  Tensor mask = memo != nullptr ? memo->next(sim.value(), ties, paths, lambda)
                                : gated_ties(sim.value(), ties, paths, lambda);
  return ad::mul(sim, tape.constant(std::move(mask)));
}

ad::Var encode(ad::Tape& tape, std::span<const ad::Var> enc, const Tensor& features,
               const TieMatrix& ties, const PathTable& paths, const EncoderConfig& cfg,
               GateMemo* memo, std::vector<ad::Var>* layers) {
  cfg.validate();
  require_stack(enc, cfg.layers(), "encoder");
  if (features.cols() != cfg.input_dim) {
    throw ValidationError(fmt::format("encoder expects {} input features, graph has {}",
                                      cfg.input_dim, features.cols()));
  }
  if (ties.size() != features.rows() || paths.size() != features.rows()) {
    throw ValidationError("encoder: ties/paths do not match the number of vertices");
  }
  auto z = tape.constant(features);
  if (layers != nullptr) layers->push_back(z);
  for (std::size_t p = 0; p + 1 < cfg.layers(); ++p) {
    auto kernel = latent_kernel(z, ties, paths, cfg.lambda, memo);
    auto pulled = ad::add(z, ad::aggregate(kernel, z));
    z = ad::relu(ad::add_row(ad::matmul(pulled, enc[2 * p]), enc[2 * p + 1]));
    if (layers != nullptr) layers->push_back(z);
  }
  const std::size_t last = cfg.layers() - 1;
  return ad::tanh(ad::add_row(ad::matmul(z, enc[2 * last]), enc[2 * last + 1]));
}

ad::Var discriminate(ad::Var rows, std::span<const ad::Var> dis, const DiscriminatorConfig& cfg) {
  cfg.validate();
  require_stack(dis, cfg.layers(), "discriminator");
  if (rows.value().cols() != cfg.input_dim) {
    throw ValidationError(fmt::format("discriminator expects rows of length {}, got {}",
                                      cfg.input_dim, rows.value().cols()));
  }
  auto h = rows;
  for (std::size_t r = 0; r + 1 < cfg.layers(); ++r)
    h = ad::relu(ad::add_row(ad::matmul(h, dis[2 * r]), dis[2 * r + 1]));
  const std::size_t last = cfg.layers() - 1;
  return ad::softmax_rows(ad::add_row(ad::matmul(h, dis[2 * last]), dis[2 * last + 1]));
}

namespace {

struct SilhouetteState {
  std::vector<double> in, out, score;
  std::vector<int> out_class;
  std::vector<double> in_scale, out_scale;
};

SilhouetteState evaluate_silhouette(const Tensor& sim, const std::vector<int>& labels,
                                    SilhouetteNormalization norm) {
  const std::size_t n = labels.size();
  if (sim.rows() != n || sim.cols() != n) {
    throw ValidationError("silhouette: similarity matrix does not match the labelled set");
  }
  if (n == 0) throw ValidationError("silhouette: labelled set is empty");
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (int l : labels) {
    if (l < 0) throw ValidationError("silhouette: unlabeled vertex in labelled set");
    ++count[static_cast<std::size_t>(l)];
  }
  const auto present = std::count_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; });
  if (present < 2) throw ValidationError("silhouette: fewer than 2 classes among labelled vertices");

  SilhouetteState st;
  st.in.resize(n);
  st.out.resize(n);
  st.score.resize(n);
  st.out_class.resize(n);
  st.in_scale.resize(n);
  st.out_scale.resize(n);
  std::vector<std::vector<double>> per_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& terms : per_class) terms.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) per_class[static_cast<std::size_t>(labels[j])].push_back(sim(i, j));
    const auto own = static_cast<std::size_t>(labels[i]);
    const bool mean = norm == SilhouetteNormalization::kMean;

    const double own_count = static_cast<double>(per_class[own].size());
    st.in_scale[i] = mean ? (own_count > 0 ? 1.0 / own_count : 0.0) : 1.0;
    st.in[i] = order_invariant_sum(per_class[own]) * st.in_scale[i];

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      if (c == own || count[c] == 0) continue;
      const double scale = mean ? 1.0 / static_cast<double>(per_class[c].size()) : 1.0;
      const double v = order_invariant_sum(per_class[c]) * scale;
      if (v < best) {
        best = v;
        st.out_class[i] = static_cast<int>(c);
        st.out_scale[i] = scale;
      }
    }
    st.out[i] = best;
    const double m = std::max(st.in[i], st.out[i]);
    st.score[i] = m == 0.0 ? 0.0 : (st.in[i] - st.out[i]) / m;
  }
  return st;
}

}  // namespace

ad::Var silhouette_loss(ad::Var sim, std::vector<int> labels, SilhouetteNormalization norm) {
  SilhouetteState st = evaluate_silhouette(sim.value(), labels, norm);
  std::vector<double> terms(st.score.size());
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = 0.5 * (1.0 - st.score[i]);
  Tensor loss(1, 1, order_invariant_sum(terms));
  const std::size_t in_id = sim.id;
  ad::Var inputs[] = {sim};
  return sim.tape->record(
      std::move(loss), inputs,
      [in_id, st = std::move(st), labels = std::move(labels)](ad::Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        const std::size_t n = labels.size();
        Tensor d(n, n);
        for (std::size_t i = 0; i < n; ++i) {
          const double in = st.in[i], out = st.out[i];
          const double m = std::max(in, out);
          if (m == 0.0) continue;
          double d_in = 0.0, d_out = 0.0;
          if (in >= out) {
            d_in = out / (in * in);
            d_out = -1.0 / in;
          } else {
            d_in = 1.0 / out;
            d_out = -in / (out * out);
          }
          const double upstream = -0.5 * g;
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) d(i, j) += upstream * d_in * st.in_scale[i];
            else if (labels[j] == st.out_class[i]) d(i, j) += upstream * d_out * st.out_scale[i];
          }
        }
        t.accumulate(in_id, d);
      },
      "silhouette_loss");
}

ad::Var discriminator_loss(ad::Var probs, const std::vector<int>& labels) {
  if (probs.value().rows() != labels.size()) {
    throw ValidationError(fmt::format("discriminator loss: {} probability rows for {} labels",
                                      probs.value().rows(), labels.size()));
  }
  std::vector<std::size_t> cols;
  cols.reserve(labels.size());
  for (int l : labels) {
    if (l < 0) throw ValidationError("discriminator loss: unlabeled row");
    cols.push_back(static_cast<std::size_t>(l));
  }
  auto picked = ad::sum(ad::pick(probs, std::move(cols)));
  return ad::add_scalar(ad::scale(picked, -1.0), static_cast<double>(labels.size()));
}

Embedding encoder_forward(const ParamStore& params, const Graph& g, const TieMatrix& ties,
                          const PathTable& paths, const EncoderConfig& cfg) {
  ad::Tape tape;
  auto vars = params.attach(tape);
  std::vector<ad::Var> layers;
  auto y = encode(tape, vars, g.features(), ties, paths, cfg, nullptr, &layers);
  Embedding e;
  e.values = y.value();
  for (auto& z : layers) e.layers.push_back(z.value());
  return e;
}

std::vector<double> discriminator_forward(const ParamStore& params, std::span<const double> force_row,
                                          const DiscriminatorConfig& cfg) {
  if (force_row.size() != cfg.input_dim) {
    throw ValidationError(fmt::format("discriminator expects a force row of length {}, got {}",
                                      cfg.input_dim, force_row.size()));
  }
  ad::Tape tape;
  auto vars = params.attach(tape);
  auto probs = discriminate(tape.constant(Tensor::row_vector(force_row)), vars, cfg);
  return probs.value().data();
}

namespace {

std::vector<int> labels_of(std::span<const int> labels, std::span<const std::size_t> labeled) {
  std::vector<int> out;
  out.reserve(labeled.size());
  for (auto v : labeled) {
    if (v >= labels.size()) throw ValidationError("labelled index out of range");
    out.push_back(labels[v]);
  }
  return out;
}

}  // namespace

SilhouetteTerms silhouette_terms(const Tensor& emb, std::span<const int> labels,
                                 std::span<const std::size_t> labeled, SilhouetteNormalization norm) {
  const Tensor rows = emb.gather_rows(labeled);
  auto st = evaluate_silhouette(similarity_matrix(rows, rows), labels_of(labels, labeled), norm);
  return {std::move(st.in), std::move(st.out), std::move(st.score)};
}

LossWithGrad silhouette_loss(const Tensor& emb, std::span<const int> labels,
                             std::span<const std::size_t> labeled, SilhouetteNormalization norm) {
  ad::Tape tape;
  auto y = tape.variable(emb);
  auto rows = ad::gather_rows(y, std::vector<std::size_t>(labeled.begin(), labeled.end()));
  auto loss = silhouette_loss(ad::cosine01(rows, rows), labels_of(labels, labeled), norm);
  tape.backward(loss);
  return {loss.value()(0, 0), y.grad()};
}

LossWithGrad discriminator_loss(const Tensor& probs, std::span<const int> labels) {
  ad::Tape tape;
  auto p = tape.variable(probs);
  auto loss = discriminator_loss(p, std::vector<int>(labels.begin(), labels.end()));
  tape.backward(loss);
  return {loss.value()(0, 0), p.grad()};
}

double total_loss(double enc_loss, double disc_loss, double gamma) {
  if (!(gamma >= 0.0)) throw ValidationError(fmt::format("γ must be >= 0, got {}", gamma));
  return enc_loss + gamma * disc_loss;
}

ObjectiveTerms build_objective(ad::Tape& tape, std::span<const ad::Var> enc,
                               std::span<const ad::Var> dis, const ObjectiveSetup& s,
                               GateMemo* memo) {
  if (!(s.gamma >= 0.0)) throw ValidationError(fmt::format("γ must be >= 0, got {}", s.gamma));
  if (s.train.empty()) throw ValidationError("objective needs at least one training vertex");
  const auto& labels = *s.labels;
  std::vector<int> train_labels = labels_of(labels, s.train);

  ObjectiveTerms t;
  t.embedding = encode(tape, enc, *s.features, *s.ties, *s.paths, s.encoder, memo);

  std::vector<std::uint8_t> member(labels.size(), 0);
  for (auto v : s.train) member[v] = 1;
  auto kernel = latent_kernel(t.embedding, *s.ties, *s.paths, s.encoder.lambda, memo);
  t.group_force = ad::aggregate(kernel, tape.constant(membership_matrix(labels, s.n_classes, member)));
  t.probs = discriminate(ad::gather_rows(t.group_force, s.train), dis, s.discriminator);

  auto train_rows = ad::gather_rows(t.embedding, s.train);
  t.encoder_loss = silhouette_loss(ad::cosine01(train_rows, train_rows), train_labels, s.normalization);
  t.discriminator_loss = discriminator_loss(t.probs, train_labels);
  t.total = s.gamma == 0.0 ? t.encoder_loss
                           : ad::add(t.encoder_loss, ad::scale(t.discriminator_loss, s.gamma));
  return t;
}

}  // namespace gravity
