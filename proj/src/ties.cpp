#include "gravity/ties.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "gravity/autodiff.hpp"
#include "gravity/parallel.hpp"

namespace gravity {

namespace {

std::vector<double> all_weighted_degrees(const Graph& g) {
  std::vector<double> wd(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) wd[v] = weighted_degree(g, v);
  return wd;
}

double tie_along_path(const std::vector<double>& wd, const PathTable& paths, std::size_t i,
                      std::size_t j) {
  if (!paths.reachable(i, j)) return 0.0;
  double t = 1.0;
  std::size_t a = i;
  while (a != j) {
    const std::size_t b = paths.next(a, j);
    t *= wd[a] / std::max(wd[a], wd[b]);
    a = b;
  }
  return t;
}

void require_paths_for(const Graph& g, const PathTable& paths) {
  if (paths.size() != g.size()) {
    throw ValidationError(
        fmt::format("path table covers {} vertices, graph has {}", paths.size(), g.size()));
  }
}

}  // namespace

double tie_exact(const Graph& g, const PathTable& paths, std::size_t i, std::size_t j) {
  require_paths_for(g, paths);
  if (!paths.reachable(i, j)) return 0.0;
  return tie_along_path(all_weighted_degrees(g), paths, i, j);
}

TieMatrix tie_matrix_exact(const Graph& g, const PathTable& paths) {
  require_paths_for(g, paths);
  const auto wd = all_weighted_degrees(g);
  const std::size_t n = g.size();
  TieMatrix t{Tensor(n, n)};
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) t.values(i, j) = tie_along_path(wd, paths, i, j);
  });
  return t;
}

namespace {

std::array<double, 4> raw_statistics(const Graph& g, std::size_t v) {
  const auto& nbs = g.neighbors(v);
  const double degree = static_cast<double>(nbs.size());
  double clustering = 0.0;
  if (nbs.size() >= 2) {
    std::size_t links = 0;
    for (std::size_t a = 0; a < nbs.size(); ++a)
      for (std::size_t b = a + 1; b < nbs.size(); ++b)
        if (g.has_edge(nbs[a].vertex, nbs[b].vertex)) ++links;
    clustering = static_cast<double>(2 * links) / (degree * (degree - 1.0));
  }
  std::vector<double> nbr_degrees;
  for (const auto& nb : nbs) nbr_degrees.push_back(static_cast<double>(g.neighbors(nb.vertex).size()));
  const double mean_nbr_degree = nbs.empty() ? 0.0 : order_invariant_sum(nbr_degrees) / degree;
  return {degree, weighted_degree(g, v), clustering, mean_nbr_degree};
}

}  // namespace

StructuralFeatures structural_embedding(const Graph& g, std::size_t v) {
  if (v >= g.size()) throw ValidationError(fmt::format("vertex {} out of range", v));
  const auto own = raw_statistics(g, v);
  StructuralFeatures out{};
  std::copy(own.begin(), own.end(), out.begin());
  const auto& nbs = g.neighbors(v);
  if (nbs.empty()) return out;
  std::array<std::vector<double>, 4> columns;
  for (const auto& nb : nbs) {
    const auto s = raw_statistics(g, nb.vertex);
    for (std::size_t c = 0; c < 4; ++c) columns[c].push_back(s[c]);
  }
  for (std::size_t c = 0; c < 4; ++c)
    out[4 + c] = order_invariant_sum(columns[c]) / static_cast<double>(nbs.size());
  return out;
}

Tensor structural_embeddings(const Graph& g) {
  Tensor out(g.size(), kStructuralDim);
  parallel_for(g.size(), [&](std::size_t v) {
    const auto e = structural_embedding(g, v);
    std::copy(e.begin(), e.end(), out.row(v).begin());
  });
  return out;
}

namespace {

struct PairBatch {
  Tensor inputs;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

Tensor normalized_embeddings(const TieModel& m, const Graph& g) {
  Tensor z = structural_embeddings(g);
  for (std::size_t v = 0; v < z.rows(); ++v)
    for (std::size_t c = 0; c < kStructuralDim; ++c) z(v, c) = (z(v, c) - m.mean[c]) / m.scale[c];
  return z;
}

PairBatch build_pairs(const TieModel& m, const Graph& g, const PathTable& paths) {
  const Tensor z = normalized_embeddings(m, g);

  PairBatch batch;
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (paths.reachable(i, j)) batch.pairs.emplace_back(i, j);

  batch.inputs = Tensor(batch.pairs.size(), m.input_dim());
  for (std::size_t p = 0; p < batch.pairs.size(); ++p) {
    const auto [i, j] = batch.pairs[p];
    auto row = batch.inputs.row(p);
    std::copy(z.row(i).begin(), z.row(i).end(), row.begin());
    std::copy(z.row(j).begin(), z.row(j).end(), row.begin() + kStructuralDim);
    row[2 * kStructuralDim] = static_cast<double>(*paths.hops(i, j)) / m.hop_radius;
  }
  return batch;
}

/// vars: W1, b1, W2, b2 in store order.
ad::Var score(ad::Var inputs, const std::vector<ad::Var>& vars) {
  auto hidden = ad::relu(ad::add_row(ad::matmul(inputs, vars[0]), vars[1]));
  return ad::sigmoid(ad::add_row(ad::matmul(hidden, vars[2]), vars[3]));
}

Tensor score_batch(const TieModel& m, const Tensor& inputs) {
  if (m.params.size() != 4 || m.params.value("tie.W1").rows() != inputs.cols()) {
    throw ValidationError(fmt::format("tie model expects {} input features, got {}",
                                      m.params.size() == 4 ? m.params.value("tie.W1").rows() : 0,
                                      inputs.cols()));
  }
  ad::Tape tape;
  auto vars = m.params.attach(tape);
  return score(tape.constant(inputs), vars).value();
}

}  // namespace

double tie_model_mse_grad(TieModel& m, const Graph& g, const TieMatrix& truth, const PathTable& paths) {
  if (m.params.size() != 4 || m.params.value("tie.W1").rows() != m.input_dim()) {
    throw ValidationError("tie model parameters are malformed");
  }
  const std::size_t n = g.size();
  const std::size_t d = kStructuralDim;
  const Tensor z = normalized_embeddings(m, g);
  const Tensor& w1 = m.params.value("tie.W1");
  const std::size_t h = w1.cols();
  const auto b1 = m.params.value("tie.b1").row(0);
  const Tensor& w2 = m.params.value("tie.W2");
  const double b2 = m.params.value("tie.b2")(0, 0);

  // First layer split per endpoint: W1 x = Z_i W1[0:d] + Z_j W1[d:2d] + hop W1[2d].
  Tensor left(n, h), right(n, h);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < d; ++c) {
      const double x = z(v, c);
      for (std::size_t k = 0; k < h; ++k) {
        left(v, k) += x * w1(c, k);
        right(v, k) += x * w1(d + c, k);
      }
    }
  const auto w_hop = w1.row(2 * d);

  Tensor d_left(n, h), d_right(n, h);
  std::vector<double> d_hop(h, 0.0), d_b1(h, 0.0), d_w2(h, 0.0), pre(h), losses;
  double d_b2 = 0.0;
  const double inv = 1.0 / static_cast<double>(paths.pair_count());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!paths.reachable(i, j)) continue;
      const double hop = static_cast<double>(*paths.hops(i, j)) / m.hop_radius;
      double logit = b2;
      for (std::size_t k = 0; k < h; ++k) {
        pre[k] = left(i, k) + right(j, k) + hop * w_hop[k] + b1[k];
        if (pre[k] > 0.0) logit += pre[k] * w2(k, 0);
      }
      const double out = 1.0 / (1.0 + std::exp(-logit));
      const double diff = out - truth(i, j);
      losses.push_back(diff * diff);
      const double g_logit = 2.0 * diff * inv * out * (1.0 - out);
      d_b2 += g_logit;
      for (std::size_t k = 0; k < h; ++k) {
        if (pre[k] <= 0.0) continue;
        d_w2[k] += g_logit * pre[k];
        const double g_pre = g_logit * w2(k, 0);
        d_left(i, k) += g_pre;
        d_right(j, k) += g_pre;
        d_hop[k] += hop * g_pre;
        d_b1[k] += g_pre;
      }
    }

  Tensor& g_w1 = m.params.at("tie.W1").grad;
  g_w1.fill(0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < d; ++c) {
      const double x = z(v, c);
      for (std::size_t k = 0; k < h; ++k) {
        g_w1(c, k) += x * d_left(v, k);
        g_w1(d + c, k) += x * d_right(v, k);
      }
    }
  std::copy(d_hop.begin(), d_hop.end(), g_w1.row(2 * d).begin());
  std::copy(d_b1.begin(), d_b1.end(), m.params.at("tie.b1").grad.row(0).begin());
  std::copy(d_w2.begin(), d_w2.end(), m.params.at("tie.W2").grad.data().begin());
  m.params.at("tie.b2").grad(0, 0) = d_b2;
  return order_invariant_sum(losses) * inv;
}

TieModel tie_model_train(const Graph& g, const TieMatrix& truth, const PathTable& paths,
                         const TieModelOptions& opt) {
  require_paths_for(g, paths);
  if (truth.size() != g.size()) throw ValidationError("truth tie matrix does not match graph");
  if (paths.pair_count() == 0) throw ValidationError("no reachable pairs to train the tie model on");
  if (opt.hidden == 0 || opt.epochs == 0) throw ValidationError("tie model needs hidden > 0, epochs > 0");

  TieModel m;
  m.hop_radius = paths.max_hops();
  const Tensor emb = structural_embeddings(g);
  const double n = static_cast<double>(g.size());
  for (std::size_t c = 0; c < kStructuralDim; ++c) {
    std::vector<double> col(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) col[v] = emb(v, c);
    const double mean = order_invariant_sum(col) / n;
    for (auto& x : col) x = (x - mean) * (x - mean);
    const double sd = std::sqrt(order_invariant_sum(col) / n);
    m.mean[c] = mean;
    m.scale[c] = sd > 1e-12 ? sd : 1.0;
  }

  std::mt19937_64 rng(opt.seed);
  m.params.add_glorot("tie.W1", m.input_dim(), opt.hidden, rng);
  m.params.add("tie.b1", Tensor(1, opt.hidden));
  m.params.add_glorot("tie.W2", opt.hidden, 1, rng);
  m.params.add("tie.b2", Tensor(1, 1));

  AdamOptions adam;
  adam.lr = opt.lr;
  adam.weight_decay = 0.0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    tie_model_mse_grad(m, g, truth, paths);
    adam_step(m.params, adam);
  }
  return m;
}

double tie_model_predict(const TieModel& m, const Graph& g, const PathTable& paths, std::size_t i,
                         std::size_t j) {
  require_paths_for(g, paths);
  if (i >= g.size() || j >= g.size()) throw ValidationError("vertex out of range");
  if (!paths.reachable(i, j)) return 0.0;
  const auto ei = structural_embedding(g, i);
  const auto ej = structural_embedding(g, j);
  Tensor input(1, m.input_dim());
  for (std::size_t c = 0; c < kStructuralDim; ++c) {
    input(0, c) = (ei[c] - m.mean[c]) / m.scale[c];
    input(0, kStructuralDim + c) = (ej[c] - m.mean[c]) / m.scale[c];
  }
  input(0, 2 * kStructuralDim) = static_cast<double>(*paths.hops(i, j)) / m.hop_radius;
  return score_batch(m, input)(0, 0);
}

TieMatrix tie_model_predict_matrix(const TieModel& m, const Graph& g, const PathTable& paths) {
  require_paths_for(g, paths);
  TieMatrix out{Tensor(g.size(), g.size())};
  const PairBatch batch = build_pairs(m, g, paths);
  if (batch.pairs.empty()) return out;
  const Tensor scores = score_batch(m, batch.inputs);
  for (std::size_t p = 0; p < batch.pairs.size(); ++p)
    out.values(batch.pairs[p].first, batch.pairs[p].second) = scores(p, 0);
  return out;
}

TieMetrics tie_metrics(const TieMatrix& pred, const TieMatrix& truth, const PathTable* support) {
  require_same_shape(pred.values, truth.values, "tie_metrics");
  if (support != nullptr && support->size() != truth.size()) {
    throw ValidationError("tie_metrics: support does not match matrix size");
  }
  std::vector<double> abs_err, sq_err, rel_err;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (i == j || (support != nullptr && !support->reachable(i, j))) continue;
      const double e = std::abs(pred(i, j) - truth(i, j));
      abs_err.push_back(e);
      sq_err.push_back(e * e);
      if (truth(i, j) >= 1e-8) rel_err.push_back(e / truth(i, j));
    }
  TieMetrics m;
  m.n_pairs = abs_err.size();
  m.n_pairs_used = rel_err.size();
  if (m.n_pairs > 0) {
    m.mae = order_invariant_sum(abs_err) / static_cast<double>(m.n_pairs);
    m.mse = order_invariant_sum(sq_err) / static_cast<double>(m.n_pairs);
  }
  if (m.n_pairs_used > 0) m.mape = order_invariant_sum(rel_err) / static_cast<double>(m.n_pairs_used);
  return m;
}

nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

nlohmann::json tie_model_to_json(const TieModel& m) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : m.params.params())
    params.push_back({{"name", p.name}, {"tensor", tensor_to_json(p.value)}});
  return {{"format", "gravity-tie-model"},
          {"version", kTieModelVersion},
          {"hop_radius", m.hop_radius},
          {"mean", m.mean},
          {"scale", m.scale},
          {"params", params}};
}

TieModel tie_model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "gravity-tie-model") throw ValidationError("not a tie model record");
    const int version = j.at("version").get<int>();
    if (version != kTieModelVersion) {
      throw ValidationError(
          fmt::format("tie model version {} unsupported (expected {})", version, kTieModelVersion));
    }
    TieModel m;
    m.hop_radius = j.at("hop_radius").get<int>();
    m.mean = j.at("mean").get<std::array<double, kStructuralDim>>();
    m.scale = j.at("scale").get<std::array<double, kStructuralDim>>();
    for (const auto& p : j.at("params"))
      m.params.add(p.at("name").get<std::string>(), tensor_from_json(p.at("tensor")));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed tie model: ") + e.what());
  }
}

void save_tie_model(const TieModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << tie_model_to_json(m).dump(1) << '\n';
}

TieModel load_tie_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    return tie_model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace gravity
