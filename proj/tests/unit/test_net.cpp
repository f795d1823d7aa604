#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "objective.hpp"
#include "gravity/force.hpp"
#include "gravity/net.hpp"

using namespace gravity;
using objective::encoder_config;
using objective::Fixture;
using objective::random_tensor;


TEST_CASE("isolated vertex encoder is a plain MLP") {
  std::mt19937_64 rng(1);
  const Graph g(1, Tensor::from_rows({{0.3, -1.2, 0.8}}));
  const auto cfg = encoder_config(3, {4}, 2, 0.1, 2);
  const ParamStore p = init_encoder(cfg, rng);
  const PathTable paths = all_pairs_paths(g, 2);
  const Embedding e = encoder_forward(p, g, tie_matrix_exact(g, paths), paths, cfg);

  const Tensor& w1 = p.value("enc.W1");
  const Tensor& w2 = p.value("enc.W2");
  std::vector<double> h(4);
  for (std::size_t k = 0; k < 4; ++k) {
    double a = 0.0;
    for (std::size_t i = 0; i < 3; ++i) a += g.features()(0, i) * w1(i, k);
    h[k] = std::max(0.0, a);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    double a = 0.0;
    for (std::size_t k = 0; k < 4; ++k) a += h[k] * w2(k, c);
    CHECK(e.values(0, c) == doctest::Approx(std::tanh(a)).epsilon(1e-13));
  }
  CHECK(e.layers.size() == 2);
}

TEST_CASE("K3 with identical features gives identical embedding rows") {
  std::mt19937_64 rng(2);
  const Graph g = fixture::complete(3, Tensor(3, 4, 0.6));
  const auto cfg = encoder_config(4, {5, 3}, 2, 0.0, 3);
  const ParamStore p = init_encoder(cfg, rng);
  const PathTable paths = all_pairs_paths(g, 3);
  const Embedding e = encoder_forward(p, g, tie_matrix_exact(g, paths), paths, cfg);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(e.values(i, c) - e.values(0, c)) <= 1e-12);
}

TEST_CASE("lambda = 1 encoder is row-wise and permutes with the vertices") {
  std::mt19937_64 rng(3);
  const Graph g = fixture::random_graph(9, 0.4, rng, 4);
  const auto cfg = encoder_config(4, {6}, 3, 1.0, 3);
  const ParamStore p = init_encoder(cfg, rng);
  const PathTable paths = all_pairs_paths(g, 3);
  const Embedding e = encoder_forward(p, g, tie_matrix_exact(g, paths), paths, cfg);

  // Same rows on an edgeless copy: nothing passes the gate.
  const Graph bare(9, g.features());
  const PathTable bare_paths = all_pairs_paths(bare, 3);
  const Embedding b = encoder_forward(p, bare, tie_matrix_exact(bare, bare_paths), bare_paths, cfg);
  for (std::size_t k = 0; k < e.values.size(); ++k) CHECK(e.values[k] == b.values[k]);

  const auto perm = fixture::random_permutation(9, rng);
  const Graph gp = g.permuted(perm);
  const PathTable pp = all_pairs_paths(gp, 3);
  const Embedding ep = encoder_forward(p, gp, tie_matrix_exact(gp, pp), pp, cfg);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(ep.values(perm[i], c) == e.values(i, c));
}

TEST_CASE("encoder unchanged by uniform weight rescaling") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = fixture::random_graph(10, 0.3, rng, 3);
    const Graph r = g.rescaled(2.5);
    const auto cfg = encoder_config(3, {8}, 2, 0.1, 3);
    const ParamStore p = init_encoder(cfg, rng);
    const PathTable pg = all_pairs_paths(g, 3), pr = all_pairs_paths(r, 3);
    const Embedding a = encoder_forward(p, g, tie_matrix_exact(g, pg), pg, cfg);
    const Embedding b = encoder_forward(p, r, tie_matrix_exact(r, pr), pr, cfg);
    for (std::size_t k = 0; k < a.values.size(); ++k) CHECK(std::abs(a.values[k] - b.values[k]) <= 1e-12);
  }
}

TEST_CASE("discriminator: zero weights are uniform, rows sum to one, deterministic") {
  std::mt19937_64 rng(5);
  DiscriminatorConfig cfg;
  cfg.input_dim = cfg.output_dim = 4;
  cfg.hidden_dims = {6};
  const ParamStore fresh = init_discriminator(cfg, rng);
  const std::vector<double> row{3.0, 0.0, 12.5, 1.0};
  for (double v : discriminator_forward(fresh, row, cfg)) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  ParamStore p = fresh;
  p.at("dis.W2").value = random_tensor(6, 4, rng);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(4);
    for (auto& v : x) v = std::abs(random_tensor(1, 1, rng, 3.0)(0, 0));
    const auto probs = discriminator_forward(p, x, cfg);
    double s = 0.0;
    for (double v : probs) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(discriminator_forward(p, x, cfg) == probs);
  }
  CHECK_THROWS_AS(discriminator_forward(p, std::vector<double>{1.0, 2.0}, cfg), ValidationError);
  DiscriminatorConfig bad = cfg;
  bad.input_dim = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("silhouette worked example") {
  const Tensor y = Tensor::from_rows({{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
  const std::vector<int> labels{0, 0, 1};
  const std::vector<std::size_t> all{0, 1, 2};
  const auto st = silhouette_terms(y, labels, all, SilhouetteNormalization::kSum);
  CHECK(st.in[0] == doctest::Approx(1.0));
  CHECK(st.out[0] == doctest::Approx(0.5));
  CHECK(st.score[0] == doctest::Approx(0.5));
  CHECK(st.in[2] == 0.0);
  CHECK(st.out[2] == doctest::Approx(1.0));
  CHECK(st.score[2] == doctest::Approx(-1.0));
  // 0.25 + 0.25 + 1
  CHECK(silhouette_loss(y, labels, all, SilhouetteNormalization::kSum).value == doctest::Approx(1.5));

  SUBCASE("mean normalization divides by class sizes") {
    const auto m = silhouette_terms(y, labels, all, SilhouetteNormalization::kMean);
    CHECK(m.out[2] == doctest::Approx(0.5));
    CHECK(m.score[2] == doctest::Approx(-1.0));
  }
}

TEST_CASE("silhouette edge cases") {
  const std::vector<std::size_t> two{0, 1};
  SUBCASE("one vertex per class, identical embeddings") {
    const Tensor y = Tensor::from_rows({{0.4, 0.2}, {0.4, 0.2}});
    const std::vector<int> labels{0, 1};
    const auto st = silhouette_terms(y, labels, two, SilhouetteNormalization::kSum);
    CHECK(st.score[0] == doctest::Approx(-1.0));
    CHECK(silhouette_loss(y, labels, two, SilhouetteNormalization::kSum).value == doctest::Approx(2.0));
  }
  SUBCASE("all similarities zero gives Sil = 0") {
    const Tensor y(3, 2);
    const std::vector<int> labels{0, 1, 1};
    const std::vector<std::size_t> all{0, 1, 2};
    for (double s : silhouette_terms(y, labels, all, SilhouetteNormalization::kSum).score) CHECK(s == 0.0);
    const auto l = silhouette_loss(y, labels, all, SilhouetteNormalization::kSum);
    CHECK(l.value == doctest::Approx(1.5));
    for (double g : l.grad.data()) CHECK(g == 0.0);
  }
  SUBCASE("a single class is rejected") {
    const Tensor y = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    const std::vector<int> labels{1, 1};
    CHECK_THROWS_AS(silhouette_terms(y, labels, two, SilhouetteNormalization::kSum), ValidationError);
  }
}

TEST_CASE("silhouette scores stay in [-1, 1]") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor y = random_tensor(12, 3, rng);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < 12; ++i) labels[i] = static_cast<int>(i % 3);
    std::vector<std::size_t> all(12);
    for (std::size_t i = 0; i < 12; ++i) all[i] = i;
    for (auto norm : {SilhouetteNormalization::kSum, SilhouetteNormalization::kMean})
      for (double s : silhouette_terms(y, labels, all, norm).score) {
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
      }
  }
}

TEST_CASE("discriminator loss examples") {
  Tensor uniform(10, 4, 0.25);
  std::vector<int> labels(10);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = static_cast<int>(i % 4);
  const auto l = discriminator_loss(uniform, labels);
  CHECK(l.value == doctest::Approx(7.5));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(l.grad(i, k) == (static_cast<int>(k) == labels[i] ? -1.0 : 0.0));

  Tensor perfect(10, 4);
  for (std::size_t i = 0; i < 10; ++i) perfect(i, static_cast<std::size_t>(labels[i])) = 1.0;
  CHECK(discriminator_loss(perfect, labels).value == 0.0);
  Tensor wrong(10, 4);
  for (std::size_t i = 0; i < 10; ++i) wrong(i, static_cast<std::size_t>((labels[i] + 1) % 4)) = 1.0;
  CHECK(discriminator_loss(wrong, labels).value == 10.0);
  CHECK_THROWS_AS(discriminator_loss(uniform, std::vector<int>{0, 1}), ValidationError);
}

TEST_CASE("total loss") {
  CHECK(total_loss(1.3, 9.0, 0.0) == 1.3);
  CHECK(total_loss(1.0, 2.0, 0.5) == 2.0);
  CHECK_THROWS_AS(total_loss(1.0, 2.0, -0.1), ValidationError);
}

TEST_CASE("full objective gradient matches finite differences with frozen gates") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto r = objective::frozen_gate_grad_check(seed);
    INFO("seed ", seed, " worst ", r.worst_param, "[", r.worst_index, "] analytic ", r.analytic, " numeric ",
         r.numeric);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("gamma = 0 makes the total equal to the encoder loss") {
  Fixture f(4);
  f.setup.gamma = 0.0;
  ad::Tape tape;
  auto e = f.enc.attach(tape);
  auto d = f.dis.attach(tape);
  const auto t = build_objective(tape, e, d, f.setup);
  CHECK(t.total.value()(0, 0) == t.encoder_loss.value()(0, 0));
  f.setup.gamma = -1.0;
  ad::Tape tape2;
  auto e2 = f.enc.attach(tape2);
  auto d2 = f.dis.attach(tape2);
  CHECK_THROWS_AS(build_objective(tape2, e2, d2, f.setup), ValidationError);
}

TEST_CASE("objective is equivariant under vertex permutation on trees") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = fixture::random_tree(10, rng, 3);
    std::vector<int> labels(10);
    for (std::size_t i = 0; i < 10; ++i) labels[i] = static_cast<int>(i % 2);
    const auto perm = fixture::random_permutation(10, rng);
    const Graph gp = g.permuted(perm);
    std::vector<int> labels_p(10);
    for (std::size_t i = 0; i < 10; ++i) labels_p[perm[i]] = labels[i];

    EncoderConfig ec = encoder_config(3, {5}, 2, 0.1, 3);
    DiscriminatorConfig dc;
    const ParamStore enc = init_encoder(ec, rng);
    ParamStore dis = init_discriminator(dc, rng);
    dis.at("dis.W1").value = random_tensor(2, 2, rng);

    auto run = [&](const Graph& graph, const std::vector<int>& lab, std::vector<std::size_t> train) {
      const PathTable paths = all_pairs_paths(graph, 3);
      const TieMatrix ties = tie_matrix_exact(graph, paths);
      ObjectiveSetup s;
      s.features = &graph.features();
      s.ties = &ties;
      s.paths = &paths;
      s.labels = &lab;
      s.train = std::move(train);
      s.encoder = ec;
      s.discriminator = dc;
      ad::Tape tape;
      auto e = enc.attach(tape);
      auto d = dis.attach(tape);
      const auto t = build_objective(tape, e, d, s);
      return std::pair{t.total.value()(0, 0), t.embedding.value()};
    };
    std::vector<std::size_t> train{0, 1, 2, 3, 4, 5, 6}, train_p;
    for (auto v : train) train_p.push_back(perm[v]);
    std::sort(train_p.begin(), train_p.end());
    const auto [loss, emb] = run(g, labels, train);
    const auto [loss_p, emb_p] = run(gp, labels_p, train_p);
    CHECK(loss == loss_p);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t c = 0; c < 2; ++c) CHECK(emb_p(perm[i], c) == emb(i, c));
  }
}

TEST_CASE("config validation") {
  EncoderConfig c = encoder_config(3, {4}, 1, 0.1, 3);
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.output_dim = 2;
  c.lambda = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("λ must lie in [0,1]"), ValidationError);
  CHECK(parse_normalization("mean") == SilhouetteNormalization::kMean);
  CHECK_THROWS_AS(parse_normalization("median"), ValidationError);
}
