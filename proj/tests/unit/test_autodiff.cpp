#include "doctest.h"

#include <cmath>
#include <random>

#include "gravity/autodiff.hpp"
#include "gravity/params.hpp"

using namespace gravity;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(r, c);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Scalar probe: sum(out * R) for a fixed random R, so every output entry
// carries a distinct weight into the loss.
ad::Var probe(ad::Tape& tape, ad::Var out, std::mt19937_64& rng) {
  const Tensor& v = out.value();
  return ad::sum(ad::mul(out, tape.constant(random_tensor(v.rows(), v.cols(), rng))));
}

double check(const ParamStore& p, const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& f,
             std::uint64_t probe_seed) {
  TapeLoss loss = [&](ad::Tape& tape, const std::vector<ad::Var>& vars) {
    std::mt19937_64 rng(probe_seed);
    return probe(tape, f(tape, vars), rng);
  };
  return grad_check(loss, p, 1e-5, 1e-6).max_rel_error;
}

}  // namespace

TEST_CASE("softmax of a zero row is uniform") {
  ad::Tape tape;
  auto s = ad::softmax_rows(tape.constant(Tensor(1, 3)));
  for (std::size_t k = 0; k < 3; ++k) CHECK(s.value()(0, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("relu derivative at -1 and 2") {
  ad::Tape tape;
  auto x = tape.variable(Tensor::from_rows({{-1.0, 2.0}}));
  tape.backward(ad::sum(ad::relu(x)));
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == 1.0);
}

TEST_CASE("matmul gradient on a 3x4 by 4x2 instance") {
  std::mt19937_64 rng(7);
  ParamStore p;
  p.add("a", random_tensor(3, 4, rng));
  p.add("b", random_tensor(4, 2, rng));
  const double err = check(p, [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::matmul(v[0], v[1]); }, 11);
  CHECK(err <= 1e-6);
}

TEST_CASE("every differentiable op passes finite differences on 50 random shapes") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = dim(rng), m = dim(rng), k = dim(rng);
    ParamStore p;
    p.add("a", random_tensor(n, m, rng));
    p.add("b", random_tensor(n, m, rng));
    p.add("w", random_tensor(m, k, rng));
    p.add("r", random_tensor(1, m, rng));
    p.add("sq", random_tensor(n, n, rng));
    const auto seed = static_cast<std::uint64_t>(trial);
    using V = const std::vector<ad::Var>&;
    const std::vector<std::function<ad::Var(ad::Tape&, V)>> ops = {
        [](ad::Tape&, V v) { return ad::matmul(v[0], v[2]); },
        [](ad::Tape&, V v) { return ad::add(v[0], v[1]); },
        [](ad::Tape&, V v) { return ad::add_row(v[0], v[3]); },
        [](ad::Tape&, V v) { return ad::sub(v[0], v[1]); },
        [](ad::Tape&, V v) { return ad::mul(v[0], v[1]); },
        [](ad::Tape&, V v) { return ad::scale(v[0], -1.7); },
        [](ad::Tape&, V v) { return ad::add_scalar(v[0], 0.3); },
        [](ad::Tape&, V v) { return ad::row_sum(v[0]); },
        [](ad::Tape&, V v) { return ad::sum(v[0]); },
        [](ad::Tape&, V v) { return ad::relu(v[0]); },
        [](ad::Tape&, V v) { return ad::tanh(v[0]); },
        [](ad::Tape&, V v) { return ad::sigmoid(v[0]); },
        [](ad::Tape&, V v) { return ad::softmax_rows(v[0]); },
        [](ad::Tape&, V v) { return ad::gather_rows(v[0], {0, 0}); },
        [n](ad::Tape&, V v) {
          std::vector<std::size_t> cols(n, 0);
          return ad::pick(v[0], cols);
        },
        [](ad::Tape&, V v) { return ad::cosine01(v[0], v[1]); },
        [](ad::Tape&, V v) { return ad::aggregate(v[4], v[0]); },
    };
    for (std::size_t o = 0; o < ops.size(); ++o) {
      const double err = check(p, ops[o], seed * 100 + o);
      if (err > 1e-6) MESSAGE("op ", o, " trial ", trial, " rel err ", err);
      worst = std::max(worst, err);
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("softmax rows sum to one and ignore a constant shift") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(4, 5, rng, 3.0);
    Tensor shifted = x;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 5; ++j) shifted(i, j) += 7.5 * static_cast<double>(i + 1);
    ad::Tape tape;
    const Tensor a = ad::softmax_rows(tape.constant(x)).value();
    const Tensor b = ad::softmax_rows(tape.constant(shifted)).value();
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        s += a(i, j);
        CHECK(std::abs(a(i, j) - b(i, j)) <= 1e-12);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("non-finite forward values raise NumericError") {
  ad::Tape tape;
  auto x = tape.variable(Tensor::from_rows({{1e308}}));
  CHECK_THROWS_AS(ad::scale(x, 10.0), NumericError);
}

TEST_CASE("shape mismatch is a validation error") {
  ad::Tape tape;
  auto a = tape.variable(Tensor(2, 3));
  auto b = tape.variable(Tensor(2, 2));
  CHECK_THROWS_AS(ad::add(a, b), ValidationError);
  CHECK_THROWS_AS(ad::matmul(a, b), ValidationError);
}

TEST_CASE("cosine01 is zero for zero-norm rows") {
  ad::Tape tape;
  auto a = tape.constant(Tensor::from_rows({{0.0, 0.0}, {1.0, 0.0}}));
  const Tensor s = ad::cosine01(a, a).value();
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("aggregate result is independent of the order of the vertices") {
  std::mt19937_64 rng(5);
  const Tensor k = random_tensor(6, 6, rng);
  const Tensor z = random_tensor(6, 3, rng);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor kp(6, 6), zp(6, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) kp(perm[i], perm[j]) = k(i, j);
    for (std::size_t c = 0; c < 3; ++c) zp(perm[i], c) = z(i, c);
  }
  ad::Tape tape;
  const Tensor y = ad::aggregate(tape.constant(k), tape.constant(z)).value();
  const Tensor yp = ad::aggregate(tape.constant(kp), tape.constant(zp)).value();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(y(i, c) == yp(perm[i], c));
}
