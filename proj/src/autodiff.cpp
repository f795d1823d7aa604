#include "gravity/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace gravity::ad {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Tensor value) { return record(std::move(value), {}, {}, "constant"); }

Var Tape::variable(Tensor value) {
  Var v = record(std::move(value), {}, {}, "variable");
  nodes_[v.id].needs_grad = true;
  nodes_[v.id].grad = Tensor(nodes_[v.id].value.rows(), nodes_[v.id].value.cols());
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backprop backprop, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(fmt::format("non-finite value produced by {}", op));
  }
  Node node;
  for (const Var& in : inputs) {
    if (in.tape != this) throw ValidationError("operands recorded on different tapes");
    node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
  }
  if (node.needs_grad) {
    node.grad = Tensor(value.rows(), value.cols());
    node.backprop = std::move(backprop);
  }
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  auto& dst = n.grad.data();
  const auto& src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::accumulate(std::size_t id, std::size_t r, std::size_t c, double g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  n.grad(r, c) += g;
}

void Tape::backward(Var out) {
  if (out.tape != this) throw ValidationError("backward on foreign variable");
  const Tensor& v = nodes_[out.id].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw ValidationError("backward requires a scalar (1x1) output, got " + shape_string(v));
  }
  if (!nodes_[out.id].needs_grad) return;
  nodes_[out.id].grad(0, 0) += 1.0;
  for (std::size_t id = out.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.backprop) n.backprop(*this, id);
  }
}

namespace {

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw ValidationError(
        fmt::format("{}: incompatible shapes {} and {}", op, shape_string(a), shape_string(b)));
  }
}

template <typename Fn, typename Deriv>
Var unary(Var a, const char* op, Fn fn, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i]);
  const std::size_t in = a.id;
  Var inputs[] = {a};
  return a.tape->record(std::move(y), inputs,
                        [in, deriv](Tape& t, std::size_t self) {
                          const Tensor& x = t.value(in);
                          const Tensor& y = t.value(self);
                          const Tensor& g = t.grad(self);
                          Tensor dx(x.rows(), x.cols());
                          for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * deriv(x[i], y[i]);
                          t.accumulate(in, dx);
                        },
                        op);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  require(x.cols() == w.rows(), "matmul", x, w);
  Tensor y(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xik = x(i, k);
      if (xik == 0.0) continue;
      for (std::size_t j = 0; j < w.cols(); ++j) y(i, j) += xik * w(k, j);
    }
  const std::size_t ia = a.id, ib = b.id;
  Var inputs[] = {a, b};
  return a.tape->record(std::move(y), inputs,
                        [ia, ib](Tape& t, std::size_t self) {
                          const Tensor& x = t.value(ia);
                          const Tensor& w = t.value(ib);
                          const Tensor& g = t.grad(self);
                          if (t.needs_grad(ia)) {
                            Tensor dx(x.rows(), x.cols());
                            for (std::size_t i = 0; i < x.rows(); ++i)
                              for (std::size_t k = 0; k < x.cols(); ++k) {
                                double acc = 0.0;
                                for (std::size_t j = 0; j < w.cols(); ++j) acc += g(i, j) * w(k, j);
                                dx(i, k) = acc;
                              }
                            t.accumulate(ia, dx);
                          }
                          if (t.needs_grad(ib)) {
                            Tensor dw(w.rows(), w.cols());
                            for (std::size_t i = 0; i < x.rows(); ++i)
                              for (std::size_t k = 0; k < x.cols(); ++k) {
                                const double xik = x(i, k);
                                if (xik == 0.0) continue;
                                for (std::size_t j = 0; j < w.cols(); ++j) dw(k, j) += xik * g(i, j);
                              }
                            t.accumulate(ib, dw);
                          }
                        },
                        "matmul");
}

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.same_shape(y), "add", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const std::size_t ia = a.id, ib = b.id;
  Var inputs[] = {a, b};
  return a.tape->record(std::move(out), inputs,
                        [ia, ib](Tape& t, std::size_t self) {
                          const Tensor g = t.grad(self);
                          t.accumulate(ia, g);
                          t.accumulate(ib, g);
                        },
                        "add");
}

Var add_row(Var a, Var row) {
  const Tensor& x = a.value();
  const Tensor& b = row.value();
  require(b.rows() == 1 && b.cols() == x.cols(), "add_row", x, b);
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += b(0, j);
  const std::size_t ia = a.id, ib = row.id;
  Var inputs[] = {a, row};
  return a.tape->record(std::move(out), inputs,
                        [ia, ib](Tape& t, std::size_t self) {
                          const Tensor g = t.grad(self);
                          t.accumulate(ia, g);
                          if (t.needs_grad(ib)) {
                            Tensor db(1, g.cols());
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
                            t.accumulate(ib, db);
                          }
                        },
                        "add_row");
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.same_shape(y), "mul", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id, ib = b.id;
  Var inputs[] = {a, b};
  return a.tape->record(std::move(out), inputs,
                        [ia, ib](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          const Tensor& x = t.value(ia);
                          const Tensor& y = t.value(ib);
                          if (t.needs_grad(ia)) {
                            Tensor dx = g;
                            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i];
                            t.accumulate(ia, dx);
                          }
                          if (t.needs_grad(ib)) {
                            Tensor dy = g;
                            for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= x[i];
                            t.accumulate(ib, dy);
                          }
                        },
                        "mul");
}

Var scale(Var a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var row_sum(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, 0) += x(i, j);
  const std::size_t ia = a.id;
  Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs,
                        [ia](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          const Tensor& x = t.value(ia);
                          Tensor dx(x.rows(), x.cols());
                          for (std::size_t i = 0; i < x.rows(); ++i)
                            for (std::size_t j = 0; j < x.cols(); ++j) dx(i, j) = g(i, 0);
                          t.accumulate(ia, dx);
                        },
                        "row_sum");
}

Var sum(Var a) {
  std::vector<double> terms = a.value().data();
  Tensor out(1, 1, order_invariant_sum(terms));
  const std::size_t ia = a.id;
  Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs,
                        [ia](Tape& t, std::size_t self) {
                          const Tensor& x = t.value(ia);
                          t.accumulate(ia, Tensor(x.rows(), x.cols(), t.grad(self)(0, 0)));
                        },
                        "sum");
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      y(i, j) = std::exp(x(i, j) - mx);
      z += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= z;
  }
  const std::size_t ia = a.id;
  Var inputs[] = {a};
  return a.tape->record(std::move(y), inputs,
                        [ia](Tape& t, std::size_t self) {
                          const Tensor& y = t.value(self);
                          const Tensor& g = t.grad(self);
                          Tensor dx(y.rows(), y.cols());
                          for (std::size_t i = 0; i < y.rows(); ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                            for (std::size_t j = 0; j < y.cols(); ++j)
                              dx(i, j) = y(i, j) * (g(i, j) - dot);
                          }
                          t.accumulate(ia, dx);
                        },
                        "softmax_rows");
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tensor out = a.value().gather_rows(indices);
  const std::size_t ia = a.id;
  Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs,
                        [ia, idx = std::move(indices)](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          for (std::size_t k = 0; k < idx.size(); ++k)
                            for (std::size_t j = 0; j < g.cols(); ++j)
                              t.accumulate(ia, idx[k], j, g(k, j));
                        },
                        "gather_rows");
}

Var pick(Var a, std::vector<std::size_t> cols) {
  const Tensor& x = a.value();
  if (cols.size() != x.rows()) {
    throw ValidationError(
        fmt::format("pick: {} column indices for {} rows", cols.size(), x.rows()));
  }
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (cols[i] >= x.cols()) throw ValidationError("pick: column index out of range");
    out(i, 0) = x(i, cols[i]);
  }
  const std::size_t ia = a.id;
  Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs,
                        [ia, c = std::move(cols)](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          for (std::size_t i = 0; i < c.size(); ++i) t.accumulate(ia, i, c[i], g(i, 0));
                        },
                        "pick");
}

namespace {

std::vector<double> row_norms(const Tensor& x) {
  std::vector<double> n(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    n[i] = std::sqrt(s);
  }
  return n;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

Var cosine01(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.cols() == y.cols(), "cosine01", x, y);
  const auto nx = row_norms(x);
  const auto ny = row_norms(y);
  Tensor s(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) {
      if (nx[i] == 0.0 || ny[j] == 0.0) continue;
      s(i, j) = 0.5 + 0.5 * dot(x.row(i), y.row(j)) / (nx[i] * ny[j]);
    }
  const std::size_t ia = a.id, ib = b.id;
  Var inputs[] = {a, b};
  return a.tape->record(
      std::move(s), inputs,
      [ia, ib, nx, ny](Tape& t, std::size_t self) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        const Tensor& g = t.grad(self);
        Tensor dx(x.rows(), x.cols());
        Tensor dy(y.rows(), y.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          if (nx[i] == 0.0) continue;
          for (std::size_t j = 0; j < y.rows(); ++j) {
            if (ny[j] == 0.0 || g(i, j) == 0.0) continue;
            const double inv = 1.0 / (nx[i] * ny[j]);
            const double cos = dot(x.row(i), y.row(j)) * inv;
            const double w = 0.5 * g(i, j);
            for (std::size_t k = 0; k < x.cols(); ++k) {
              dx(i, k) += w * (y(j, k) * inv - cos * x(i, k) / (nx[i] * nx[i]));
              dy(j, k) += w * (x(i, k) * inv - cos * y(j, k) / (ny[j] * ny[j]));
            }
          }
        }
        t.accumulate(ia, dx);
        t.accumulate(ib, dy);
      },
      "cosine01");
}

Var aggregate(Var k, Var z) {
  const Tensor& kv = k.value();
  const Tensor& zv = z.value();
  require(kv.rows() == kv.cols() && kv.cols() == zv.rows(), "aggregate", kv, zv);
  Tensor out(kv.rows(), zv.cols());
  std::vector<double> terms;
  for (std::size_t i = 0; i < kv.rows(); ++i)
    for (std::size_t c = 0; c < zv.cols(); ++c) {
      terms.clear();
      for (std::size_t j = 0; j < kv.cols(); ++j)
        if (kv(i, j) != 0.0) terms.push_back(kv(i, j) * zv(j, c));
      out(i, c) = order_invariant_sum(terms);
    }
  const std::size_t ik = k.id, iz = z.id;
  Var inputs[] = {k, z};
  return k.tape->record(std::move(out), inputs,
                        [ik, iz](Tape& t, std::size_t self) {
                          const Tensor& kv = t.value(ik);
                          const Tensor& zv = t.value(iz);
                          const Tensor& g = t.grad(self);
                          if (t.needs_grad(ik)) {
                            Tensor dk(kv.rows(), kv.cols());
                            for (std::size_t i = 0; i < kv.rows(); ++i)
                              for (std::size_t j = 0; j < kv.cols(); ++j)
                                dk(i, j) = dot(g.row(i), zv.row(j));
                            t.accumulate(ik, dk);
                          }
                          if (t.needs_grad(iz)) {
                            Tensor dz(zv.rows(), zv.cols());
                            for (std::size_t i = 0; i < kv.rows(); ++i)
                              for (std::size_t j = 0; j < kv.cols(); ++j) {
                                const double kij = kv(i, j);
                                if (kij == 0.0) continue;
                                for (std::size_t c = 0; c < zv.cols(); ++c) dz(j, c) += kij * g(i, c);
                              }
                            t.accumulate(iz, dz);
                          }
                        },
                        "aggregate");
}

}  // namespace gravity::ad
