#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gravity/tensor.hpp"

namespace gravity::ad {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

/// Reverse-mode tape. Every op appends a node holding its forward value and a
/// closure that pushes the node's gradient into its inputs. Nodes are
/// replayed in reverse insertion order, so the reduction order of every
/// gradient is fixed.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Records a new node. `backprop` may be empty when no input needs a
  /// gradient. Throws NumericError on non-finite forward values.
  Var record(Tensor value, std::span<const Var> inputs, Backprop backprop, const char* op);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient slot of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate(std::size_t id, std::size_t r, std::size_t c, double g);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to all inputs.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (n x m) plus a 1 x m row broadcast over rows.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// n x m -> n x 1.
Var row_sum(Var a);
/// n x m -> 1 x 1.
Var sum(Var a);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var gather_rows(Var a, std::vector<std::size_t> indices);
/// Entry (i, cols[i]) of each row, as an n x 1 column.
Var pick(Var a, std::vector<std::size_t> cols);
/// Rescaled cosine (1 + cos) / 2 between every row of a and every row of b;
/// zero whenever either row has zero norm.
Var cosine01(Var a, Var b);
/// k (n x n) times z (n x m) where each output entry is accumulated with
/// order_invariant_sum over the nonzero terms.
Var aggregate(Var k, Var z);

}  // namespace gravity::ad
