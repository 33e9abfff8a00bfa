#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "selfgnn/tensor.hpp"

namespace selfgnn {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  std::uint32_t id = 0;
};

// Sentinel row index for gather_rows: produces a zero row and receives no
// gradient (used for sequence padding).
inline constexpr std::size_t kPadRow = std::numeric_limits<std::size_t>::max();

// Reverse-mode tape. Records every forward operation in topological order;
// backward() walks the record once and accumulates exact gradients into
// per-node buffers. Values are immutable once produced. A tape is
// single-threaded; independent tapes may live on independent threads.
class Tape {
 public:
  Var leaf(Tensor value);
  // Same storage semantics as leaf but semantically non-trainable input.
  Var constant(Tensor value);

  // Identity in the forward pass, blocks all gradient flow in backward.
  Var stop_gradient(Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // y = alpha * x + beta, elementwise
  Var affine(Var x, double alpha, double beta);
  // a: [m x n], v: [n] row vector broadcast over rows
  Var add_rowvec(Var a, Var v);

  Var matmul(Var a, Var b);
  // A is a fixed (non-differentiable) sparse matrix; gradient w.r.t. b is A^T g.
  Var spmm(const SparseMatrix& a, Var b);
  // Batched matmul on row-major chunks: a is [batch*n x k]. If transpose_b,
  // b is [batch*m x k] and each chunk computes A_i B_i^T -> [n x m]; otherwise
  // b is [batch*k x m] and each chunk computes A_i B_i -> [n x m].
  Var bmm(Var a, Var b, std::size_t batch, bool transpose_b);

  Var leaky_relu(Var x, double slope);
  Var sigmoid(Var x);
  Var tanh(Var x);
  // max(0, x) with subgradient 0 at the kink (hinge-loss convention).
  Var relu(Var x);

  // rows: indices into x's rows; kPadRow yields a zero row with no gradient.
  Var gather_rows(Var x, std::vector<std::size_t> rows);
  Var slice_cols(Var x, std::size_t c0, std::size_t c1);
  Var concat_cols(const std::vector<Var>& parts);
  // steps: T tensors of identical shape [n x d]; output row b*T + t is
  // steps[t] row b.
  Var stack_timesteps(const std::vector<Var>& steps);
  Var tile_rows(Var x, std::size_t times);

  Var sum_all(Var x);
  // x: [m x n] -> [m x 1]
  Var row_sum(Var x);
  // x: [g*chunk x d] -> [g x d], summing each consecutive `chunk` rows.
  Var sum_chunks(Var x, std::size_t chunk);

  // Row-wise softmax for attention scores x: [batch*len x len]. mask (may be
  // empty = all valid) has batch*len flags; position j of chunk b is a valid
  // key iff mask[b*len+j]. Invalid query rows produce all-zero rows.
  Var att_softmax(Var x, std::size_t batch, std::size_t len,
                  std::vector<std::uint8_t> mask);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Gradients of all nodes become
  // available through grad(); nodes never reached keep exact zeros.
  void backward(Var loss);

  const Tensor& grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    // Receives this node's output gradient; accumulates into input grads.
    std::function<void(Tape&, const Tensor&)> backprop;
  };

  Var push(Tensor value, std::function<void(Tape&, const Tensor&)> backprop);
  Tensor& grad_buf(std::uint32_t id);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool ran_backward_ = false;
  mutable Tensor zero_like_;  // scratch for grad() of untouched nodes
};

}  // namespace selfgnn
