#pragma once

#include <cstdint>
#include <vector>

#include "selfgnn/autograd.hpp"
#include "selfgnn/rng.hpp"
#include "selfgnn/tensor.hpp"

namespace selfgnn {

// Xavier-uniform fan-in/fan-out initialization for projection matrices.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Gaussian init for embedding tables, N(0, sigma^2).
Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

// Tape-resident GRU parameters for one direction (input size == hidden size d).
struct GruVars {
  Var wz, uz, bz;
  Var wr, ur, br;
  Var wh, uh, bh;
};

// One GRU step over a batch of entities.
//   z = sigm(x Wz + h Uz + bz), r = sigm(x Wr + h Ur + br)
//   hc = tanh(x Wh + (r . h) Uh + bh), h' = (1 - z) . h + z . hc
Var gru_cell(Tape& tape, Var x, Var h_prev, const GruVars& p);

struct AttentionVars {
  Var wq, wk, wv, wo;  // each d x d
};

struct AttentionOut {
  Var output;                 // [batch*len x d]
  std::vector<Var> head_probs;  // per head: [batch*len x len] softmax rows
};

// Multi-head dot-product self-attention over `batch` sequences of length
// `len` packed as [batch*len x d]. Masked positions are excluded as keys and
// produce zero output rows as queries. No feed-forward sublayer, no biases.
AttentionOut multi_head_attention(Tape& tape, Var seq, std::size_t batch, std::size_t len,
                                  const AttentionVars& p, std::size_t heads,
                                  std::vector<std::uint8_t> mask = {});

}  // namespace selfgnn
