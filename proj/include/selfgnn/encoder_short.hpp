#pragma once

#include <utility>
#include <vector>

#include "selfgnn/autograd.hpp"
#include "selfgnn/data.hpp"
#include "selfgnn/rng.hpp"

namespace selfgnn {

enum class Mode { Train, Inference };

enum class LayerCombine { Mean, ConcatProject };

struct ShortEncoderConfig {
  std::size_t layers = 2;
  double leaky_slope = 0.1;
  double edge_dropout = 0.5;
  LayerCombine combine = LayerCombine::Mean;
};

// Inverted edge dropout: each entry survives with probability 1-p and is
// scaled by 1/(1-p) so the expected aggregation is unchanged.
SparseMatrix apply_edge_dropout(const SparseMatrix& a, double p, Rng& rng);

// One propagation step over a fixed adjacency:
//   z_user = LeakyReLU(A . item_emb), z_item = LeakyReLU(A^T . user_emb)
std::pair<Var, Var> propagate_layer(Tape& tape, const SparseMatrix& adj, Var user_emb,
                                    Var item_emb, double leaky_slope);

// Spec-level variant that draws its own dropout mask in training mode.
std::pair<Var, Var> propagate_layer(Tape& tape, const IntervalGraph& graph, Var user_emb,
                                    Var item_emb, double edge_dropout, Rng& rng, Mode mode,
                                    double leaky_slope = 0.1);

// Layered recursion e_l = z_l + e_{l-1} starting from the period's embedding
// tables; the period output combines the L layer outputs (mean by default,
// concat-then-project when projection vars are supplied).
struct EncodePeriodOut {
  Var user;
  Var item;
};

EncodePeriodOut encode_period(Tape& tape, const IntervalGraph& graph, Var user_table,
                              Var item_table, const ShortEncoderConfig& cfg, Rng& rng, Mode mode,
                              const Var* proj_user = nullptr, const Var* proj_item = nullptr);

}  // namespace selfgnn
