#pragma once

#include <array>
#include <optional>
#include <vector>

#include "selfgnn/autograd.hpp"
#include "selfgnn/data.hpp"

namespace selfgnn {

// Dot-product prediction scores for row-aligned user/item embeddings:
// scores[k] = sum_c user_rows[k,c] * item_rows[k,c]  -> [P x 1]
Var predict_scores(Tape& tape, Var user_rows, Var item_rows);

// Pairwise hinge: sum_k max(0, 1 - pos[k] + neg[k]). Subgradient at the kink
// is 0.
Var rec_loss(Tape& tape, Var pos_scores, Var neg_scores);

// Likelihood of interaction: s = sum_c LeakyReLU(u_c * v_c) -> [P x 1].
// Used identically for short-term and long-term embeddings.
Var likelihood_scores(Tape& tape, Var user_rows, Var item_rows, double leaky_slope);

struct SalVars {
  Var w1;  // d x d_sal
  Var b1;  // d_sal
  Var w2;  // d_sal x 1
  Var b2;  // 1
};

// w = sigm(LeakyReLU((e_long + e_short + e_long . e_short) W1 + b1) W2 + b2),
// one scalar per row, strictly in (0, 1).
Var personalized_weights(Tape& tape, Var long_user_rows, Var short_user_rows, const SalVars& p,
                         double leaky_slope);

struct SalLossOptions {
  // Cut gradient flow through the long-term likelihood scores (the weight
  // path through the long-term embeddings stays trainable).
  bool stop_long_term = true;
  bool unit_weights = false;  // -UW ablation: w == 1 exactly
  double leaky_slope = 0.1;
  // Finite-difference oracles must differentiate the same function the
  // backward pass does: with the stop marker on, the long-term scores are
  // constants. When set, s_bar values come from here ([period][pair] ->
  // {first, second}) instead of being recomputed from the embeddings.
  const std::vector<std::vector<std::array<double, 2>>>* frozen_long_scores = nullptr;
};

// Trace of the per-period intermediates, for gradient analysis tests.
struct SalTrace {
  std::vector<Var> short_first, short_second;  // s_t per pair
  std::vector<Var> long_first, long_second;    // s_bar per pair (post stop-grad)
  std::vector<Var> weight_first, weight_second;
};

// Hinge alignment of short-term and weighted long-term score differences:
//   sum_t sum_pairs max(0, 1 - d1 * d2)
//   d1 = w . s_bar - w' . s_bar',  d2 = s_t - s_t'
Var sal_loss(Tape& tape, const std::vector<std::vector<EdgePair>>& pairs_per_period,
             const std::vector<Var>& short_user, const std::vector<Var>& short_item,
             Var long_user, Var long_item, const SalVars* params, const SalLossOptions& opt,
             SalTrace* trace = nullptr);

// Sum of squared Frobenius norms over all trainable leaves.
Var l2_regularization(Tape& tape, const std::vector<Var>& leaves);

struct LossBreakdown {
  double l_rec = 0.0;
  double l_sal = 0.0;
  double l_reg = 0.0;
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

// total = l_rec + lambda1 * l_sal + lambda2 * l_reg, associated left to
// right so the reported breakdown reproduces the tape value exactly.
Var total_loss(Tape& tape, Var rec, std::optional<Var> sal, Var reg, double lambda1,
               double lambda2, LossBreakdown* breakdown = nullptr);

}  // namespace selfgnn
