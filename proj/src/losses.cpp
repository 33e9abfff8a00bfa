#include "selfgnn/losses.hpp"

#include <stdexcept>

namespace selfgnn {

Var predict_scores(Tape& tape, Var user_rows, Var item_rows) {
  return tape.row_sum(tape.mul(user_rows, item_rows));
}

Var rec_loss(Tape& tape, Var pos_scores, Var neg_scores) {
  if (!tape.value(pos_scores).same_shape(tape.value(neg_scores))) {
    throw std::invalid_argument("rec_loss: positive/negative score lists differ in length");
  }
  // 1 - pos + neg
  Var margin = tape.affine(tape.sub(pos_scores, neg_scores), -1.0, 1.0);
  return tape.sum_all(tape.relu(margin));
}

Var likelihood_scores(Tape& tape, Var user_rows, Var item_rows, double leaky_slope) {
  return tape.row_sum(tape.leaky_relu(tape.mul(user_rows, item_rows), leaky_slope));
}

Var personalized_weights(Tape& tape, Var long_user_rows, Var short_user_rows, const SalVars& p,
                         double leaky_slope) {
  Var mixed = tape.add(tape.add(long_user_rows, short_user_rows),
                       tape.mul(long_user_rows, short_user_rows));
  Var gamma = tape.leaky_relu(tape.add_rowvec(tape.matmul(mixed, p.w1), p.b1), leaky_slope);
  return tape.sigmoid(tape.add_rowvec(tape.matmul(gamma, p.w2), p.b2));
}

Var sal_loss(Tape& tape, const std::vector<std::vector<EdgePair>>& pairs_per_period,
             const std::vector<Var>& short_user, const std::vector<Var>& short_item,
             Var long_user, Var long_item, const SalVars* params, const SalLossOptions& opt,
             SalTrace* trace) {
  if (pairs_per_period.size() != short_user.size() || short_user.size() != short_item.size()) {
    throw std::invalid_argument("sal_loss: per-period inputs differ in length");
  }
  if (!opt.unit_weights && params == nullptr) {
    throw std::invalid_argument("sal_loss: weight parameters required");
  }
  Var acc = tape.constant(Tensor::scalar(0.0));
  for (std::size_t t = 0; t < pairs_per_period.size(); ++t) {
    const auto& pairs = pairs_per_period[t];
    if (pairs.empty()) continue;
    std::vector<std::size_t> u1, v1, u2, v2;
    u1.reserve(pairs.size());
    for (const auto& pr : pairs) {
      u1.push_back(static_cast<std::size_t>(pr.u));
      v1.push_back(static_cast<std::size_t>(pr.v));
      u2.push_back(static_cast<std::size_t>(pr.u2));
      v2.push_back(static_cast<std::size_t>(pr.v2));
    }
    Var eu1 = tape.gather_rows(short_user[t], u1);
    Var ev1 = tape.gather_rows(short_item[t], v1);
    Var eu2 = tape.gather_rows(short_user[t], u2);
    Var ev2 = tape.gather_rows(short_item[t], v2);
    Var lu1 = tape.gather_rows(long_user, u1);
    Var lv1 = tape.gather_rows(long_item, v1);
    Var lu2 = tape.gather_rows(long_user, u2);
    Var lv2 = tape.gather_rows(long_item, v2);

    Var s1 = likelihood_scores(tape, eu1, ev1, opt.leaky_slope);
    Var s2 = likelihood_scores(tape, eu2, ev2, opt.leaky_slope);
    Var sbar1, sbar2;
    if (opt.frozen_long_scores) {
      const auto& frozen = (*opt.frozen_long_scores)[t];
      Tensor f1({pairs.size(), 1}), f2({pairs.size(), 1});
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        f1[i] = frozen[i][0];
        f2[i] = frozen[i][1];
      }
      sbar1 = tape.constant(std::move(f1));
      sbar2 = tape.constant(std::move(f2));
    } else {
      sbar1 = likelihood_scores(tape, lu1, lv1, opt.leaky_slope);
      sbar2 = likelihood_scores(tape, lu2, lv2, opt.leaky_slope);
      if (opt.stop_long_term) {
        sbar1 = tape.stop_gradient(sbar1);
        sbar2 = tape.stop_gradient(sbar2);
      }
    }

    Var w1, w2;
    if (opt.unit_weights) {
      w1 = tape.constant(Tensor::full({pairs.size(), 1}, 1.0));
      w2 = tape.constant(Tensor::full({pairs.size(), 1}, 1.0));
    } else {
      w1 = personalized_weights(tape, lu1, eu1, *params, opt.leaky_slope);
      w2 = personalized_weights(tape, lu2, eu2, *params, opt.leaky_slope);
    }

    Var d1 = tape.sub(tape.mul(w1, sbar1), tape.mul(w2, sbar2));
    Var d2 = tape.sub(s1, s2);
    Var hinge = tape.relu(tape.affine(tape.mul(d1, d2), -1.0, 1.0));
    acc = tape.add(acc, tape.sum_all(hinge));

    if (trace) {
      trace->short_first.push_back(s1);
      trace->short_second.push_back(s2);
      trace->long_first.push_back(sbar1);
      trace->long_second.push_back(sbar2);
      trace->weight_first.push_back(w1);
      trace->weight_second.push_back(w2);
    }
  }
  return acc;
}

Var l2_regularization(Tape& tape, const std::vector<Var>& leaves) {
  Var acc = tape.constant(Tensor::scalar(0.0));
  for (Var leaf : leaves) {
    acc = tape.add(acc, tape.sum_all(tape.mul(leaf, leaf)));
  }
  return acc;
}

Var total_loss(Tape& tape, Var rec, std::optional<Var> sal, Var reg, double lambda1,
               double lambda2, LossBreakdown* breakdown) {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw std::invalid_argument("total_loss: loss weights must be non-negative");
  }
  Var total = rec;
  if (sal.has_value()) total = tape.add(total, tape.affine(*sal, lambda1, 0.0));
  total = tape.add(total, tape.affine(reg, lambda2, 0.0));
  if (breakdown) {
    breakdown->l_rec = tape.value(rec).item();
    breakdown->l_sal = sal.has_value() ? tape.value(*sal).item() : 0.0;
    breakdown->l_reg = tape.value(reg).item();
    breakdown->total = tape.value(total).item();
    breakdown->lambda1 = lambda1;
    breakdown->lambda2 = lambda2;
  }
  return total;
}

}  // namespace selfgnn
