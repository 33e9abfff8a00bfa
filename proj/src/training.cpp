#include "selfgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "selfgnn/metrics.hpp"

namespace selfgnn {

namespace {

std::vector<std::vector<std::int32_t>> train_items_per_user(const SplitDataset& split) {
  std::vector<std::vector<std::int32_t>> items(
      static_cast<std::size_t>(split.train.user_count));
  for (const auto& r : split.train.records) {
    items[static_cast<std::size_t>(r.user)].push_back(r.item);
  }
  return items;
}

struct ValMetrics {
  double hr10 = 0.0;
  double ndcg10 = 0.0;
};

// Ranks each sampled test user's validation item against that user's fixed
// negatives, in inference mode.
ValMetrics validation_metrics(const ModelParams& params, const SplitDataset& split,
                              const std::vector<IntervalGraph>& graphs,
                              const std::vector<InstanceSequence>& sequences) {
  ValMetrics out;
  if (split.test_users.empty()) return out;
  auto scores = score_users(params, graphs, sequences, split.test_users);
  std::size_t counted = 0;
  for (std::size_t k = 0; k < split.test_users.size(); ++k) {
    const std::int32_t u = split.test_users[k];
    const auto val = split.validation_for(u);
    if (!val) continue;
    const auto& row = scores[k];
    const auto& negs = split.negatives[k];
    std::vector<double> neg_scores;
    neg_scores.reserve(negs.size());
    for (auto j : negs) neg_scores.push_back(row[static_cast<std::size_t>(j)]);
    const std::size_t rank =
        rank_of_positive(neg_scores, negs, row[static_cast<std::size_t>(val->item)], val->item);
    out.hr10 += hr_at_n(rank, 10);
    out.ndcg10 += ndcg_at_n(rank, 10);
    ++counted;
  }
  if (counted > 0) {
    out.hr10 /= static_cast<double>(counted);
    out.ndcg10 /= static_cast<double>(counted);
  }
  return out;
}

}  // namespace

ModelConfig model_config_from(const HyperParams& hp, std::size_t users, std::size_t items,
                              const AblationFlags& ablation) {
  ModelConfig cfg;
  cfg.users = users;
  cfg.items = items;
  cfg.d = hp.d;
  cfg.periods = hp.periods;
  cfg.gnn_layers = hp.gnn_layers;
  cfg.att_layers = hp.att_layers;
  cfg.max_seq = hp.max_seq;
  cfg.d_sal = hp.d_sal;
  cfg.heads = hp.heads;
  cfg.leaky_slope = hp.leaky_slope;
  cfg.edge_dropout = hp.dropout;
  cfg.layer_combine = hp.layer_combine;
  cfg.ablation = ablation;
  // -UW removes the weight transform entirely; a lambda1==0 run keeps the
  // (unused) parameters so it matches the -SAL variant bit for bit.
  cfg.sal_params = !ablation.unit_weights;
  return cfg;
}

ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
  ModelParams params(ckpt.model_config, ckpt.rng_seed);
  if (params.count() != ckpt.tensors.size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (params.names()[i] != ckpt.names[i]) {
      throw std::runtime_error("checkpoint parameter name mismatch: " + params.names()[i] +
                               " vs " + ckpt.names[i]);
    }
    if (!params.tensor(i).same_shape(ckpt.tensors[i])) {
      throw std::runtime_error("checkpoint parameter shape mismatch for " + ckpt.names[i]);
    }
    params.tensor(i) = ckpt.tensors[i];
  }
  return params;
}

Checkpoint make_checkpoint(const ModelParams& params, const Adam& adam, const HyperParams& hp,
                           std::uint64_t epoch, double best_val_hr10,
                           std::uint64_t epochs_since_improve) {
  Checkpoint ckpt;
  ckpt.hp = hp;
  ckpt.model_config = params.config();
  ckpt.ablation = params.config().ablation;
  ckpt.names = params.names();
  ckpt.tensors = params.tensors();
  ckpt.adam_m = adam.first_moments();
  ckpt.adam_v = adam.second_moments();
  ckpt.adam_step = adam.step_count();
  ckpt.epoch = epoch;
  ckpt.rng_seed = hp.seed;
  ckpt.best_val_hr10 = best_val_hr10;
  ckpt.epochs_since_improve = epochs_since_improve;
  return ckpt;
}

std::vector<std::vector<double>> score_users(const ModelParams& params,
                                             const std::vector<IntervalGraph>& graphs,
                                             const std::vector<InstanceSequence>& sequences,
                                             const std::vector<std::int32_t>& users) {
  Tape tape;
  auto leaves = params.lift(tape);
  Rng unused(0);
  Forward fw = run_forward(tape, params, leaves, graphs, sequences, users, Mode::Inference, unused);
  const Tensor& eu = tape.value(fw.final_user);
  const Tensor& ev = tape.value(fw.long_item);
  const std::size_t d = eu.cols();
  const std::size_t J = ev.rows();
  std::vector<std::vector<double>> out(users.size(), std::vector<double>(J, 0.0));
  for (std::size_t k = 0; k < users.size(); ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += eu[k * d + c] * ev[j * d + c];
      out[k][j] = acc;
    }
  }
  return out;
}

TrainResult train(const SplitDataset& split, const std::vector<IntervalGraph>& graphs,
                  const std::vector<InstanceSequence>& sequences, const HyperParams& hp,
                  const TrainOptions& opts) {
  const auto users = static_cast<std::size_t>(split.train.user_count);
  const auto items = static_cast<std::size_t>(split.train.item_count);
  if (graphs.size() != hp.periods) {
    throw std::invalid_argument("train: graphs were built with a different T than hp.periods");
  }
  if (sequences.size() != users) {
    throw std::invalid_argument("train: sequence list does not cover all users");
  }

  ModelConfig cfg = model_config_from(hp, users, items, opts.ablation);
  ModelParams params(cfg, hp.seed);
  Adam adam;
  for (const auto& t : params.tensors()) adam.register_param(t);

  std::uint64_t start_epoch = 0;
  double best_val = -1.0;
  std::uint64_t since_improve = 0;
  if (opts.resume) {
    params = params_from_checkpoint(*opts.resume);
    adam.restore(opts.resume->adam_m, opts.resume->adam_v, opts.resume->adam_step);
    start_epoch = opts.resume->epoch;
    best_val = opts.resume->best_val_hr10;
    since_improve = opts.resume->epochs_since_improve;
  }

  const auto train_items = train_items_per_user(split);
  std::vector<std::int32_t> trainable_users;
  for (std::size_t u = 0; u < users; ++u) {
    if (!train_items[u].empty()) trainable_users.push_back(static_cast<std::int32_t>(u));
  }
  if (trainable_users.empty()) throw std::runtime_error("train: no users with training interactions");

  TrainResult result;
  result.best = make_checkpoint(params, adam, hp, start_epoch, best_val, since_improve);

  const bool use_sal = hp.lambda1 > 0.0;
  for (std::uint64_t epoch = start_epoch; epoch < hp.epochs; ++epoch) {
    const double lr_e = hp.lr * std::pow(hp.lr_decay, static_cast<double>(epoch));
    std::vector<std::int32_t> order = trainable_users;
    make_stream(hp.seed, Stream::Shuffle, epoch).shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr_e;
    const std::size_t num_batches = (order.size() + hp.batch - 1) / hp.batch;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * hp.batch;
      const std::size_t hi = std::min(order.size(), lo + hp.batch);
      std::vector<std::int32_t> batch_users(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                            order.begin() + static_cast<std::ptrdiff_t>(hi));
      try {
      Tape tape;
      auto leaves = params.lift(tape);
      Rng drop_rng = make_stream(hp.seed, Stream::EdgeDropout, epoch, b);
      Forward fw = run_forward(tape, params, leaves, graphs, sequences, batch_users, Mode::Train,
                               drop_rng);

      Rng pos_rng = make_stream(hp.seed, Stream::PosSample, epoch, b);
      Rng neg_rng = make_stream(hp.seed, Stream::NegSample, epoch, b);
      std::vector<std::size_t> user_rows, pos_items, neg_items;
      for (std::size_t k = 0; k < batch_users.size(); ++k) {
        const auto& owned = train_items[static_cast<std::size_t>(batch_users[k])];
        const auto negs = sample_negatives(split, batch_users[k], hp.n_pr, neg_rng);
        for (std::size_t p = 0; p < hp.n_pr; ++p) {
          user_rows.push_back(k);
          pos_items.push_back(
              static_cast<std::size_t>(owned[static_cast<std::size_t>(pos_rng.below(owned.size()))]));
          neg_items.push_back(static_cast<std::size_t>(negs[p]));
        }
      }
      Var u_rows = tape.gather_rows(fw.final_user, user_rows);
      Var pos_rows = tape.gather_rows(fw.long_item, pos_items);
      Var neg_rows = tape.gather_rows(fw.long_item, neg_items);
      Var l_rec = rec_loss(tape, predict_scores(tape, u_rows, pos_rows),
                           predict_scores(tape, u_rows, neg_rows));

      std::optional<Var> l_sal;
      if (use_sal) {
        Rng ssl_rng = make_stream(hp.seed, Stream::SslPairs, epoch, b);
        auto pairs = sample_ssl_edge_pairs(graphs, batch_users, hp.n_sal, ssl_rng, hp.ssl_scope);
        SalLossOptions so;
        so.stop_long_term = true;
        so.unit_weights = opts.ablation.unit_weights;
        so.leaky_slope = hp.leaky_slope;
        SalVars sv{};
        if (params.has_sal) sv = sal_vars(params, leaves);
        l_sal = sal_loss(tape, pairs, fw.short_user, fw.short_item, fw.long_user, fw.long_item,
                         params.has_sal ? &sv : nullptr, so);
      }
      Var l_reg = l2_regularization(tape, leaves);
      LossBreakdown bd;
      Var total = total_loss(tape, l_rec, l_sal, l_reg, hp.lambda1, hp.lambda2, &bd);
      if (!std::isfinite(bd.total)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(b));
      }
      tape.backward(total);

      std::vector<Tensor*> ptrs;
      std::vector<Tensor> grads;
      ptrs.reserve(leaves.size());
      grads.reserve(leaves.size());
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        ptrs.push_back(&params.tensor(i));
        grads.push_back(tape.grad(leaves[i]));
      }
      adam.step(ptrs, grads, lr_e);

      stats.loss.l_rec += bd.l_rec;
      stats.loss.l_sal += bd.l_sal;
      stats.loss.l_reg += bd.l_reg;
      stats.loss.total += bd.total;
      stats.loss.lambda1 = bd.lambda1;
      stats.loss.lambda2 = bd.lambda2;
      } catch (const std::runtime_error&) {
        throw;
      } catch (const std::exception& e) {
        // non-finite values surface as domain errors inside the forward pass
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(b) + ": " + e.what());
      }
    }

    const ValMetrics vm = validation_metrics(params, split, graphs, sequences);
    stats.val_hr10 = vm.hr10;
    stats.val_ndcg10 = vm.ndcg10;
    result.history.push_back(stats);
    if (opts.on_epoch) opts.on_epoch(stats);

    if (vm.hr10 > best_val) {
      best_val = vm.hr10;
      since_improve = 0;
      result.best = make_checkpoint(params, adam, hp, epoch + 1, best_val, since_improve);
      if (!opts.best_path.empty()) save_checkpoint(opts.best_path, result.best);
    } else {
      ++since_improve;
      if (hp.patience > 0 && since_improve >= hp.patience) {
        break;
      }
    }
  }

  const std::uint64_t completed =
      result.history.empty() ? start_epoch : result.history.back().epoch + 1;
  result.final_state = make_checkpoint(params, adam, hp, completed, best_val, since_improve);
  if (!opts.last_path.empty()) save_checkpoint(opts.last_path, result.final_state);
  if (!opts.best_path.empty() && result.history.empty()) {
    save_checkpoint(opts.best_path, result.best);
  }
  return result;
}

}  // namespace selfgnn
