#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selfgnn/checkpoint.hpp"
#include "selfgnn/data.hpp"
#include "selfgnn/losses.hpp"
#include "selfgnn/model.hpp"

namespace selfgnn {

struct EpochStats {
  std::size_t epoch = 0;
  LossBreakdown loss;  // summed over the epoch's batches
  double lr = 0.0;
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
};

struct TrainResult {
  Checkpoint best;         // best validation HR@10 (final state when no validation)
  Checkpoint final_state;  // resumable end-of-run state
  std::vector<EpochStats> history;
};

struct TrainOptions {
  AblationFlags ablation;
  // When set, the best checkpoint is rewritten whenever validation improves
  // and the final state is written at the end of the run.
  std::string best_path;
  std::string last_path;
  std::function<void(const EpochStats&)> on_epoch;
  const Checkpoint* resume = nullptr;
};

// Epoch loop: per batch of shuffled users, encode all periods (fresh edge
// dropout), run both long-term encoders, accumulate the hinge loss over
// n_pr positive/negative pairs per user, add the per-period SAL hinge over
// sampled edge pairs (skipped entirely when lambda1 == 0) plus L2
// regularization, and take one Adam step. Learning rate for epoch e is
// lr * lr_decay^e. Throws on non-finite loss, naming the offending batch.
TrainResult train(const SplitDataset& split, const std::vector<IntervalGraph>& graphs,
                  const std::vector<InstanceSequence>& sequences, const HyperParams& hp,
                  const TrainOptions& opts = {});

ModelConfig model_config_from(const HyperParams& hp, std::size_t users, std::size_t items,
                              const AblationFlags& ablation);

// Inference-mode scores for the given users against all items:
// score(u, j) = final_user[u] . long_item[j]. Returns one row per user.
std::vector<std::vector<double>> score_users(const ModelParams& params,
                                             const std::vector<IntervalGraph>& graphs,
                                             const std::vector<InstanceSequence>& sequences,
                                             const std::vector<std::int32_t>& users);

ModelParams params_from_checkpoint(const Checkpoint& ckpt);
Checkpoint make_checkpoint(const ModelParams& params, const Adam& adam, const HyperParams& hp,
                           std::uint64_t epoch, double best_val_hr10,
                           std::uint64_t epochs_since_improve);

}  // namespace selfgnn
