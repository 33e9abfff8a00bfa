#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfgnn/autograd.hpp"
#include "selfgnn/data.hpp"
#include "selfgnn/encoder_long.hpp"
#include "selfgnn/encoder_short.hpp"
#include "selfgnn/losses.hpp"
#include "selfgnn/nn.hpp"

namespace selfgnn {

// Structural ablation switches (Table-style variants).
struct AblationFlags {
  bool unit_weights = false;       // -UW: every personalized weight is exactly 1
  bool instance_encoder = true;    // -ATL off: final user feature = interval-level only
  bool gru_attention = true;       // -GAT off: long-term = plain sum of period embeddings
  bool graph_propagation = true;   // -CF off: short-term embedding = raw period table
};

struct ModelConfig {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t d = 64;
  std::size_t periods = 4;       // T
  std::size_t gnn_layers = 2;    // L
  std::size_t att_layers = 2;    // L_a
  std::size_t max_seq = 50;      // M
  std::size_t d_sal = 16;
  std::size_t heads = 4;
  double leaky_slope = 0.1;
  double edge_dropout = 0.5;
  LayerCombine layer_combine = LayerCombine::Mean;
  bool sal_params = true;  // allocate W1/b1/W2/b2
  AblationFlags ablation;
};

// All trainable tensors, with stable names and registration order. The
// registration order defines optimizer-state and checkpoint layout.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::size_t count() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(const std::string& name) const;

  // Registers every parameter on the tape as a leaf, in registration order.
  std::vector<Var> lift(Tape& tape) const;

  // role -> registry index maps (kMissing when the variant omits the role)
  static constexpr std::size_t kMissing = static_cast<std::size_t>(-1);
  std::vector<std::size_t> period_user, period_item;
  std::size_t proj_user = kMissing, proj_item = kMissing;
  std::size_t gru_user[9] = {};  // wz uz bz wr ur br wh uh bh
  std::size_t gru_item[9] = {};
  std::size_t att_user[4] = {};  // wq wk wv wo
  std::size_t att_item[4] = {};
  std::size_t positional = kMissing;
  std::vector<std::array<std::size_t, 4>> att_inst;
  std::size_t sal_w1 = kMissing, sal_b1 = kMissing, sal_w2 = kMissing, sal_b2 = kMissing;
  bool has_interval_encoder = false;
  bool has_instance_encoder = false;
  bool has_sal = false;

 private:
  std::size_t reg(const std::string& name, Tensor t);

  ModelConfig cfg_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// Handles into one forward pass.
struct Forward {
  std::vector<Var> short_user;  // per period, [I x d]
  std::vector<Var> short_item;  // per period, [J x d]
  Var long_user;                // interval-level user features, [I x d]
  Var long_item;                // interval-level item features, [J x d]
  std::vector<std::int32_t> final_users;  // users covered by the rows below
  Var instance_user;            // [B x d]; zeros when the instance encoder is ablated
  Var final_user;               // [B x d], aggregated user features
  std::size_t empty_sequence_users = 0;
};

// Runs the full encoder stack on a tape. `leaves` must come from
// ModelParams::lift on the same tape. `users` selects the rows for the
// instance-level and final user features (typically the current batch, or
// all users at evaluation time). In training mode each propagation layer
// draws a fresh edge-dropout mask from `rng`.
Forward run_forward(Tape& tape, const ModelParams& params, const std::vector<Var>& leaves,
                    const std::vector<IntervalGraph>& graphs,
                    const std::vector<InstanceSequence>& sequences,
                    const std::vector<std::int32_t>& users, Mode mode, Rng& rng);

SalVars sal_vars(const ModelParams& params, const std::vector<Var>& leaves);

std::vector<std::int32_t> all_users(const ModelConfig& cfg);

}  // namespace selfgnn
