#include "selfgnn/model.hpp"

#include <array>
#include <stdexcept>

namespace selfgnn {

std::size_t ModelParams::reg(const std::string& name, Tensor t) {
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

ModelParams::ModelParams(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.users == 0 || cfg.items == 0) throw std::invalid_argument("ModelParams: empty graph dims");
  if (cfg.d % cfg.heads != 0) {
    throw std::invalid_argument("ModelParams: d=" + std::to_string(cfg.d) +
                                " not divisible by heads=" + std::to_string(cfg.heads));
  }
  Rng rng = make_stream(seed, Stream::Init);
  const std::size_t d = cfg.d;
  const double emb_std = 0.1;  // N(0, 0.01)

  for (std::size_t t = 0; t < cfg.periods; ++t) {
    period_user.push_back(reg("period_user_emb[" + std::to_string(t) + "]",
                              normal_init(cfg.users, d, emb_std, rng)));
    period_item.push_back(reg("period_item_emb[" + std::to_string(t) + "]",
                              normal_init(cfg.items, d, emb_std, rng)));
  }
  if (cfg.layer_combine == LayerCombine::ConcatProject && cfg.ablation.graph_propagation) {
    proj_user = reg("layer_proj_user", xavier_uniform(cfg.gnn_layers * d, d, rng));
    proj_item = reg("layer_proj_item", xavier_uniform(cfg.gnn_layers * d, d, rng));
  }

  has_interval_encoder = cfg.ablation.gru_attention;
  if (has_interval_encoder) {
    const char* gate[3] = {"z", "r", "h"};
    for (int side = 0; side < 2; ++side) {
      auto* idx = side == 0 ? gru_user : gru_item;
      const std::string pre = side == 0 ? "gru_user." : "gru_item.";
      for (int g = 0; g < 3; ++g) {
        idx[g * 3 + 0] = reg(pre + "w" + gate[g], xavier_uniform(d, d, rng));
        idx[g * 3 + 1] = reg(pre + "u" + gate[g], xavier_uniform(d, d, rng));
        idx[g * 3 + 2] = reg(pre + "b" + gate[g], Tensor::zeros({d}));
      }
    }
    const char* proj[4] = {"wq", "wk", "wv", "wo"};
    for (int side = 0; side < 2; ++side) {
      auto* idx = side == 0 ? att_user : att_item;
      const std::string pre = side == 0 ? "att_interval_user." : "att_interval_item.";
      for (int p = 0; p < 4; ++p) idx[p] = reg(pre + proj[p], xavier_uniform(d, d, rng));
    }
  }

  has_instance_encoder = cfg.ablation.instance_encoder;
  if (has_instance_encoder) {
    positional = reg("positional_emb", normal_init(cfg.max_seq, d, emb_std, rng));
    const char* proj[4] = {"wq", "wk", "wv", "wo"};
    for (std::size_t l = 0; l < cfg.att_layers; ++l) {
      std::array<std::size_t, 4> idx{};
      for (int p = 0; p < 4; ++p) {
        idx[static_cast<std::size_t>(p)] =
            reg("att_instance[" + std::to_string(l) + "]." + proj[p], xavier_uniform(d, d, rng));
      }
      att_inst.push_back(idx);
    }
  }

  has_sal = cfg.sal_params;
  if (has_sal) {
    sal_w1 = reg("sal.w1", xavier_uniform(d, cfg.d_sal, rng));
    sal_b1 = reg("sal.b1", Tensor::zeros({cfg.d_sal}));
    sal_w2 = reg("sal.w2", xavier_uniform(cfg.d_sal, 1, rng));
    sal_b2 = reg("sal.b2", Tensor::zeros({1}));
  }
}

const Tensor& ModelParams::tensor(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw std::out_of_range("ModelParams: no tensor named " + name);
}

std::vector<Var> ModelParams::lift(Tape& tape) const {
  std::vector<Var> leaves;
  leaves.reserve(tensors_.size());
  for (const auto& t : tensors_) leaves.push_back(tape.leaf(t));
  return leaves;
}

SalVars sal_vars(const ModelParams& params, const std::vector<Var>& leaves) {
  if (!params.has_sal) throw std::logic_error("sal_vars: model has no SAL parameters");
  return SalVars{leaves[params.sal_w1], leaves[params.sal_b1], leaves[params.sal_w2],
                 leaves[params.sal_b2]};
}

std::vector<std::int32_t> all_users(const ModelConfig& cfg) {
  std::vector<std::int32_t> out(cfg.users);
  for (std::size_t i = 0; i < cfg.users; ++i) out[i] = static_cast<std::int32_t>(i);
  return out;
}

Forward run_forward(Tape& tape, const ModelParams& params, const std::vector<Var>& leaves,
                    const std::vector<IntervalGraph>& graphs,
                    const std::vector<InstanceSequence>& sequences,
                    const std::vector<std::int32_t>& users, Mode mode, Rng& rng) {
  const ModelConfig& cfg = params.config();
  if (graphs.size() != cfg.periods) {
    throw std::invalid_argument("run_forward: expected " + std::to_string(cfg.periods) +
                                " interval graphs, got " + std::to_string(graphs.size()));
  }
  Forward fw;
  fw.final_users = users;

  ShortEncoderConfig scfg;
  scfg.layers = cfg.gnn_layers;
  scfg.leaky_slope = cfg.leaky_slope;
  scfg.edge_dropout = cfg.edge_dropout;
  scfg.combine = cfg.layer_combine;
  for (std::size_t t = 0; t < cfg.periods; ++t) {
    Var ut = leaves[params.period_user[t]];
    Var vt = leaves[params.period_item[t]];
    if (!cfg.ablation.graph_propagation) {
      fw.short_user.push_back(ut);
      fw.short_item.push_back(vt);
      continue;
    }
    const Var* pu = params.proj_user == ModelParams::kMissing ? nullptr : &leaves[params.proj_user];
    const Var* pv = params.proj_item == ModelParams::kMissing ? nullptr : &leaves[params.proj_item];
    auto enc = encode_period(tape, graphs[t], ut, vt, scfg, rng, mode, pu, pv);
    fw.short_user.push_back(enc.user);
    fw.short_item.push_back(enc.item);
  }

  if (params.has_interval_encoder) {
    IntervalEncoderVars ue{GruVars{leaves[params.gru_user[0]], leaves[params.gru_user[1]],
                                   leaves[params.gru_user[2]], leaves[params.gru_user[3]],
                                   leaves[params.gru_user[4]], leaves[params.gru_user[5]],
                                   leaves[params.gru_user[6]], leaves[params.gru_user[7]],
                                   leaves[params.gru_user[8]]},
                           AttentionVars{leaves[params.att_user[0]], leaves[params.att_user[1]],
                                         leaves[params.att_user[2]], leaves[params.att_user[3]]}};
    IntervalEncoderVars ie{GruVars{leaves[params.gru_item[0]], leaves[params.gru_item[1]],
                                   leaves[params.gru_item[2]], leaves[params.gru_item[3]],
                                   leaves[params.gru_item[4]], leaves[params.gru_item[5]],
                                   leaves[params.gru_item[6]], leaves[params.gru_item[7]],
                                   leaves[params.gru_item[8]]},
                           AttentionVars{leaves[params.att_item[0]], leaves[params.att_item[1]],
                                         leaves[params.att_item[2]], leaves[params.att_item[3]]}};
    fw.long_user = interval_sequence_encode(tape, fw.short_user, ue, cfg.heads);
    fw.long_item = interval_sequence_encode(tape, fw.short_item, ie, cfg.heads);
  } else {
    // -GAT: interval fusion by plain summation
    Var su = fw.short_user[0];
    Var sv = fw.short_item[0];
    for (std::size_t t = 1; t < cfg.periods; ++t) {
      su = tape.add(su, fw.short_user[t]);
      sv = tape.add(sv, fw.short_item[t]);
    }
    fw.long_user = su;
    fw.long_item = sv;
  }

  Var interval_rows = tape.gather_rows(fw.long_user, [&] {
    std::vector<std::size_t> rows;
    rows.reserve(users.size());
    for (auto u : users) rows.push_back(static_cast<std::size_t>(u));
    return rows;
  }());

  if (params.has_instance_encoder) {
    std::vector<AttentionVars> layers;
    for (const auto& idx : params.att_inst) {
      layers.push_back(AttentionVars{leaves[idx[0]], leaves[idx[1]], leaves[idx[2]], leaves[idx[3]]});
    }
    auto inst = instance_sequence_encode(tape, sequences, users, fw.long_item,
                                         leaves[params.positional], layers, cfg.heads,
                                         cfg.leaky_slope, cfg.max_seq);
    fw.instance_user = inst.user_embeddings;
    fw.empty_sequence_users = inst.empty_users;
    fw.final_user = aggregate_views(tape, interval_rows, fw.instance_user);
  } else {
    fw.instance_user = tape.constant(Tensor::zeros({users.size(), cfg.d}));
    fw.final_user = interval_rows;
  }
  return fw;
}

}  // namespace selfgnn
