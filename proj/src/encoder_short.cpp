#include "selfgnn/encoder_short.hpp"

#include <stdexcept>

namespace selfgnn {

SparseMatrix apply_edge_dropout(const SparseMatrix& a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("apply_edge_dropout: p must be in [0,1)");
  if (p == 0.0) return a;
  const double scale = 1.0 / (1.0 - p);
  std::vector<SparseEntry> kept;
  kept.reserve(a.entries().size());
  for (const auto& e : a.entries()) {
    if (!rng.bernoulli(p)) kept.push_back({e.row, e.col, e.value * scale});
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(kept));
}

std::pair<Var, Var> propagate_layer(Tape& tape, const SparseMatrix& adj, Var user_emb,
                                    Var item_emb, double leaky_slope) {
  if (tape.value(user_emb).rows() != adj.rows() || tape.value(item_emb).rows() != adj.cols()) {
    throw std::invalid_argument("propagate_layer: embedding row counts do not match graph dims");
  }
  Var z_user = tape.leaky_relu(tape.spmm(adj, item_emb), leaky_slope);
  // A^T . user_emb realized by reusing the same entry list with sides swapped
  std::vector<SparseEntry> swapped;
  swapped.reserve(adj.entries().size());
  for (const auto& e : adj.entries()) swapped.push_back({e.col, e.row, e.value});
  SparseMatrix adj_t(adj.cols(), adj.rows(), std::move(swapped));
  Var z_item = tape.leaky_relu(tape.spmm(adj_t, user_emb), leaky_slope);
  return {z_user, z_item};
}

std::pair<Var, Var> propagate_layer(Tape& tape, const IntervalGraph& graph, Var user_emb,
                                    Var item_emb, double edge_dropout, Rng& rng, Mode mode,
                                    double leaky_slope) {
  if (mode == Mode::Train && edge_dropout > 0.0) {
    return propagate_layer(tape, apply_edge_dropout(graph.adjacency, edge_dropout, rng), user_emb,
                           item_emb, leaky_slope);
  }
  return propagate_layer(tape, graph.adjacency, user_emb, item_emb, leaky_slope);
}

EncodePeriodOut encode_period(Tape& tape, const IntervalGraph& graph, Var user_table,
                              Var item_table, const ShortEncoderConfig& cfg, Rng& rng, Mode mode,
                              const Var* proj_user, const Var* proj_item) {
  if (cfg.layers < 1) throw std::invalid_argument("encode_period: layers must be >= 1");
  Var eu = user_table;
  Var ev = item_table;
  std::vector<Var> layer_user, layer_item;
  layer_user.reserve(cfg.layers);
  layer_item.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    auto [zu, zv] = propagate_layer(tape, graph, eu, ev, cfg.edge_dropout, rng, mode,
                                    cfg.leaky_slope);
    eu = tape.add(zu, eu);
    ev = tape.add(zv, ev);
    layer_user.push_back(eu);
    layer_item.push_back(ev);
  }
  if (cfg.combine == LayerCombine::ConcatProject) {
    if (!proj_user || !proj_item) {
      throw std::invalid_argument("encode_period: concat_project requires projection matrices");
    }
    return {tape.matmul(tape.concat_cols(layer_user), *proj_user),
            tape.matmul(tape.concat_cols(layer_item), *proj_item)};
  }
  Var su = layer_user[0];
  Var sv = layer_item[0];
  for (std::size_t l = 1; l < cfg.layers; ++l) {
    su = tape.add(su, layer_user[l]);
    sv = tape.add(sv, layer_item[l]);
  }
  const double inv = 1.0 / static_cast<double>(cfg.layers);
  return {tape.affine(su, inv, 0.0), tape.affine(sv, inv, 0.0)};
}

}  // namespace selfgnn
