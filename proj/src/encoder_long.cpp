#include "selfgnn/encoder_long.hpp"

#include <stdexcept>

namespace selfgnn {

Var interval_sequence_encode(Tape& tape, const std::vector<Var>& period_embeddings,
                             const IntervalEncoderVars& p, std::size_t heads) {
  if (period_embeddings.empty()) {
    throw std::invalid_argument("interval_sequence_encode: no periods");
  }
  const std::size_t T = period_embeddings.size();
  const std::size_t entities = tape.value(period_embeddings[0]).rows();
  const auto shape = tape.value(period_embeddings[0]).shape();
  Var h = tape.constant(Tensor::zeros(shape));
  std::vector<Var> hidden;
  hidden.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    h = gru_cell(tape, period_embeddings[t], h, p.gru);
    hidden.push_back(h);
  }
  Var seq = tape.stack_timesteps(hidden);  // [N*T x d]
  AttentionOut att = multi_head_attention(tape, seq, entities, T, p.att, heads);
  return tape.sum_chunks(att.output, T);
}

InstanceEncodeResult instance_sequence_encode(Tape& tape,
                                              const std::vector<InstanceSequence>& all_sequences,
                                              const std::vector<std::int32_t>& users,
                                              Var item_long, Var positional,
                                              const std::vector<AttentionVars>& layers,
                                              std::size_t heads, double leaky_slope,
                                              std::size_t max_seq) {
  const std::size_t B = users.size();
  const std::size_t M = max_seq;
  const std::size_t d = tape.value(item_long).cols();
  if (tape.value(positional).rows() != M) {
    throw std::invalid_argument("instance_sequence_encode: positional table rows != max_seq");
  }

  InstanceEncodeResult res;
  std::vector<std::size_t> flat(B * M, kPadRow);
  std::vector<std::uint8_t> mask(B * M, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto u = static_cast<std::size_t>(users[b]);
    if (u >= all_sequences.size()) {
      throw std::out_of_range("instance_sequence_encode: unknown user");
    }
    const auto& seq = all_sequences[u];
    const std::size_t len = std::min(seq.item_ids.size(), M);
    if (len == 0) ++res.empty_users;
    // left padding: the most recent items occupy the tail positions
    const std::size_t start = M - len;
    const std::size_t skip = seq.item_ids.size() - len;
    for (std::size_t m = 0; m < len; ++m) {
      flat[b * M + start + m] = static_cast<std::size_t>(seq.item_ids[skip + m]);
      mask[b * M + start + m] = 1;
    }
  }

  Tensor mask_expand({B * M, d});
  for (std::size_t r = 0; r < B * M; ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < d; ++c) mask_expand[r * d + c] = 1.0;
  }

  Var gathered = tape.gather_rows(item_long, flat);
  Var with_pos = tape.add(gathered, tape.tile_rows(positional, B));
  Var s = tape.mul(with_pos, tape.constant(std::move(mask_expand)));
  for (const auto& layer : layers) {
    AttentionOut att = multi_head_attention(tape, s, B, M, layer, heads, mask);
    s = tape.add(tape.leaky_relu(att.output, leaky_slope), s);
  }
  res.user_embeddings = tape.sum_chunks(s, M);
  return res;
}

Var aggregate_views(Tape& tape, Var interval_user, Var instance_user) {
  return tape.add(interval_user, instance_user);
}

}  // namespace selfgnn
