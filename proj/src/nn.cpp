#include "selfgnn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace selfgnn {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

Var gru_cell(Tape& tape, Var x, Var h_prev, const GruVars& p) {
  const Tensor& vx = tape.value(x);
  const Tensor& vh = tape.value(h_prev);
  if (vx.rows() != vh.rows() || vh.cols() != tape.value(p.uz).rows()) {
    throw std::invalid_argument("gru_cell: shape mismatch");
  }
  Var z = tape.sigmoid(tape.add_rowvec(tape.add(tape.matmul(x, p.wz), tape.matmul(h_prev, p.uz)), p.bz));
  Var r = tape.sigmoid(tape.add_rowvec(tape.add(tape.matmul(x, p.wr), tape.matmul(h_prev, p.ur)), p.br));
  Var hc = tape.tanh(tape.add_rowvec(
      tape.add(tape.matmul(x, p.wh), tape.matmul(tape.mul(r, h_prev), p.uh)), p.bh));
  // h' = h - z.h + z.hc
  return tape.add(tape.sub(h_prev, tape.mul(z, h_prev)), tape.mul(z, hc));
}

AttentionOut multi_head_attention(Tape& tape, Var seq, std::size_t batch, std::size_t len,
                                  const AttentionVars& p, std::size_t heads,
                                  std::vector<std::uint8_t> mask) {
  const Tensor& vs = tape.value(seq);
  const std::size_t d = vs.cols();
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("multi_head_attention: d=" + std::to_string(d) +
                                " not divisible by heads=" + std::to_string(heads));
  }
  if (vs.rows() != batch * len) {
    throw std::invalid_argument("multi_head_attention: expected batch*len rows");
  }
  if (!mask.empty() && mask.size() != batch * len) {
    throw std::invalid_argument("multi_head_attention: mask length mismatch");
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Var q = tape.matmul(seq, p.wq);
  Var k = tape.matmul(seq, p.wk);
  Var v = tape.matmul(seq, p.wv);

  AttentionOut out;
  std::vector<Var> contexts;
  contexts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = tape.affine(tape.bmm(qh, kh, batch, /*transpose_b=*/true), inv_sqrt, 0.0);
    Var probs = tape.att_softmax(scores, batch, len, mask);
    out.head_probs.push_back(probs);
    contexts.push_back(tape.bmm(probs, vh, batch, /*transpose_b=*/false));
  }
  Var ctx = heads == 1 ? contexts[0] : tape.concat_cols(contexts);
  out.output = tape.matmul(ctx, p.wo);
  return out;
}

}  // namespace selfgnn
