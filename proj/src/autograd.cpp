#include "selfgnn/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace selfgnn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> backprop) {
  nodes_.push_back(Node{std::move(value), std::move(backprop)});
  grads_.emplace_back();
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) {
    throw std::out_of_range("Tape: variable " + std::to_string(v.id) + " is not on this tape");
  }
}

Tensor& Tape::grad_buf(std::uint32_t id) {
  if (grads_[id].empty()) {
    grads_[id] = Tensor::zeros(nodes_[id].value.shape());
  }
  return grads_[id];
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  if (!grads_[v.id].empty()) return grads_[v.id];
  zero_like_ = Tensor::zeros(nodes_[v.id].value.shape());
  return zero_like_;
}

void Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  if (ran_backward_) {
    throw std::logic_error("backward: tape already consumed");
  }
  ran_backward_ = true;
  grad_buf(loss.id)[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    if (grads_[i].empty()) continue;
    if (nodes_[i].backprop) nodes_[i].backprop(*this, grads_[i]);
  }
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::constant(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::stop_gradient(Var x) {
  check(x);
  return push(nodes_[x.id].value, nullptr);
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& va = nodes_[a.id].value;
  const Tensor& vb = nodes_[b.id].value;
  check_same_shape(va, vb, "add");
  Tensor out = va;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& va = nodes_[a.id].value;
  const Tensor& vb = nodes_[b.id].value;
  check_same_shape(va, vb, "sub");
  Tensor out = va;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& va = nodes_[a.id].value;
  const Tensor& vb = nodes_[b.id].value;
  check_same_shape(va, vb, "mul");
  Tensor out = va;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    const Tensor& va = t.nodes_[a.id].value;
    const Tensor& vb = t.nodes_[b.id].value;
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

Var Tape::affine(Var x, double alpha, double beta) {
  check(x);
  Tensor out = nodes_[x.id].value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = alpha * out[i] + beta;
  return push(std::move(out), [x, alpha](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += alpha * g[i];
  });
}

Var Tape::add_rowvec(Var a, Var v) {
  check(a);
  check(v);
  const Tensor& va = nodes_[a.id].value;
  const Tensor& vv = nodes_[v.id].value;
  const std::size_t n = va.cols();
  if (vv.numel() != n) {
    throw std::invalid_argument("add_rowvec: vector length " + std::to_string(vv.numel()) +
                                " vs " + std::to_string(n) + " columns");
  }
  Tensor out = va;
  const std::size_t m = va.rows();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += vv[c];
  }
  return push(std::move(out), [a, v, m, n](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gv = t.grad_buf(v.id);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        ga[r * n + c] += g[r * n + c];
        gv[c] += g[r * n + c];
      }
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& va = nodes_[a.id].value;
  const Tensor& vb = nodes_[b.id].value;
  const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
  if (vb.rows() != k) {
    throw std::invalid_argument("matmul: " + va.shape_str() + " x " + vb.shape_str());
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = va[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * vb[p * n + j];
    }
  }
  return push(std::move(out), [a, b, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& va = t.nodes_[a.id].value;
    const Tensor& vb = t.nodes_[b.id].value;
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    // dA = g . B^T
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * vb[p * n + j];
        ga[i * k + p] += acc;
      }
    }
    // dB = A^T . g
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t i = 0; i < m; ++i) {
        const double av = va[i * k + p];
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
      }
    }
  });
}

Var Tape::spmm(const SparseMatrix& a, Var b) {
  check(b);
  Tensor out = a.multiply(nodes_[b.id].value);
  // The sparse matrix is captured by value: tapes may outlive the caller's
  // dropout-masked copy.
  SparseMatrix held = a;
  return push(std::move(out), [b, held = std::move(held)](Tape& t, const Tensor& g) {
    Tensor gb = held.multiply_transposed(g);
    Tensor& acc = t.grad_buf(b.id);
    for (std::size_t i = 0; i < gb.numel(); ++i) acc[i] += gb[i];
  });
}

Var Tape::bmm(Var a, Var b, std::size_t batch, bool transpose_b) {
  check(a);
  check(b);
  const Tensor& va = nodes_[a.id].value;
  const Tensor& vb = nodes_[b.id].value;
  if (batch == 0 || va.rows() % batch != 0 || vb.rows() % batch != 0) {
    throw std::invalid_argument("bmm: rows not divisible by batch");
  }
  const std::size_t n = va.rows() / batch;
  const std::size_t k = va.cols();
  std::size_t m;
  if (transpose_b) {
    if (vb.cols() != k) throw std::invalid_argument("bmm: inner dim mismatch (nt)");
    m = vb.rows() / batch;
  } else {
    if (vb.rows() / batch != k) throw std::invalid_argument("bmm: inner dim mismatch (nn)");
    m = vb.cols();
  }
  Tensor out({batch * n, m});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* A = va.data() + bi * n * k;
    double* O = out.data() + bi * n * m;
    if (transpose_b) {
      const double* B = vb.data() + bi * m * k;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
          O[i * m + j] = acc;
        }
    } else {
      const double* B = vb.data() + bi * k * m;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) O[i * m + j] += av * B[p * m + j];
        }
    }
  }
  return push(std::move(out), [a, b, batch, transpose_b, n, k, m](Tape& t, const Tensor& g) {
    const Tensor& va = t.nodes_[a.id].value;
    const Tensor& vb = t.nodes_[b.id].value;
    Tensor& ga = t.grad_buf(a.id);
    Tensor& gb = t.grad_buf(b.id);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double* A = va.data() + bi * n * k;
      const double* G = g.data() + bi * n * m;
      double* dA = ga.data() + bi * n * k;
      if (transpose_b) {
        // out = A B^T: dA += G B ; dB += G^T A
        const double* B = vb.data() + bi * m * k;
        double* dB = gb.data() + bi * m * k;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += G[i * m + j] * B[j * k + p];
            dA[i * k + p] += acc;
          }
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += G[i * m + j] * A[i * k + p];
            dB[j * k + p] += acc;
          }
      } else {
        // out = A B: dA += G B^T ; dB += A^T G
        const double* B = vb.data() + bi * k * m;
        double* dB = gb.data() + bi * k * m;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += G[i * m + j] * B[p * m + j];
            dA[i * k + p] += acc;
          }
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t i = 0; i < n; ++i) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) dB[p * m + j] += av * G[i * m + j];
          }
      }
    }
  });
}

Var Tape::leaky_relu(Var x, double slope) {
  check(x);
  if (!(slope > 0.0 && slope < 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
  }
  const Tensor& vx = nodes_[x.id].value;
  check_finite(vx, "leaky_relu");
  Tensor out = vx;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (out[i] < 0.0) out[i] *= slope;
  }
  return push(std::move(out), [x, slope](Tape& t, const Tensor& g) {
    const Tensor& vx = t.nodes_[x.id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      gx[i] += (vx[i] >= 0.0 ? 1.0 : slope) * g[i];
    }
  });
}

Var Tape::sigmoid(Var x) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  check_finite(vx, "sigmoid");
  Tensor out = vx;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = out[i];
    // branch keeps exp argument non-positive for stability at both tails
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(std::move(out), [x, self = Var{static_cast<std::uint32_t>(nodes_.size())}](
                                  Tape& t, const Tensor& g) {
    const Tensor& y = t.nodes_[self.id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += y[i] * (1.0 - y[i]) * g[i];
  });
}

Var Tape::tanh(Var x) {
  check(x);
  Tensor out = nodes_[x.id].value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  return push(std::move(out), [x, self = Var{static_cast<std::uint32_t>(nodes_.size())}](
                                  Tape& t, const Tensor& g) {
    const Tensor& y = t.nodes_[self.id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += (1.0 - y[i] * y[i]) * g[i];
  });
}

Var Tape::relu(Var x) {
  check(x);
  Tensor out = nodes_[x.id].value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (out[i] < 0.0) out[i] = 0.0;
  }
  return push(std::move(out), [x](Tape& t, const Tensor& g) {
    const Tensor& vx = t.nodes_[x.id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (vx[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var Tape::gather_rows(Var x, std::vector<std::size_t> rows) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  const std::size_t n = vx.cols();
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] == kPadRow) continue;
    if (rows[r] >= vx.rows()) throw std::out_of_range("gather_rows: row index out of range");
    const double* src = vx.data() + rows[r] * n;
    double* dst = out.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) dst[c] = src[c];
  }
  return push(std::move(out), [x, rows = std::move(rows), n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] == kPadRow) continue;
      double* dst = gx.data() + rows[r] * n;
      const double* src = g.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
    }
  });
}

Var Tape::slice_cols(Var x, std::size_t c0, std::size_t c1) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  const std::size_t n = vx.cols(), m = vx.rows();
  if (c0 >= c1 || c1 > n) throw std::invalid_argument("slice_cols: bad range");
  const std::size_t w = c1 - c0;
  Tensor out({m, w});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = vx[r * n + c0 + c];
  return push(std::move(out), [x, c0, w, n, m](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * n + c0 + c] += g[r * w + c];
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  std::size_t m = 0, total = 0;
  for (Var p : parts) {
    check(p);
    const Tensor& v = nodes_[p.id].value;
    if (m == 0) m = v.rows();
    if (v.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
    total += v.cols();
  }
  Tensor out({m, total});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Tensor& v = nodes_[p.id].value;
    const std::size_t w = v.cols();
    offsets.push_back(off);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * total + off + c] = v[r * w + c];
    off += w;
  }
  return push(std::move(out),
              [parts, offsets, m, total](Tape& t, const Tensor& g) {
                for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                  Tensor& gp = t.grad_buf(parts[pi].id);
                  const std::size_t w = t.nodes_[parts[pi].id].value.cols();
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < w; ++c)
                      gp[r * w + c] += g[r * total + offsets[pi] + c];
                }
              });
}

Var Tape::stack_timesteps(const std::vector<Var>& steps) {
  if (steps.empty()) throw std::invalid_argument("stack_timesteps: no steps");
  const std::size_t T = steps.size();
  const Tensor& first = nodes_[steps[0].id].value;
  const std::size_t n = first.rows(), d = first.cols();
  for (Var s : steps) {
    check(s);
    if (!nodes_[s.id].value.same_shape(first)) {
      throw std::invalid_argument("stack_timesteps: step shape mismatch");
    }
  }
  Tensor out({n * T, d});
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor& v = nodes_[steps[t].id].value;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < d; ++c) out[(b * T + t) * d + c] = v[b * d + c];
  }
  return push(std::move(out), [steps, T, n, d](Tape& tp, const Tensor& g) {
    for (std::size_t t = 0; t < T; ++t) {
      Tensor& gs = tp.grad_buf(steps[t].id);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < d; ++c) gs[b * d + c] += g[(b * T + t) * d + c];
    }
  });
}

Var Tape::tile_rows(Var x, std::size_t times) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  const std::size_t m = vx.rows(), n = vx.cols();
  Tensor out({m * times, n});
  for (std::size_t t = 0; t < times; ++t)
    for (std::size_t i = 0; i < m * n; ++i) out[t * m * n + i] = vx[i];
  return push(std::move(out), [x, times, m, n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t ti = 0; ti < times; ++ti)
      for (std::size_t i = 0; i < m * n; ++i) gx[i] += g[ti * m * n + i];
  });
}

Var Tape::sum_all(Var x) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  double acc = 0.0;
  for (std::size_t i = 0; i < vx.numel(); ++i) acc += vx[i];
  return push(Tensor::scalar(acc), [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
  });
}

Var Tape::row_sum(Var x) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  const std::size_t m = vx.rows(), n = vx.cols();
  Tensor out({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += vx[r * n + c];
    out[r] = acc;
  }
  return push(std::move(out), [x, m, n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g[r];
  });
}

Var Tape::sum_chunks(Var x, std::size_t chunk) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  const std::size_t m = vx.rows(), n = vx.cols();
  if (chunk == 0 || m % chunk != 0) throw std::invalid_argument("sum_chunks: bad chunk");
  const std::size_t g_rows = m / chunk;
  Tensor out({g_rows, n});
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t gr = r / chunk;
    for (std::size_t c = 0; c < n; ++c) out[gr * n + c] += vx[r * n + c];
  }
  return push(std::move(out), [x, chunk, m, n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buf(x.id);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t gr = r / chunk;
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g[gr * n + c];
    }
  });
}

Var Tape::att_softmax(Var x, std::size_t batch, std::size_t len,
                      std::vector<std::uint8_t> mask) {
  check(x);
  const Tensor& vx = nodes_[x.id].value;
  if (vx.rows() != batch * len || vx.cols() != len) {
    throw std::invalid_argument("att_softmax: expected [" + std::to_string(batch * len) + "x" +
                                std::to_string(len) + "], got " + vx.shape_str());
  }
  if (!mask.empty() && mask.size() != batch * len) {
    throw std::invalid_argument("att_softmax: mask size mismatch");
  }
  Tensor out({batch * len, len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < len; ++q) {
      const std::size_t r = b * len + q;
      if (!mask.empty() && !mask[r]) continue;  // masked query -> zero row
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) {
        if (!mask.empty() && !mask[b * len + j]) continue;
        mx = std::max(mx, vx[r * len + j]);
      }
      if (mx == -std::numeric_limits<double>::infinity()) continue;  // no valid key
      double denom = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        if (!mask.empty() && !mask[b * len + j]) continue;
        const double e = std::exp(vx[r * len + j] - mx);
        out[r * len + j] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[r * len + j] /= denom;
    }
  }
  return push(std::move(out),
              [x, batch, len, mask = std::move(mask),
               self = Var{static_cast<std::uint32_t>(nodes_.size())}](Tape& t, const Tensor& g) {
                const Tensor& p = t.nodes_[self.id].value;
                Tensor& gx = t.grad_buf(x.id);
                for (std::size_t b = 0; b < batch; ++b) {
                  for (std::size_t q = 0; q < len; ++q) {
                    const std::size_t r = b * len + q;
                    if (!mask.empty() && !mask[r]) continue;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < len; ++j) dot += g[r * len + j] * p[r * len + j];
                    for (std::size_t j = 0; j < len; ++j) {
                      gx[r * len + j] += p[r * len + j] * (g[r * len + j] - dot);
                    }
                  }
                }
              });
}

}  // namespace selfgnn
