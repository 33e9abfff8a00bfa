#include <doctest.h>

#include <cmath>
#include <cstring>

#include "selfgnn/adam.hpp"
#include "selfgnn/autograd.hpp"
#include "selfgnn/nn.hpp"
#include "selfgnn/rng.hpp"
#include "support/fd.hpp"

using namespace selfgnn;
using selfgnn::testing::finite_difference_check;

namespace {

Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

// N(0,1) draws nudged away from activation kinks.
Tensor randn_off_kink(std::vector<std::size_t> shape, Rng& rng, double margin = 1e-2) {
  Tensor t = randn(std::move(shape), rng);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (std::fabs(t[i]) < margin) t[i] = t[i] < 0 ? t[i] - margin : t[i] + margin;
  }
  return t;
}

bool bitwise_zero(const Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    std::uint64_t bits;
    const double v = t[i];
    std::memcpy(&bits, &v, 8);
    if (bits != 0) return false;
  }
  return true;
}

// Runs `build` both analytically and through finite differences.
selfgnn::testing::FdReport check_op(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build, std::vector<Tensor> inputs,
    double h = 1e-5) {
  auto loss_fn = [&](const std::vector<Tensor>& params) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(t.leaf(p));
    return t.value(t.sum_all(build(t, leaves))).item();
  };
  Tape t;
  std::vector<Var> leaves;
  for (const auto& p : inputs) leaves.push_back(t.leaf(p));
  t.backward(t.sum_all(build(t, leaves)));
  std::vector<Tensor> analytic;
  for (Var v : leaves) analytic.push_back(t.grad(v));
  return finite_difference_check(loss_fn, inputs, analytic, h);
}

}  // namespace

TEST_CASE("leaky_relu values and gradient") {
  Tape t;
  Var x = t.leaf(Tensor({2}, {2.0, -2.0}));
  Var y = t.leaky_relu(x, 0.1);
  CHECK(t.value(y)[0] == doctest::Approx(2.0));
  CHECK(t.value(y)[1] == doctest::Approx(-0.2));

  Tape t2;
  Var z = t2.leaky_relu(t2.leaf(Tensor({1}, {0.0})), 0.5);
  CHECK(t2.value(z)[0] == 0.0);

  // gradient at x = -3 equals the slope, against central differences
  auto f = [](const std::vector<Tensor>& p) {
    Tape tp;
    return tp.value(tp.sum_all(tp.leaky_relu(tp.leaf(p[0]), 0.1))).item();
  };
  Tape t3;
  Var x3 = t3.leaf(Tensor({1}, {-3.0}));
  t3.backward(t3.sum_all(t3.leaky_relu(x3, 0.1)));
  const double analytic = t3.grad(x3)[0];
  CHECK(analytic == doctest::Approx(0.1));
  const double h = 1e-5;
  std::vector<Tensor> p{Tensor({1}, {-3.0})};
  p[0][0] = -3.0 + h;
  const double fp = f(p);
  p[0][0] = -3.0 - h;
  const double fm = f(p);
  CHECK(std::fabs((fp - fm) / (2 * h) - analytic) < 1e-8);

  CHECK_THROWS(t3.leaky_relu(t3.leaf(Tensor({1}, {std::nan("")})), 0.1));
  CHECK_THROWS(t3.leaky_relu(t3.leaf(Tensor({1}, {1.0})), 1.5));
}

TEST_CASE("sigmoid values and gradient") {
  Tape t;
  Var y = t.sigmoid(t.leaf(Tensor({2}, {0.0, 50.0})));
  CHECK(t.value(y)[0] == doctest::Approx(0.5));
  // saturation: within 1e-20 of 1 (the nearest representable double is 1.0)
  CHECK(1.0 - t.value(y)[1] < 1e-20);
  CHECK(t.value(y)[1] <= 1.0);

  Tape t2;
  Var x = t2.leaf(Tensor({1}, {1.0}));
  t2.backward(t2.sum_all(t2.sigmoid(x)));
  const double analytic = t2.grad(x)[0];
  CHECK(analytic == doctest::Approx(0.19661193).epsilon(1e-6));
  auto f = [](double v) {
    Tape tp;
    return tp.value(tp.sum_all(tp.sigmoid(tp.leaf(Tensor({1}, {v}))))).item();
  };
  CHECK(std::fabs((f(1.0 + 1e-5) - f(1.0 - 1e-5)) / 2e-5 - analytic) < 1e-6);
}

TEST_CASE("spmm identity, row sum, and dense oracle") {
  SparseMatrix eye(2, 2, {{0, 0, 1.0}, {1, 1, 1.0}});
  Tape t;
  Var b = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Var y = t.spmm(eye, b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.value(y)[i] == t.value(b)[i]);

  SparseMatrix rowsum(1, 2, {{0, 0, 1.0}, {0, 1, 1.0}});
  Tape t2;
  Var e = t2.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  Var z = t2.spmm(rowsum, e);
  CHECK(t2.value(z)[0] == 1.0);
  CHECK(t2.value(z)[1] == 1.0);

  // random sparse x dense vs densified brute force
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SparseEntry> entries;
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 7; ++c)
        if (rng.bernoulli(0.4)) entries.push_back({r, c, rng.normal()});
    SparseMatrix a(5, 7, entries);
    Tensor bd = randn({7, 3}, rng);
    Tape t3;
    Var out = t3.spmm(a, t3.leaf(bd));

    double dense[5][7] = {};
    for (const auto& en : a.entries()) dense[en.row][en.col] = en.value;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 7; ++k) acc += dense[i][k] * bd[k * 3 + j];
        CHECK(std::fabs(t3.value(out).at(i, j) - acc) < 1e-12);
      }
  }

  Tape t4;
  CHECK_THROWS(t4.spmm(eye, t4.leaf(Tensor({3, 2}))));
}

TEST_CASE("gru_cell limiting behavior") {
  const std::size_t d = 3;
  auto zeros = [&] { return Tensor({d, d}); };
  Tape t;
  GruVars p{t.leaf(zeros()), t.leaf(zeros()), t.leaf(Tensor({d})),
            t.leaf(zeros()), t.leaf(zeros()), t.leaf(Tensor({d})),
            t.leaf(zeros()), t.leaf(zeros()), t.leaf(Tensor({d}))};
  Rng rng(3);
  Var x = t.leaf(randn({2, d}, rng));
  Var h0 = t.leaf(Tensor({2, d}));
  Var h1 = gru_cell(t, x, h0, p);
  for (std::size_t i = 0; i < t.value(h1).numel(); ++i) CHECK(t.value(h1)[i] == 0.0);

  // large negative update-gate bias: z ~ 0 so h' == h_prev
  Tape t2;
  Rng rng2(4);
  auto xav = [&](Rng& r) { return xavier_uniform(d, d, r); };
  GruVars p2{t2.leaf(xav(rng2)), t2.leaf(xav(rng2)), t2.leaf(Tensor::full({d}, -40.0)),
             t2.leaf(xav(rng2)), t2.leaf(xav(rng2)), t2.leaf(Tensor({d})),
             t2.leaf(xav(rng2)), t2.leaf(xav(rng2)), t2.leaf(Tensor({d}))};
  Var x2 = t2.leaf(randn({2, d}, rng2));
  Var hp = t2.leaf(randn({2, d}, rng2));
  Var h2 = gru_cell(t2, x2, hp, p2);
  for (std::size_t i = 0; i < t2.value(h2).numel(); ++i) {
    CHECK(std::fabs(t2.value(h2)[i] - t2.value(hp)[i]) < 1e-6);
  }
}

TEST_CASE("gru_cell gradients match finite differences") {
  const std::size_t d = 4;
  Rng rng(11);
  std::vector<Tensor> inputs;
  inputs.push_back(randn({3, d}, rng, 0.5));  // x
  inputs.push_back(randn({3, d}, rng, 0.5));  // h_prev
  for (int g = 0; g < 3; ++g) {
    inputs.push_back(xavier_uniform(d, d, rng));
    inputs.push_back(xavier_uniform(d, d, rng));
    inputs.push_back(randn({d}, rng, 0.1));
  }
  auto build = [d](Tape& t, const std::vector<Var>& v) {
    GruVars p{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
    return gru_cell(t, v[0], v[1], p);
  };
  auto report = check_op(build, inputs);
  INFO(report.worst);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("multi_head_attention single element and mask semantics") {
  const std::size_t d = 4;
  Rng rng(5);
  Tape t;
  AttentionVars p{t.leaf(xavier_uniform(d, d, rng)), t.leaf(xavier_uniform(d, d, rng)),
                  t.leaf(xavier_uniform(d, d, rng)), t.leaf(xavier_uniform(d, d, rng))};
  Tensor x = randn({1, d}, rng);
  Var seq = t.leaf(x);
  auto out = multi_head_attention(t, seq, 1, 1, p, 2);
  // softmax over one key is 1: output == (x Wv) Wo
  Tape t2;
  Var ref = t2.matmul(t2.matmul(t2.leaf(x), t2.leaf(t.value(p.wv))), t2.leaf(t.value(p.wo)));
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(t.value(out.output)[i] == doctest::Approx(t2.value(ref)[i]).epsilon(1e-12));
  }

  // all-masked-but-one: every valid query attends only to the single
  // unmasked position
  Tape t3;
  AttentionVars p3{t3.leaf(xavier_uniform(d, d, rng)), t3.leaf(xavier_uniform(d, d, rng)),
                   t3.leaf(xavier_uniform(d, d, rng)), t3.leaf(xavier_uniform(d, d, rng))};
  Var seq3 = t3.leaf(randn({3, d}, rng));
  auto res = multi_head_attention(t3, seq3, 1, 3, p3, 2, {0, 1, 0});
  for (const Var& probs : res.head_probs) {
    const Tensor& pv = t3.value(probs);
    // row 1 is the only valid query; it must put weight 1 on key 1
    CHECK(pv.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pv.at(1, 0) == 0.0);
    CHECK(pv.at(1, 2) == 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(pv.at(0, c) == 0.0);
      CHECK(pv.at(2, c) == 0.0);
    }
  }

  CHECK_THROWS(multi_head_attention(t3, seq3, 1, 3, p3, 3));  // 4 % 3 != 0
}

TEST_CASE("multi_head_attention matches a hand-rolled oracle") {
  const std::size_t d = 4, len = 3, heads = 2, dh = d / heads;
  Rng rng(17);
  Tensor x = randn({len, d}, rng);
  Tensor wq = xavier_uniform(d, d, rng), wk = xavier_uniform(d, d, rng),
         wv = xavier_uniform(d, d, rng), wo = xavier_uniform(d, d, rng);

  Tape t;
  AttentionVars p{t.leaf(wq), t.leaf(wk), t.leaf(wv), t.leaf(wo)};
  auto out = multi_head_attention(t, t.leaf(x), 1, len, p, heads);

  // independent recomputation with plain loops
  auto matmul = [](const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t k = 0; k < a.cols(); ++k)
        for (std::size_t j = 0; j < b.cols(); ++j) c.at(i, j) += a.at(i, k) * b.at(k, j);
    return c;
  };
  Tensor q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
  Tensor ctx({len, d});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < len; ++i) {
      double logits[len];
      double mx = -1e300;
      for (std::size_t j = 0; j < len; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += q.at(i, h * dh + c) * k.at(j, h * dh + c);
        logits[j] = acc / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < len; ++j) denom += std::exp(logits[j] - mx);
      for (std::size_t j = 0; j < len; ++j) {
        const double w = std::exp(logits[j] - mx) / denom;
        for (std::size_t c = 0; c < dh; ++c) ctx.at(i, h * dh + c) += w * v.at(j, h * dh + c);
      }
    }
  }
  Tensor expect = matmul(ctx, wo);
  for (std::size_t i = 0; i < expect.numel(); ++i) {
    CHECK(std::fabs(t.value(out.output)[i] - expect[i]) < 1e-10);
  }

  // softmax rows over valid keys sum to 1
  for (const Var& probs : out.head_probs) {
    const Tensor& pv = t.value(probs);
    for (std::size_t r = 0; r < len; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < len; ++c) s += pv.at(r, c);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("backward basics and stop-gradient semantics") {
  Tape t;
  Var x = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  t.backward(t.sum_all(x));
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.grad(x)[i] == 1.0);

  Tape t2;
  Var a = t2.leaf(Tensor({3}, {1, 2, 3}));
  Var b = t2.leaf(Tensor({3}, {4, 5, 6}));
  t2.backward(t2.sum_all(t2.mul(t2.stop_gradient(a), b)));
  CHECK(bitwise_zero(t2.grad(a)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(t2.grad(b)[i] == t2.value(a)[i]);

  Tape t3;
  Var y = t3.leaf(Tensor({2}, {1, 2}));
  CHECK_THROWS(t3.backward(y));              // not a scalar
  CHECK_THROWS(t3.backward(Var{999}));       // not on tape
}

TEST_CASE("adam first step, zero grad, and quadratic convergence") {
  Adam adam;
  Tensor w({2}, {1.0, -2.0});
  adam.register_param(w);
  std::vector<Tensor*> ps{&w};
  std::vector<Tensor> gs{Tensor({2}, {0.3, -0.7})};
  adam.step(ps, gs, 0.01);
  CHECK(w[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-5));

  // zero gradient from a fresh state leaves parameters unchanged
  Adam fresh;
  Tensor w2({2}, {1.0, -2.0});
  fresh.register_param(w2);
  std::vector<Tensor*> ps2{&w2};
  std::vector<Tensor> zero{Tensor({2})};
  fresh.step(ps2, zero, 0.01);
  CHECK(w2[0] == 1.0);
  CHECK(w2[1] == -2.0);

  // 100 steps on f(w) = (w-3)^2 from w=0
  Adam opt;
  Tensor v({1}, {0.0});
  opt.register_param(v);
  std::vector<Tensor*> pv{&v};
  for (int i = 0; i < 100; ++i) {
    std::vector<Tensor> g{Tensor({1}, {2.0 * (v[0] - 3.0)})};
    opt.step(pv, g, 0.1);
  }
  CHECK(std::fabs(v[0] - 3.0) < 0.1);
}

TEST_CASE("randomized finite differences across every differentiable op") {
  Rng rng(23);
  const double tol = 1e-4;

  auto run = [&](const char* name, const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                 std::vector<Tensor> inputs) {
    auto report = check_op(build, std::move(inputs));
    INFO(name, ": ", report.worst);
    CHECK(report.max_rel_err < tol);
  };

  run("add", [](Tape& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); },
      {randn({3, 4}, rng), randn({3, 4}, rng)});
  run("sub", [](Tape& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); },
      {randn({3, 4}, rng), randn({3, 4}, rng)});
  run("mul", [](Tape& t, const std::vector<Var>& v) { return t.mul(v[0], v[1]); },
      {randn({3, 4}, rng), randn({3, 4}, rng)});
  run("affine", [](Tape& t, const std::vector<Var>& v) { return t.affine(v[0], -1.7, 0.3); },
      {randn({3, 4}, rng)});
  run("add_rowvec", [](Tape& t, const std::vector<Var>& v) { return t.add_rowvec(v[0], v[1]); },
      {randn({3, 4}, rng), randn({4}, rng)});
  run("matmul", [](Tape& t, const std::vector<Var>& v) { return t.matmul(v[0], v[1]); },
      {randn({3, 4}, rng), randn({4, 2}, rng)});
  run("bmm_nn",
      [](Tape& t, const std::vector<Var>& v) { return t.bmm(v[0], v[1], 2, false); },
      {randn({6, 4}, rng), randn({8, 5}, rng)});
  run("bmm_nt",
      [](Tape& t, const std::vector<Var>& v) { return t.bmm(v[0], v[1], 2, true); },
      {randn({6, 4}, rng), randn({10, 4}, rng)});
  run("leaky_relu", [](Tape& t, const std::vector<Var>& v) { return t.leaky_relu(v[0], 0.1); },
      {randn_off_kink({3, 4}, rng)});
  run("relu", [](Tape& t, const std::vector<Var>& v) { return t.relu(v[0]); },
      {randn_off_kink({3, 4}, rng)});
  run("sigmoid", [](Tape& t, const std::vector<Var>& v) { return t.sigmoid(v[0]); },
      {randn({3, 4}, rng)});
  run("tanh", [](Tape& t, const std::vector<Var>& v) { return t.tanh(v[0]); },
      {randn({3, 4}, rng)});
  run("gather_rows",
      [](Tape& t, const std::vector<Var>& v) { return t.gather_rows(v[0], {2, 0, 0, kPadRow}); },
      {randn({3, 4}, rng)});
  run("slice+concat",
      [](Tape& t, const std::vector<Var>& v) {
        return t.concat_cols({t.slice_cols(v[0], 2, 4), t.slice_cols(v[0], 0, 2)});
      },
      {randn({3, 4}, rng)});
  run("stack_timesteps",
      [](Tape& t, const std::vector<Var>& v) { return t.stack_timesteps({v[0], v[1]}); },
      {randn({3, 4}, rng), randn({3, 4}, rng)});
  run("tile_rows", [](Tape& t, const std::vector<Var>& v) { return t.tile_rows(v[0], 3); },
      {randn({2, 4}, rng)});
  run("row_sum", [](Tape& t, const std::vector<Var>& v) { return t.row_sum(v[0]); },
      {randn({3, 4}, rng)});
  run("sum_chunks", [](Tape& t, const std::vector<Var>& v) { return t.sum_chunks(v[0], 2); },
      {randn({6, 4}, rng)});
  run("att_softmax",
      [](Tape& t, const std::vector<Var>& v) { return t.att_softmax(v[0], 2, 3, {}); },
      {randn({6, 3}, rng)});
  run("att_softmax_masked",
      [](Tape& t, const std::vector<Var>& v) {
        return t.att_softmax(v[0], 2, 3, {1, 1, 0, 0, 1, 1});
      },
      {randn({6, 3}, rng)});
  std::vector<SparseEntry> entries;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      if (rng.bernoulli(0.5)) entries.push_back({r, c, 1.0});
  SparseMatrix a(4, 5, entries);
  run("spmm", [a](Tape& t, const std::vector<Var>& v) { return t.spmm(a, v[0]); },
      {randn({5, 3}, rng)});
}

TEST_CASE("spmm equals densified matmul on random instances") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(32), k = 1 + rng.below(32), n = 1 + rng.below(8);
    std::vector<SparseEntry> entries;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c)
        if (rng.bernoulli(0.2)) entries.push_back({r, c, rng.normal()});
    SparseMatrix a(m, k, entries);
    Tensor b = randn({k, n}, rng);
    Tape t;
    const Tensor& got = t.value(t.spmm(a, t.leaf(b)));

    Tensor dense({m, k});
    for (const auto& e : a.entries()) dense.at(e.row, e.col) = e.value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < k; ++c) acc += dense.at(i, c) * b.at(c, j);
        CHECK(std::fabs(got.at(i, j) - acc) < 1e-12);
      }
  }
}

TEST_CASE("sparse matrix rejects duplicates and out-of-range entries") {
  CHECK_THROWS(SparseMatrix(2, 2, {{0, 0, 1.0}, {0, 0, 1.0}}));
  CHECK_THROWS(SparseMatrix(2, 2, {{2, 0, 1.0}}));
}

TEST_CASE("rng streams are independent and reproducible") {
  Rng a = make_stream(42, Stream::Shuffle, 3, 1);
  Rng b = make_stream(42, Stream::Shuffle, 3, 1);
  Rng c = make_stream(42, Stream::NegSample, 3, 1);
  bool differs = false;
  for (int i = 0; i < 8; ++i) {
    const auto va = a.next();
    CHECK(va == b.next());
    if (va != c.next()) differs = true;
  }
  CHECK(differs);
}
