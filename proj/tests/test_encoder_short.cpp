#include <doctest.h>

#include <cmath>

#include "selfgnn/encoder_short.hpp"
#include "selfgnn/nn.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace selfgnn;
using selfgnn::testing::finite_difference_check;

namespace {

Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

IntervalGraph make_graph(std::size_t users, std::size_t items,
                         std::vector<SparseEntry> entries) {
  IntervalGraph g;
  g.adjacency = SparseMatrix(users, items, std::move(entries));
  return g;
}

}  // namespace

TEST_CASE("propagate_layer isolated and single-edge behavior") {
  auto g = make_graph(3, 2, {{1, 0, 1.0}});
  Rng rng(1);
  Tape t;
  Var ue = t.leaf(randn({3, 4}, rng));
  Tensor item_raw = randn({2, 4}, rng);
  Var ie = t.leaf(item_raw);
  Rng unused(0);
  auto [zu, zv] = propagate_layer(t, g, ue, ie, 0.0, unused, Mode::Inference, 0.1);
  // isolated users 0 and 2: LeakyReLU(0) = 0
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(t.value(zu).at(0, c) == 0.0);
    CHECK(t.value(zu).at(2, c) == 0.0);
    // single edge (u1, v0): z_user[1] = LeakyReLU(item_emb[0])
    CHECK(t.value(zu).at(1, c) ==
          doctest::Approx(item_raw.at(0, c) >= 0 ? item_raw.at(0, c) : 0.1 * item_raw.at(0, c)));
  }
}

TEST_CASE("propagate_layer matches dense aggregation on a 4x5 toy graph") {
  Rng rng(2);
  std::vector<SparseEntry> entries;
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t v = 0; v < 5; ++v)
      if (rng.bernoulli(0.5)) entries.push_back({u, v, 1.0});
  auto g = make_graph(4, 5, entries);
  Tensor ue = randn({4, 3}, rng), ie = randn({5, 3}, rng);
  Tape t;
  Rng unused(0);
  auto [zu, zv] = propagate_layer(t, g, t.leaf(ue), t.leaf(ie), 0.0, unused, Mode::Inference, 0.1);

  Tensor dense({4, 5});
  for (const auto& e : entries) dense.at(e.row, e.col) = 1.0;
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t v = 0; v < 5; ++v) acc += dense.at(u, v) * ie.at(v, c);
      CHECK(std::fabs(t.value(zu).at(u, c) - selfgnn::testing::leaky(acc, 0.1)) < 1e-12);
    }
  for (std::size_t v = 0; v < 5; ++v)
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t u = 0; u < 4; ++u) acc += dense.at(u, v) * ue.at(u, c);
      CHECK(std::fabs(t.value(zv).at(v, c) - selfgnn::testing::leaky(acc, 0.1)) < 1e-12);
    }

  Tape t2;
  CHECK_THROWS(propagate_layer(t2, g, t2.leaf(randn({3, 3}, rng)), t2.leaf(ie), 0.0, unused,
                               Mode::Inference, 0.1));
}

TEST_CASE("encode_period limits: single layer and empty graph") {
  Rng rng(3);
  ShortEncoderConfig cfg;
  cfg.layers = 1;
  cfg.edge_dropout = 0.0;
  auto g = make_graph(3, 3, {{0, 1, 1.0}, {2, 0, 1.0}});
  Tensor ue = randn({3, 4}, rng), ie = randn({3, 4}, rng);
  Tape t;
  Rng unused(0);
  auto enc = encode_period(t, g, t.leaf(ue), t.leaf(ie), cfg, unused, Mode::Inference);
  // L=1: output = z_1 + e_0
  auto [zu, zv] = propagate_layer(t, g.adjacency, t.leaf(ue), t.leaf(ie), cfg.leaky_slope);
  for (std::size_t i = 0; i < ue.numel(); ++i) {
    CHECK(t.value(enc.user)[i] == doctest::Approx(t.value(zu)[i] + ue[i]).epsilon(1e-12));
  }

  // empty graph: z = 0 in every layer, mean over layers = e_0
  auto empty = make_graph(3, 3, {});
  ShortEncoderConfig cfg2;
  cfg2.layers = 3;
  cfg2.edge_dropout = 0.0;
  Tape t2;
  auto enc2 = encode_period(t2, empty, t2.leaf(ue), t2.leaf(ie), cfg2, unused, Mode::Inference);
  for (std::size_t i = 0; i < ue.numel(); ++i) {
    CHECK(t2.value(enc2.user)[i] == doctest::Approx(ue[i]).epsilon(1e-12));
    CHECK(t2.value(enc2.item)[i] == doctest::Approx(ie[i]).epsilon(1e-12));
  }
}

TEST_CASE("encode_period L=2 equals step-by-step dense recomputation") {
  Rng rng(4);
  auto g = make_graph(3, 3, {{0, 0, 1.0}, {0, 2, 1.0}, {1, 1, 1.0}, {2, 1, 1.0}});
  Tensor ue = randn({3, 4}, rng), ie = randn({3, 4}, rng);
  ShortEncoderConfig cfg;
  cfg.layers = 2;
  cfg.edge_dropout = 0.0;
  Tape t;
  Rng unused(0);
  auto enc = encode_period(t, g, t.leaf(ue), t.leaf(ie), cfg, unused, Mode::Inference);

  // independent unrolling
  Tensor dense({3, 3});
  for (const auto& e : g.adjacency.entries()) dense.at(e.row, e.col) = 1.0;
  auto agg = [&](const Tensor& m, bool transpose) {
    Tensor out({3, 4});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          acc += (transpose ? dense.at(j, i) : dense.at(i, j)) * m.at(j, c);
        }
        out.at(i, c) = selfgnn::testing::leaky(acc, cfg.leaky_slope);
      }
    return out;
  };
  Tensor eu = ue, ev = ie, sum_u({3, 4}), sum_v({3, 4});
  for (int l = 0; l < 2; ++l) {
    Tensor zu = agg(ev, false), zv = agg(eu, true);
    for (std::size_t i = 0; i < eu.numel(); ++i) {
      eu[i] += zu[i];
      ev[i] += zv[i];
      sum_u[i] += eu[i];
      sum_v[i] += ev[i];
    }
  }
  for (std::size_t i = 0; i < eu.numel(); ++i) {
    CHECK(std::fabs(t.value(enc.user)[i] - sum_u[i] / 2.0) < 1e-12);
    CHECK(std::fabs(t.value(enc.item)[i] - sum_v[i] / 2.0) < 1e-12);
  }
}

TEST_CASE("encode_period is permutation-equivariant without dropout") {
  Rng rng(5);
  std::vector<SparseEntry> entries = {{0, 1, 1.0}, {1, 0, 1.0}, {2, 2, 1.0}, {0, 2, 1.0}};
  auto g = make_graph(3, 3, entries);
  Tensor ue = randn({3, 4}, rng), ie = randn({3, 4}, rng);
  ShortEncoderConfig cfg;
  cfg.edge_dropout = 0.0;
  Rng unused(0);
  Tape t;
  auto enc = encode_period(t, g, t.leaf(ue), t.leaf(ie), cfg, unused, Mode::Inference);

  // relabel users via permutation pi = {2, 0, 1}
  const std::size_t pi[3] = {2, 0, 1};
  std::vector<SparseEntry> perm_entries;
  for (const auto& e : entries) perm_entries.push_back({pi[e.row], e.col, 1.0});
  auto gp = make_graph(3, 3, perm_entries);
  Tensor uep({3, 4});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) uep.at(pi[r], c) = ue.at(r, c);
  Tape t2;
  auto enc2 = encode_period(t2, gp, t2.leaf(uep), t2.leaf(ie), cfg, unused, Mode::Inference);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(t.value(enc.user).at(r, c) == doctest::Approx(t2.value(enc2.user).at(pi[r], c)));
      CHECK(t.value(enc.item).at(r, c) == doctest::Approx(t2.value(enc2.item).at(r, c)));
    }
}

TEST_CASE("encode_period gradients match finite differences") {
  Rng rng(6);
  auto g = make_graph(4, 5, {{0, 1, 1.0}, {1, 0, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}, {1, 2, 1.0}});
  std::vector<Tensor> inputs{randn({4, 3}, rng, 0.5), randn({5, 3}, rng, 0.5)};
  ShortEncoderConfig cfg;
  cfg.layers = 2;
  cfg.edge_dropout = 0.0;
  auto build = [&](Tape& t, const std::vector<Var>& v) {
    Rng unused(0);
    auto enc = encode_period(t, g, v[0], v[1], cfg, unused, Mode::Inference);
    return t.add(t.sum_all(enc.user), t.sum_all(enc.item));
  };
  auto loss_fn = [&](const std::vector<Tensor>& params) {
    Tape t;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(t.leaf(p));
    return t.value(build(t, leaves)).item();
  };
  Tape t;
  std::vector<Var> leaves;
  for (const auto& p : inputs) leaves.push_back(t.leaf(p));
  t.backward(build(t, leaves));
  std::vector<Tensor> analytic;
  for (Var v : leaves) analytic.push_back(t.grad(v));
  auto report = finite_difference_check(loss_fn, inputs, analytic);
  INFO(report.worst);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("edge dropout preserves the expected aggregation") {
  // positive embeddings keep the pre-activation in the linear region, so
  // the dropout mean must match the dropout-free aggregation
  Rng rng(7);
  std::vector<SparseEntry> entries;
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t v = 0; v < 6; ++v)
      if (rng.bernoulli(0.6)) entries.push_back({u, v, 1.0});
  auto g = make_graph(4, 6, entries);
  Tensor ie({6, 2});
  for (std::size_t i = 0; i < ie.numel(); ++i) ie[i] = rng.uniform(0.5, 1.5);
  Tensor ue({4, 2});
  for (std::size_t i = 0; i < ue.numel(); ++i) ue[i] = rng.uniform(0.5, 1.5);

  Tape t0;
  Rng unused(0);
  auto [zu0, zv0] = propagate_layer(t0, g, t0.leaf(ue), t0.leaf(ie), 0.0, unused, Mode::Inference,
                                    0.1);
  const Tensor base = t0.value(zu0);

  const int draws = 10000;
  const double p = 0.5;
  Tensor mean({4, 2});
  Tensor sumsq({4, 2});
  Rng drop_rng(8);
  for (int i = 0; i < draws; ++i) {
    Tape t;
    auto [zu, zv] = propagate_layer(t, g, t.leaf(ue), t.leaf(ie), p, drop_rng, Mode::Train, 0.1);
    const Tensor& z = t.value(zu);
    for (std::size_t k = 0; k < z.numel(); ++k) {
      mean[k] += z[k];
      sumsq[k] += z[k] * z[k];
    }
  }
  for (std::size_t k = 0; k < mean.numel(); ++k) {
    mean[k] /= draws;
    const double var = sumsq[k] / draws - mean[k] * mean[k];
    const double sigma_of_mean = std::sqrt(std::max(var, 0.0) / draws);
    CHECK(std::fabs(mean[k] - base[k]) <= 3.0 * sigma_of_mean + 1e-12);
  }
}

TEST_CASE("concat_project layer combination stays well-typed") {
  Rng rng(9);
  auto g = make_graph(3, 3, {{0, 0, 1.0}, {1, 2, 1.0}});
  ShortEncoderConfig cfg;
  cfg.layers = 2;
  cfg.edge_dropout = 0.0;
  cfg.combine = LayerCombine::ConcatProject;
  Tape t;
  Var pu = t.leaf(xavier_uniform(8, 4, rng));
  Var pv = t.leaf(xavier_uniform(8, 4, rng));
  Rng unused(0);
  auto enc = encode_period(t, g, t.leaf(randn({3, 4}, rng)), t.leaf(randn({3, 4}, rng)), cfg,
                           unused, Mode::Inference, &pu, &pv);
  CHECK(t.value(enc.user).rows() == 3);
  CHECK(t.value(enc.user).cols() == 4);
  CHECK(t.value(enc.item).cols() == 4);
  Tape t2;
  CHECK_THROWS(encode_period(t2, g, t2.leaf(randn({3, 4}, rng)), t2.leaf(randn({3, 4}, rng)), cfg,
                             unused, Mode::Inference));
}
