// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "s2ag/adam.hpp"
#include "s2ag/binary_io.hpp"
#include "s2ag/checkpoint.hpp"
#include "s2ag/error.hpp"
#include "s2ag/layers.hpp"
#include "s2ag/ops.hpp"
#include "test_util.hpp"

using namespace s2ag;
using namespace s2ag::diff;
using test::gradcheck;
using test::project;
using test::random_tensor;

TEST_CASE("fully connected identities") {
  Graph g;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  const Var x = g.constant(Tensor({1, 3}, {1.5, -2.0, 0.25}));
  const Var y = linear(x, g.constant(eye), g.constant(Tensor({3})));
  CHECK(y.value().storage() == x.value().storage());
  const Var z = linear(x, g.constant(Tensor({2, 3})), g.constant(Tensor({2}, {4.0, -1.0})));
  CHECK(z.value()[0] == 4.0);
  CHECK(z.value()[1] == -1.0);
  CHECK_THROWS_AS(linear(x, g.constant(Tensor({2, 4})), g.constant(Tensor({2}))), Error);
}

TEST_CASE("fully connected vs brute-force dot products") {
  Rng rng(1);
  Graph g;
  const Tensor xv = random_tensor({2, 3, 5}, rng), wv = random_tensor({4, 5}, rng), bv = random_tensor({4}, rng);
  const Var y = linear(g.constant(xv), g.constant(wv), g.constant(bv));
  REQUIRE(y.shape() == Shape{2, 3, 4});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t o = 0; o < 4; ++o) {
      double s = bv[o];
      for (std::size_t i = 0; i < 5; ++i) s += wv[o * 5 + i] * xv[r * 5 + i];
      CHECK(y.value()[r * 4 + o] == doctest::Approx(s).epsilon(1e-13));
    }
  }
}

TEST_CASE("conv1d identities and direct summation oracle") {
  Graph g;
  const Var x = g.constant(Tensor({1, 4, 1}, {1, 2, 3, 4}));
  CHECK(conv1d(x, g.constant(Tensor({1, 1, 1}, {1.0})), g.constant(Tensor({1}))).value().storage() ==
        Storage{1, 2, 3, 4});
  CHECK(conv1d(x, g.constant(Tensor({1, 1, 1}, {0.0})), g.constant(Tensor({1}))).value().storage() ==
        Storage(4, 0.0));

  Rng rng(2);
  const std::size_t B = 2, T = 7, Cin = 2, Cout = 3, K = 3, S = 2, P = 1;
  const Tensor xv = random_tensor({B, T, Cin}, rng), wv = random_tensor({Cout, K, Cin}, rng),
               bv = random_tensor({Cout}, rng);
  const Var y = conv1d(g.constant(xv), g.constant(wv), g.constant(bv), S, P);
  const std::size_t To = (T + 2 * P - K) / S + 1;
  REQUIRE(y.shape() == Shape{B, To, Cout});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < To; ++t) {
      for (std::size_t o = 0; o < Cout; ++o) {
        double s = bv[o];
        for (std::size_t k = 0; k < K; ++k) {
          const long src = static_cast<long>(t * S + k) - static_cast<long>(P);
          if (src < 0 || src >= static_cast<long>(T)) continue;
          for (std::size_t c = 0; c < Cin; ++c) s += wv[(o * K + k) * Cin + c] * xv[(b * T + src) * Cin + c];
        }
        CHECK(y.value()[(b * To + t) * Cout + o] == doctest::Approx(s).epsilon(1e-13));
      }
    }
  }
  CHECK_THROWS_AS(conv1d(g.constant(Tensor({1, 2, 1})), g.constant(Tensor({1, 5, 1})), g.constant(Tensor({1}))),
                  Error);
}

namespace {

GruWeights zero_gru(Graph& g, std::size_t in, std::size_t h) {
  return {g.constant(Tensor({3 * h, in})), g.constant(Tensor({3 * h, h})), g.constant(Tensor({3 * h})),
          g.constant(Tensor({3 * h}))};
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Step-by-step scalar GRU.
std::vector<double> scalar_gru(const Tensor& x, std::size_t T, std::size_t in, const Tensor& wih, const Tensor& whh,
                               const Tensor& bih, const Tensor& bhh, std::size_t H, bool reverse) {
  std::vector<double> h(H, 0.0), out(T * H);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    std::vector<double> nh(H);
    for (std::size_t k = 0; k < H; ++k) {
      auto pre = [&](std::size_t gate, bool hidden) {
        double v = hidden ? bhh[gate * H + k] : bih[gate * H + k];
        if (hidden) {
          for (std::size_t j = 0; j < H; ++j) v += whh[(gate * H + k) * H + j] * h[j];
        } else {
          for (std::size_t j = 0; j < in; ++j) v += wih[(gate * H + k) * in + j] * x[t * in + j];
        }
        return v;
      };
      const double r = sig(pre(0, false) + pre(0, true));
      const double z = sig(pre(1, false) + pre(1, true));
      const double n = std::tanh(pre(2, false) + r * pre(2, true));
      nh[k] = (1 - z) * n + z * h[k];
    }
    h = nh;
    for (std::size_t k = 0; k < H; ++k) out[t * H + k] = h[k];
  }
  return out;
}

}  // namespace

TEST_CASE("gru analytic cases") {
  Graph g;
  const Var x = g.constant(Tensor({1, 4, 2}));
  const Var y = gru(x, zero_gru(g, 2, 3), false, Tensor({1, 3}, {1.0, 1.0, 1.0}));
  double expect = 1.0;
  for (std::size_t t = 0; t < 4; ++t) {
    expect *= 0.5;
    for (std::size_t k = 0; k < 3; ++k) CHECK(y.value()[t * 3 + k] == expect);
  }
  Rng rng(4);
  GruWeights w{g.constant(random_tensor({6, 2}, rng)), g.constant(random_tensor({6, 2}, rng)), g.constant(Tensor({6})),
               g.constant(Tensor({6}))};
  const Var z = gru(x, w, false);
  for (double v : z.value().values()) CHECK(v == 0.0);
}

TEST_CASE("gru matches step-by-step scalar oracle in both directions") {
  Rng rng(5);
  const std::size_t T = 6, in = 3, H = 4;
  Graph g;
  const Tensor xv = random_tensor({1, T, in}, rng), wih = random_tensor({3 * H, in}, rng),
               whh = random_tensor({3 * H, H}, rng), bih = random_tensor({3 * H}, rng), bhh = random_tensor({3 * H}, rng);
  GruWeights w{g.constant(wih), g.constant(whh), g.constant(bih), g.constant(bhh)};
  for (bool rev : {false, true}) {
    const Var y = gru(g.constant(xv), w, rev);
    const auto ref = scalar_gru(xv, T, in, wih, whh, bih, bhh, H, rev);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("graph conv cases") {
  Rng rng(6);
  Graph g;
  // Single node with identity channel map reduces to the temporal convolution.
  {
    const Tensor xv = random_tensor({1, 8, 1, 2}, rng), tw = random_tensor({2, 5, 2}, rng), tb = random_tensor({2}, rng);
    Tensor eye({2, 2});
    eye[0] = eye[3] = 1.0;
    const Tensor adj = normalized_adjacency(Tensor({1, 1}));
    const Var y = graph_conv(g.constant(xv), adj, {g.constant(eye), g.constant(Tensor({2})), g.constant(tw), g.constant(tb)});
    const Var ref = conv1d(g.constant(xv.reshaped({1, 8, 2})), g.constant(tw), g.constant(tb), 1, 2);
    for (std::size_t i = 0; i < ref.value().size(); ++i) CHECK(y.value()[i] == doctest::Approx(ref.value()[i]));
  }
  // Disconnected nodes are independent: perturbing node 1 leaves node 0 unchanged.
  {
    Tensor xv = random_tensor({1, 6, 2, 3}, rng);
    const GraphConvWeights w{g.constant(random_tensor({4, 3}, rng)), g.constant(random_tensor({4}, rng)),
                             g.constant(random_tensor({4, 5, 4}, rng)), g.constant(random_tensor({4}, rng))};
    const Tensor adj = normalized_adjacency(Tensor({2, 2}));
    const Var a = graph_conv(g.constant(xv), adj, w);
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t c = 0; c < 3; ++c) xv[(t * 2 + 1) * 3 + c] += 5.0;
    }
    const Var b = graph_conv(g.constant(xv), adj, w);
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(a.value()[(t * 2) * 4 + c] == b.value()[(t * 2) * 4 + c]);
    }
  }
  // 3-node path graph against dense products.
  {
    const std::size_t T = 5, N = 3, C = 2, O = 2;
    const Tensor xv = random_tensor({1, T, N, C}, rng), cw = random_tensor({O, C}, rng), cb = random_tensor({O}, rng),
                 tw = random_tensor({O, 5, O}, rng), tb = random_tensor({O}, rng);
    const Tensor adj = normalized_adjacency(Tensor({3, 3}, {0, 1, 0, 1, 0, 1, 0, 1, 0}));
    // Dense oracle: A_hat = D^-1/2 (A+I) D^-1/2 with degrees {2, 3, 2}.
    const double d[3] = {2, 3, 2};
    const double ai[3][3] = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
    std::vector<double> mid(T * N * O);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
          double s = cb[o];
          for (std::size_t m = 0; m < N; ++m) {
            const double a = ai[n][m] / std::sqrt(d[n] * d[m]);
            for (std::size_t c = 0; c < C; ++c) s += a * cw[o * C + c] * xv[(t * N + m) * C + c];
          }
          mid[(t * N + n) * O + o] = s;
        }
      }
    }
    const Var y = graph_conv(g.constant(xv), adj, {g.constant(cw), g.constant(cb), g.constant(tw), g.constant(tb)});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
          double s = tb[o];
          for (std::size_t k = 0; k < 5; ++k) {
            const long src = static_cast<long>(t + k) - 2;
            if (src < 0 || src >= static_cast<long>(T)) continue;
            for (std::size_t c = 0; c < O; ++c) s += tw[(o * 5 + k) * O + c] * mid[(src * N + n) * O + c];
          }
          CHECK(y.value()[(t * N + n) * O + o] == doctest::Approx(s).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("backward basics") {
  ParameterSet ps;
  Parameter& w = ps.add("w", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Parameter& unused = ps.add("unused", Tensor({2}, {1, 1}));
  Graph g;
  const Tensor xv({1, 3}, {0.5, -1.0, 2.0});
  const Var loss = sum(linear(g.constant(xv), g.parameter(w)));
  g.parameter(unused);
  g.backward(loss);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(w.grad[o * 3 + i] == xv[i]);
  }
  CHECK(unused.grad[0] == 0.0);
  CHECK_THROWS_AS(g.backward(linear(g.constant(xv), g.parameter(w))), Error);
}

TEST_CASE("non-finite values raise") {
  Graph g;
  const Var x = g.constant(Tensor({2}, {0.0, 1.0}));
  try {
    log(x);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("frozen parameters receive no gradient") {
  ParameterSet a, b;
  Parameter& pa = a.add("a", Tensor({1}, {2.0}));
  Parameter& pb = b.add("b", Tensor({1}, {3.0}));
  Graph g;
  g.freeze(b);
  g.backward(mul(g.parameter(pa), g.parameter(pb)));
  CHECK(pa.grad[0] == 3.0);
  CHECK(pb.grad[0] == 0.0);
}

TEST_CASE("gradient suite: every operator on random small shapes") {
  Rng rng(7);
  int cases = 0;
  auto check = [&](ParameterSet& ps, const test::LossBuilder& build) {
    const auto rep = gradcheck(ps, build);
    INFO("worst parameter: " << rep.worst);
    CHECK(rep.max_rel_error < 1e-4);
    ++cases;
  };
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t B = 1 + rng.below(2), T = 2 + rng.below(5), C = 1 + rng.below(4), O = 1 + rng.below(4);
    {
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T, C}, rng));
      auto& w = ps.add("w", random_tensor({O, C}, rng));
      auto& b = ps.add("b", random_tensor({O}, rng));
      check(ps, [&](Graph& g) { return project(linear(g.parameter(x), g.parameter(w), g.parameter(b)), 1); });
    }
    {
      const std::size_t K = 1 + rng.below(3), S = 1 + rng.below(2), P = rng.below(2);
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T + K, C}, rng));
      auto& w = ps.add("w", random_tensor({O, K, C}, rng));
      auto& b = ps.add("b", random_tensor({O}, rng));
      check(ps, [&](Graph& g) { return project(conv1d(g.parameter(x), g.parameter(w), g.parameter(b), S, P), 2); });
    }
    {
      const std::size_t H = 1 + rng.below(4);
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T, C}, rng));
      auto& wih = ps.add("w_ih", random_tensor({3 * H, C}, rng));
      auto& whh = ps.add("w_hh", random_tensor({3 * H, H}, rng));
      auto& bih = ps.add("b_ih", random_tensor({3 * H}, rng));
      auto& bhh = ps.add("b_hh", random_tensor({3 * H}, rng));
      for (bool rev : {false, true}) {
        check(ps, [&](Graph& g) {
          GruWeights w{g.parameter(wih), g.parameter(whh), g.parameter(bih), g.parameter(bhh)};
          return project(gru(g.parameter(x), w, rev), 3);
        });
      }
    }
    {
      const std::size_t N = 2 + rng.below(3);
      Tensor adj({N, N});
      for (std::size_t i = 0; i + 1 < N; ++i) adj[i * N + i + 1] = adj[(i + 1) * N + i] = 1.0;
      const Tensor norm = normalized_adjacency(adj);
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T, N, C}, rng));
      auto& cw = ps.add("cw", random_tensor({O, C}, rng));
      auto& cb = ps.add("cb", random_tensor({O}, rng));
      auto& tw = ps.add("tw", random_tensor({O, 5, O}, rng));
      auto& tb = ps.add("tb", random_tensor({O}, rng));
      check(ps, [&](Graph& g) {
        return project(graph_conv(g.parameter(x), norm, {g.parameter(cw), g.parameter(cb), g.parameter(tw), g.parameter(tb)}), 4);
      });
    }
    {
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T, C}, rng));
      auto& y = ps.add("y", random_tensor({B, T, C}, rng, 0.5, 2.0));
      check(ps, [&](Graph& g) {
        const Var a = g.parameter(x), b = g.parameter(y);
        Var acc = add(mul(tanh(a), sigmoid(b)), leaky_relu(sub(a, b), 0.2));
        acc = add(acc, div(exp(scale(a, 0.3)), b));
        acc = add(acc, add(log(b), huber(scale(a, 3.0), 1.0)));
        acc = add(acc, add(abs(a), square(add_scalar(a, 0.1))));
        acc = add(acc, clamp(b, 0.0, 10.0));
        return project(acc, 5);
      });
    }
    {
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T, 3 * C}, rng));
      auto& y = ps.add("y", random_tensor({B, C}, rng));
      check(ps, [&](Graph& g) {
        const Var a = g.parameter(x);
        const Var n = normalize_groups(a, 3);
        const Var rep = repeat_time(g.parameter(y), T);
        std::vector<Var> parts{n, rep};
        const Var cat = concat_last(parts);
        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < B; ++i) order.push_back(B - 1 - i);
        const Var mixed = add(cat, gather_items(cat, order));
        const Var sel = select_time(mixed, T - 1);
        const Var pooled = mean_time(mixed);
        return add(add(project(sel, 6), project(pooled, 7)),
                   add(project(sum_per_item(reshape(mixed, {B, T * 4 * C})), 8), mean(mixed)));
      });
    }
    {
      Tensor m = random_tensor({T + 1, T}, rng);
      ParameterSet ps;
      auto& x = ps.add("x", random_tensor({B, T, C}, rng));
      check(ps, [&](Graph& g) { return project(mix_axis(g.parameter(x), m, 1), 9); });
    }
  }
  CHECK(cases >= 20);
}

TEST_CASE("adam closed form and convergence") {
  {
    ParameterSet ps;
    Parameter& p = ps.add("p", Tensor({2}, {1.0, -1.0}));
    Adam opt(ps, {0.1, 0.5, 0.999, 1e-8});
    opt.step();
    CHECK(p.value[0] == 1.0);
    CHECK(p.value[1] == -1.0);
    CHECK(opt.steps() == 1);
    Adam fresh(ps, {0.1, 0.5, 0.999, 1e-8});
    p.grad[0] = 3.0;
    p.grad[1] = -0.5;
    fresh.step();
    // First step with a constant gradient g moves by lr * g / (|g| + eps).
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.value[1] == doctest::Approx(-1.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
    CHECK(p.grad[0] == 0.0);
  }
  {
    // Quadratic bowl (x - 3)^2 + 2 (y + 1)^2; oracle: the same update run as scalars.
    ParameterSet ps;
    Parameter& p = ps.add("p", Tensor({2}, {0.0, 0.0}));
    Adam opt(ps, {0.1, 0.9, 0.999, 1e-8});
    auto loss = [](double x, double y) { return (x - 3) * (x - 3) + 2 * (y + 1) * (y + 1); };
    const double start = loss(0, 0);
    double sx = 0, sy = 0, mx = 0, my = 0, vx = 0, vy = 0;
    for (int k = 1; k <= 100; ++k) {
      p.grad[0] = 2 * (p.value[0] - 3);
      p.grad[1] = 4 * (p.value[1] + 1);
      opt.step();
      const double gx = 2 * (sx - 3), gy = 4 * (sy + 1);
      mx = 0.9 * mx + 0.1 * gx;
      my = 0.9 * my + 0.1 * gy;
      vx = 0.999 * vx + 0.001 * gx * gx;
      vy = 0.999 * vy + 0.001 * gy * gy;
      const double c1 = 1 - std::pow(0.9, k), c2 = 1 - std::pow(0.999, k);
      sx -= 0.1 * (mx / c1) / (std::sqrt(vx / c2) + 1e-8);
      sy -= 0.1 * (my / c1) / (std::sqrt(vy / c2) + 1e-8);
    }
    CHECK(p.value[0] == doctest::Approx(sx).epsilon(1e-12));
    CHECK(p.value[1] == doctest::Approx(sy).epsilon(1e-12));
    CHECK(loss(p.value[0], p.value[1]) <= 0.01 * start);
  }
}

TEST_CASE("determinism of forward, backward and adam") {
  auto run = [] {
    Rng rng(9);
    ParameterSet ps;
    LinearLayer fc(ps, "fc", 4, 3, rng);
    BiGruLayer rnn(ps, "gru", 3, 5, rng);
    Adam opt(ps, {});
    const Tensor x = random_tensor({2, 6, 4}, rng);
    for (int step = 0; step < 3; ++step) {
      Graph g;
      auto [f, b] = rnn(fc(g.constant(x)));
      g.backward(sum(square(add(f, b))));
      opt.step();
    }
    std::vector<double> all;
    ps.for_each([&](const Parameter& p) { all.insert(all.end(), p.value.values().begin(), p.value.values().end()); });
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint roundtrip is bit-exact and corruption is rejected") {
  const auto dir = test::temp_dir("ckpt");
  Rng rng(10);
  ParameterSet ps;
  LinearLayer fc(ps, "fc", 4, 3, rng);
  Conv1dLayer conv(ps, "conv", 2, 2, 3, 1, 1, rng);
  round_to_storage(ps);
  save_checkpoint(dir / "a.ckpt", ps, {{"note", "unit"}});

  ParameterSet other;
  Rng rng2(99);
  LinearLayer fc2(other, "fc", 4, 3, rng2);
  Conv1dLayer conv2(other, "conv", 2, 2, 3, 1, 1, rng2);
  const Checkpoint ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.config["note"] == "unit");
  apply_checkpoint(ck, other);
  CHECK(other.get("fc.weight").value.storage() == ps.get("fc.weight").value.storage());
  CHECK(other.get("conv.weight").value.storage() == ps.get("conv.weight").value.storage());

  save_checkpoint(dir / "b.ckpt", other, {{"note", "unit"}});
  CHECK(io::read_file(dir / "a.ckpt") == io::read_file(dir / "b.ckpt"));

  auto bytes = io::read_file(dir / "a.ckpt");
  auto bad = bytes;
  bad[0] = 'X';
  io::write_file_atomic(dir / "bad.ckpt", bad);
  try {
    load_checkpoint(dir / "bad.ckpt");
    FAIL("expected BadMagic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 7);
  io::write_file_atomic(dir / "trunc.ckpt", truncated);
  try {
    load_checkpoint(dir / "trunc.ckpt");
    FAIL("expected Truncated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Truncated);
  }
  auto version = bytes;
  version[4] = 9;
  io::write_file_atomic(dir / "ver.ckpt", version);
  try {
    load_checkpoint(dir / "ver.ckpt");
    FAIL("expected VersionUnsupported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionUnsupported);
  }
}
