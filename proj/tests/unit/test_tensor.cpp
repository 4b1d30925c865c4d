#include <doctest.h>

#include <cmath>

#include "../common/oracles.hpp"
#include "dct/nn.hpp"
#include "dct/rng.hpp"
#include "dct/tensor.hpp"

using namespace dct;

namespace {

Eigen::MatrixXd rand_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  return rng.normal_matrix(r, c);
}

// Weighted sum keeps gradients of every output entry distinct.
Var weighted(Graph& g, Var x, Rng& rng) {
  const Tensor& v = g.value(x);
  return g.sum(g.mul(x, g.constant(rng.normal_matrix(v.rows(), v.cols()))));
}

}  // namespace

TEST_CASE("selu fixed point and constants") {
  CHECK(selu(0.0) == 0.0);
  Graph g;
  const Var x = g.constant(Tensor::Zero(2, 3));
  CHECK(g.value(g.selu(x)).isZero(0.0));
  CHECK(selu(1.0) == doctest::Approx(kSeluScale).epsilon(1e-15));
  CHECK(selu(-1.0) == doctest::Approx(kSeluScale * kSeluAlpha * std::expm1(-1.0)));
}

TEST_CASE("identity linear layer returns its input") {
  Parameter w("w", Tensor::Identity(3, 3));
  Parameter b("b", Tensor::Zero(1, 3));
  Rng rng(1);
  const Tensor x = rng.normal_matrix(5, 3);
  Graph g;
  CHECK(g.value(g.linear(g.constant(x), w, b)) == x);
}

TEST_CASE("two-layer MLP matches hand evaluation") {
  Rng rng(2);
  Mlp mlp("m", {2, 2, 2}, false, rng);
  Eigen::Matrix2d W1, W2;
  W1 << 0.5, -1.0, 2.0, 0.25;
  W2 << 1.5, 0.0, -0.5, 1.0;
  mlp.layers[0].weight.value = W1;
  mlp.layers[0].bias.value = Eigen::RowVector2d(0.1, -0.2);
  mlp.layers[1].weight.value = W2;
  mlp.layers[1].bias.value = Eigen::RowVector2d(0.0, 0.3);
  Eigen::Matrix2d x;
  x << 1.0, 2.0, -1.0, 0.5;
  Graph g;
  const Tensor out = g.value(mlp(g, g.constant(x)));
  for (int i = 0; i < 2; ++i) {
    const double h0 = selu(x(i, 0) * 0.5 + x(i, 1) * 2.0 + 0.1);
    const double h1 = selu(x(i, 0) * -1.0 + x(i, 1) * 0.25 - 0.2);
    CHECK(out(i, 0) == doctest::Approx(h0 * 1.5 + h1 * -0.5).epsilon(1e-12));
    CHECK(out(i, 1) == doctest::Approx(h1 * 1.0 + 0.3).epsilon(1e-12));
  }
}

TEST_CASE("gradient of squared norm is 2x") {
  Rng rng(3);
  const Tensor x = rng.normal_matrix(4, 3);
  Graph g;
  const Var v = g.variable(x);
  g.backward(g.sum(g.square(v)));
  CHECK((g.grad(v) - 2.0 * x).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(4);
  const Tensor x = rand_mat(6, 3, rng);
  const Tensor pos = x.cwiseAbs().array() + 0.5;
  const Tensor other = rand_mat(3, 4, rng);
  const Tensor same = rand_mat(6, 3, rng);
  const Tensor row = rand_mat(1, 3, rng);
  Segments segs;
  segs.push(2);
  segs.push(3);
  segs.push(1);
  const double tol = 1e-4;

  auto run = [&](const char* name, const std::function<Var(Graph&, Var)>& f,
                 const Tensor& at) {
    Rng wr(99);
    const double err = oracle::check_op(
        [&](Graph& g, Var v) {
          Rng local = wr;
          return weighted(g, f(g, v), local);
        },
        at);
    INFO(name << " relative error " << err);
    CHECK(err < tol);
  };

  run("matmul", [&](Graph& g, Var v) { return g.matmul(v, g.constant(other)); }, x);
  run("matmul rhs", [&](Graph& g, Var v) { return g.matmul(g.constant(other.transpose()), v); },
      rand_mat(3, 5, rng));
  run("add", [&](Graph& g, Var v) { return g.add(v, g.constant(same)); }, x);
  run("sub", [&](Graph& g, Var v) { return g.sub(g.constant(same), v); }, x);
  run("mul", [&](Graph& g, Var v) { return g.mul(v, g.constant(same)); }, x);
  run("mul self", [&](Graph& g, Var v) { return g.mul(v, v); }, x);
  run("scale", [&](Graph& g, Var v) { return g.scale(v, -2.5); }, x);
  run("add_row", [&](Graph& g, Var v) { return g.add_row(v, g.constant(row)); }, x);
  run("add_row row", [&](Graph& g, Var v) { return g.add_row(g.constant(same), v); }, row);
  run("concat_cols", [&](Graph& g, Var v) {
    const Var parts[] = {v, g.constant(same), v};
    return g.concat_cols(parts);
  }, x);
  run("concat_rows", [&](Graph& g, Var v) {
    const Var parts[] = {g.constant(same), v};
    return g.concat_rows(parts);
  }, x);
  run("slice_rows", [&](Graph& g, Var v) { return g.slice_rows(v, 1, 3); }, x);
  run("slice_cols", [&](Graph& g, Var v) { return g.slice_cols(v, 1, 2); }, x);
  run("segment_mean", [&](Graph& g, Var v) { return g.segment_mean(v, segs); }, x);
  run("segment_expand", [&](Graph& g, Var v) { return g.segment_expand(v, segs); },
      rand_mat(3, 3, rng));
  run("selu", [&](Graph& g, Var v) { return g.selu(v); }, x);
  run("gelu", [&](Graph& g, Var v) { return g.gelu(v); }, x);
  run("square", [&](Graph& g, Var v) { return g.square(v); }, x);
  run("sqrt", [&](Graph& g, Var v) { return g.sqrt(v); }, pos);
  run("normalize_rows", [&](Graph& g, Var v) { return g.normalize_rows(v); }, x);
  run("sort_columns", [&](Graph& g, Var v) { return g.sort_columns(v, segs); }, x);
  run("sort_columns whole", [&](Graph& g, Var v) { return g.sort_columns(v); }, x);
  run("mean", [&](Graph& g, Var v) { return g.mean(v); }, x);
  run("row_sums", [&](Graph& g, Var v) { return g.row_sums(v); }, x);
  run("pairwise_distances", [&](Graph& g, Var v) {
    return g.pairwise_distances(v, g.constant(same));
  }, x);
  run("pairwise_distances self", [&](Graph& g, Var v) {
    return g.pairwise_distances(v, g.constant(same.topRows(4)));
  }, x.bottomRows(2));
}

TEST_CASE("linear and gather parameter gradients match finite differences") {
  Rng rng(5);
  Parameter w("w", rng.normal_matrix(3, 4));
  Parameter b("b", rng.normal_matrix(1, 4));
  Parameter table("t", rng.normal_matrix(5, 4));
  const Tensor x = rng.normal_matrix(6, 3);
  const Tensor c = rng.normal_matrix(6, 4);
  const std::vector<std::size_t> idx{4, 0, 4, 2, 1, 0};
  auto build = [&](Graph& g) {
    const Var y = g.add(g.linear(g.constant(x), w, b), g.gather_rows(table, idx));
    return g.sum(g.mul(g.selu(y), g.constant(c)));
  };
  const double err = oracle::check_params(
      [&] {
        Graph g;
        return g.value(build(g))(0, 0);
      },
      [&] {
        Graph g;
        g.backward(build(g));
      },
      {&w, &b, &table});
  CHECK(err < 1e-4);
}

TEST_CASE("random MLP parameter gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed, "mlp.fd");
    Mlp mlp("m", {3, 8, 2}, false, rng);
    const Tensor x = rng.normal_matrix(7, 3);
    const Tensor c = rng.normal_matrix(7, 2);
    std::vector<Parameter*> params;
    mlp.collect(params);
    auto build = [&](Graph& g) { return g.sum(g.mul(mlp(g, g.constant(x)), g.constant(c))); };
    const double err = oracle::check_params(
        [&] {
          Graph g;
          return g.value(build(g))(0, 0);
        },
        [&] {
          Graph g;
          g.backward(build(g));
        },
        params);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("sort backward routes gradient by the forward permutation") {
  Tensor x(5, 1);
  x << 3.0, -1.0, 2.0, 0.5, -4.0;
  Graph g;
  const Var v = g.variable(x);
  const Var s = g.sort_columns(v);
  Tensor up(5, 1);
  up << 10.0, 20.0, 30.0, 40.0, 50.0;
  g.backward(s, up);
  // sorted order: -4 (row 4), -1 (1), 0.5 (3), 2 (2), 3 (0)
  Tensor expect(5, 1);
  expect << 50.0, 20.0, 40.0, 30.0, 10.0;
  CHECK(g.grad(v) == expect);
}

TEST_CASE("sort: perturbing one input moves exactly one output slot") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = rng.normal_matrix(8, 1);
    Graph g0;
    const Tensor base = g0.value(g0.sort_columns(g0.constant(x)));
    const Eigen::Index i = static_cast<Eigen::Index>(rng.index(8));
    Tensor xp = x;
    xp(i, 0) += 1e-9;
    Graph g1;
    const Tensor moved = g1.value(g1.sort_columns(g1.constant(xp)));
    const Tensor diff = moved - base;
    int changed = 0;
    for (Eigen::Index k = 0; k < 8; ++k)
      if (diff(k, 0) != 0.0) {
        ++changed;
        CHECK(diff(k, 0) == doctest::Approx(1e-9).epsilon(1e-6));
      }
    CHECK(changed == 1);
  }
}

TEST_CASE("sort ties keep original order") {
  Tensor x(4, 1);
  x << 1.0, 0.0, 1.0, 0.0;
  Graph g;
  const Var v = g.variable(x);
  const Var s = g.sort_columns(v);
  Tensor up(4, 1);
  up << 1.0, 2.0, 3.0, 4.0;
  g.backward(s, up);
  Tensor expect(4, 1);
  expect << 3.0, 1.0, 4.0, 2.0;
  CHECK(g.grad(v) == expect);
}

TEST_CASE("forward is deterministic") {
  Rng a(7), b(7);
  Mlp m1("m", {2, 16, 2}, false, a);
  Mlp m2("m", {2, 16, 2}, false, b);
  Rng rx(8);
  const Tensor x = rx.normal_matrix(32, 2);
  Graph g1, g2;
  CHECK(g1.value(m1(g1, g1.constant(x))) == g2.value(m2(g2, g2.constant(x))));
}

TEST_CASE("non-finite values are rejected") {
  Graph g;
  Tensor x(1, 1);
  x(0, 0) = -1.0;
  CHECK_THROWS_AS(g.sqrt(g.constant(x)), NonFiniteError);
}

TEST_CASE("shape mismatches throw") {
  Graph g;
  const Var a = g.constant(Tensor::Zero(2, 3));
  const Var b = g.constant(Tensor::Zero(2, 2));
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.matmul(a, a), ShapeError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(9);
  Parameter p("p", rng.normal_matrix(3, 2));
  const Tensor before = p.value;
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step({&p}, st, 0.1);
  CHECK(p.value == before);
}

TEST_CASE("adam: first step has magnitude lr") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    Parameter p("p", rng.normal_matrix(2, 2));
    p.grad = rng.normal_matrix(2, 2) * std::pow(10.0, trial - 5);
    const Tensor g = p.grad;
    const Tensor before = p.value;
    AdamState st;
    adam_step({&p}, st, 0.01);
    const Tensor step = (p.value - before).cwiseAbs();
    // Exactly lr |g| / (|g| + eps); equal to lr once |g| dominates eps.
    const Tensor expect = 0.01 * g.cwiseAbs().array() / (g.cwiseAbs().array() + st.eps);
    CHECK((step - expect).cwiseAbs().maxCoeff() < 1e-15);
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (std::abs(g.data()[i]) >= 0.1) CHECK(std::abs(step.data()[i] - 0.01) < 1e-9);
  }
}

TEST_CASE("adam minimizes a 1-D quadratic") {
  Parameter w("w", Tensor::Constant(1, 1, 1.0));
  AdamState st;
  for (int i = 0; i < 500; ++i) {
    w.grad(0, 0) = 2.0 * w.value(0, 0);
    adam_step({&w}, st, 0.1);
  }
  CHECK(std::abs(w.value(0, 0)) < 1e-3);
}
