#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "asfm/autodiff.hpp"
#include "asfm/optim.hpp"
#include "asfm/rng.hpp"
#include "support/gradcheck.hpp"

using namespace asfm;
using namespace asfm::ad;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double s = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = rng.uniform(-s, s);
  return t;
}

}  // namespace

TEST_CASE("dense: identity weights pass input through") {
  Tensor w = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i * 3 + i) = 1.0;
  VarPtr x = constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  VarPtr y = dense(x, constant(w), constant(Tensor::zeros({3})));
  CHECK(y->val.v == x->val.v);
}

TEST_CASE("dense: zero weights give constant rows") {
  VarPtr x = constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  VarPtr y = dense(x, constant(Tensor::zeros({3, 2})), constant(Tensor({2}, {7.0, -1.0})));
  REQUIRE(y->val.shape == std::vector<std::int64_t>{2, 2});
  CHECK(y->val.v == std::vector<double>{7.0, -1.0, 7.0, -1.0});
}

TEST_CASE("dense matches an independent triple-loop product") {
  Rng rng(41);
  Tensor xt = random_tensor(rng, {3, 4});
  Tensor wt = random_tensor(rng, {4, 5});
  Tensor bt = random_tensor(rng, {5});
  VarPtr y = dense(constant(xt), constant(wt), constant(bt));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double want = bt.at(j);
      for (int k = 0; k < 4; ++k) want += xt.at(i * 4 + k) * wt.at(k * 5 + j);
      CHECK(y->val.at(i * 5 + j) == Catch::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("dense rejects mismatched shapes") {
  VarPtr x = constant(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(dense(x, constant(Tensor::zeros({4, 5})), constant(Tensor::zeros({5}))),
                  std::invalid_argument);
  CHECK_THROWS_AS(dense(x, constant(Tensor::zeros({3, 5})), constant(Tensor::zeros({4}))),
                  std::invalid_argument);
}

TEST_CASE("shared_mlp with N=1 equals the dense stack on the single point") {
  Rng rng(42);
  std::vector<DenseLayer> layers{
      {parameter(random_tensor(rng, {3, 4})), parameter(random_tensor(rng, {4})), true},
      {parameter(random_tensor(rng, {4, 2})), parameter(random_tensor(rng, {2})), false}};
  Tensor pt = random_tensor(rng, {1, 1, 3});
  VarPtr via_mlp = shared_mlp(constant(pt), layers);
  VarPtr via_dense = dense_stack(constant(Tensor({1, 3}, pt.v)), layers);
  REQUIRE(via_mlp->val.numel() == via_dense->val.numel());
  for (std::size_t i = 0; i < via_mlp->val.v.size(); ++i)
    CHECK(via_mlp->val.v[i] == via_dense->val.v[i]);
}

TEST_CASE("shared_mlp is equivariant under point permutation") {
  Rng rng(43);
  std::vector<DenseLayer> layers{
      {parameter(random_tensor(rng, {3, 6})), parameter(random_tensor(rng, {6})), true}};
  Tensor pts = random_tensor(rng, {1, 5, 3});
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor permuted = Tensor::zeros({1, 5, 3});
  for (std::size_t i = 0; i < 5; ++i)
    for (int d = 0; d < 3; ++d) permuted.at(i * 3 + d) = pts.at(perm[i] * 3 + d);

  VarPtr a = shared_mlp(constant(pts), layers);
  VarPtr b = shared_mlp(constant(permuted), layers);
  for (std::size_t i = 0; i < 5; ++i)
    for (int d = 0; d < 6; ++d) CHECK(b->val.at(i * 6 + d) == a->val.at(perm[i] * 6 + d));
}

TEST_CASE("two-layer shared_mlp equals composing dense twice") {
  Rng rng(44);
  Tensor w1 = random_tensor(rng, {3, 4}), b1 = random_tensor(rng, {4});
  Tensor w2 = random_tensor(rng, {4, 2}), b2 = random_tensor(rng, {2});
  std::vector<DenseLayer> layers{{constant(w1), constant(b1), true},
                                 {constant(w2), constant(b2), false}};
  Tensor pts = random_tensor(rng, {2, 3, 3});
  VarPtr got = shared_mlp(constant(pts), layers);

  VarPtr flat = constant(Tensor({6, 3}, pts.v));
  VarPtr want = dense(relu(dense(flat, constant(w1), constant(b1))), constant(w2), constant(b2));
  REQUIRE(got->val.v.size() == want->val.v.size());
  for (std::size_t i = 0; i < want->val.v.size(); ++i) CHECK(got->val.v[i] == want->val.v[i]);
}

TEST_CASE("maxpool_points basics and tie rule") {
  // N = 1 passes the single row through
  VarPtr x1 = parameter(Tensor({1, 1, 3}, {5, -2, 0.5}));
  VarPtr p1 = maxpool_points(x1);
  CHECK(p1->val.v == std::vector<double>{5, -2, 0.5});

  // constant over N: value equals the constant, gradient goes to index 0
  VarPtr xc = parameter(Tensor({1, 3, 2}, {4, 7, 4, 7, 4, 7}));
  VarPtr pc = maxpool_points(xc);
  CHECK(pc->val.v == std::vector<double>{4, 7});
  backward(sum(pc));
  REQUIRE(xc->has_grad());
  CHECK(xc->grad.v == std::vector<double>{1, 1, 0, 0, 0, 0});
}

TEST_CASE("maxpool gradient matches finite differences") {
  Rng rng(45);
  for (int rep = 0; rep < 5; ++rep) {
    VarPtr x = parameter(random_tensor(rng, {2, 6, 4}));
    auto f = [&] { return sum(maxpool_points(x)); };
    CHECK(gradcheck::relative_error(f, {x}) < 1e-4);
  }
}

TEST_CASE("concat of one tensor is the identity; slice inverts concat") {
  Rng rng(46);
  Tensor a = random_tensor(rng, {2, 3});
  VarPtr one = concat({constant(a)}, 1);
  CHECK(one->val.v == a.v);

  Tensor b = random_tensor(rng, {2, 5});
  VarPtr cat = concat({constant(a), constant(b)}, 1);
  REQUIRE(cat->val.shape == std::vector<std::int64_t>{2, 8});
  VarPtr sa = slice(cat, 1, 0, 3);
  VarPtr sb = slice(cat, 1, 3, 5);
  CHECK(sa->val.v == a.v);
  CHECK(sb->val.v == b.v);
}

TEST_CASE("concat rejects mismatched non-axis dims") {
  CHECK_THROWS_AS(concat({constant(Tensor::zeros({2, 3})), constant(Tensor::zeros({3, 3}))}, 1),
                  std::invalid_argument);
}

TEST_CASE("concat and structural ops pass gradient checks") {
  Rng rng(47);
  VarPtr a = parameter(random_tensor(rng, {2, 3}));
  VarPtr b = parameter(random_tensor(rng, {2, 4}));
  auto f = [&] {
    VarPtr c = concat({a, b}, 1);
    return sum(mul(c, c));
  };
  CHECK(gradcheck::relative_error(f, {a, b}) < 1e-4);

  VarPtr r = parameter(random_tensor(rng, {3, 2}));
  auto g = [&] {
    VarPtr rep = repeat_rows(r, 3);
    return sum(mul(rep, rep));
  };
  CHECK(gradcheck::relative_error(g, {r}) < 1e-4);

  VarPtr e = parameter(random_tensor(rng, {2, 4}));
  auto h = [&] {
    VarPtr ex = expand_points(e, 5);
    return sum(mul(ex, ex));
  };
  CHECK(gradcheck::relative_error(h, {e}) < 1e-4);

  VarPtr gathered = parameter(random_tensor(rng, {4, 3}));
  auto fg = [&] {
    VarPtr sel = gather_rows(gathered, {2, 0, 2, 3});
    return sum(mul(sel, sel));
  };
  CHECK(gradcheck::relative_error(fg, {gathered}) < 1e-4);
}

TEST_CASE("backward: sum gives all-ones, squared norm gives 2x") {
  Rng rng(48);
  VarPtr x = parameter(random_tensor(rng, {3, 3}));
  backward(sum(x));
  REQUIRE(x->has_grad());
  for (double g : x->grad.v) CHECK(g == 1.0);

  x->grad = Tensor();
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < x->val.v.size(); ++i)
    CHECK(x->grad.v[i] == Catch::Approx(2.0 * x->val.v[i]).epsilon(1e-14));
}

TEST_CASE("backward rejects non-scalar losses") {
  VarPtr x = parameter(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(backward(x), std::invalid_argument);
}

TEST_CASE("dense stack passes a randomized gradient check") {
  Rng rng(49);
  for (int rep = 0; rep < 5; ++rep) {
    VarPtr w1 = parameter(random_tensor(rng, {3, 5}));
    VarPtr b1 = parameter(random_tensor(rng, {5}));
    VarPtr w2 = parameter(random_tensor(rng, {5, 2}));
    VarPtr b2 = parameter(random_tensor(rng, {2}));
    VarPtr x = parameter(random_tensor(rng, {4, 3}));
    auto f = [&] {
      VarPtr h = relu(dense(x, w1, b1));
      VarPtr y = dense(h, w2, b2);
      return sum(mul(y, y));
    };
    CHECK(gradcheck::relative_error(f, {w1, b1, w2, b2, x}) < 1e-4);
  }
}

TEST_CASE("pooled shared_mlp output is invariant under point permutation") {
  Rng rng(50);
  std::vector<DenseLayer> layers{
      {parameter(random_tensor(rng, {3, 8})), parameter(random_tensor(rng, {8})), true},
      {parameter(random_tensor(rng, {8, 4})), parameter(random_tensor(rng, {4})), false}};
  Tensor pts = random_tensor(rng, {1, 7, 3});
  VarPtr pooled = maxpool_points(shared_mlp(constant(pts), layers));

  for (int rep = 0; rep < 10; ++rep) {
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 6; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    Tensor permuted = Tensor::zeros({1, 7, 3});
    for (std::size_t i = 0; i < 7; ++i)
      for (int d = 0; d < 3; ++d) permuted.at(i * 3 + d) = pts.at(perm[i] * 3 + d);
    VarPtr p2 = maxpool_points(shared_mlp(constant(permuted), layers));
    CHECK(p2->val.v == pooled->val.v);  // bitwise
  }
}

TEST_CASE("optimizer: frozen parameters stay bitwise identical") {
  Rng rng(51);
  ModelParams params;
  params.add("a/w", random_tensor(rng, {4, 4}));
  params.add("b/w", random_tensor(rng, {4}));
  params.freeze_prefix("a/");
  const auto before = params.snapshot_bytes("a/");

  Optimizer opt({OptimizerConfig::Method::Adam, 1e-2});
  for (int i = 0; i < 20; ++i) {
    VarPtr loss = sum(mul(params.get("b/w"), params.get("b/w")));
    backward(loss);
    opt.step(params);
  }
  CHECK(params.snapshot_bytes("a/") == before);
  CHECK(opt.step_count() == 20);
}

TEST_CASE("optimizer: all-frozen step leaves parameters unchanged") {
  Rng rng(52);
  ModelParams params;
  params.add("w", random_tensor(rng, {3}));
  params.freeze_prefix("");
  const auto before = params.snapshot_bytes();
  Optimizer opt;
  opt.step(params);  // nothing trainable: no gradients required
  CHECK(params.snapshot_bytes() == before);
}

TEST_CASE("optimizer: missing gradient is an invalid state") {
  Rng rng(53);
  ModelParams params;
  params.add("w", random_tensor(rng, {3}));
  Optimizer opt;
  CHECK_THROWS_AS(opt.step(params), state_error);
}

TEST_CASE("plain gradient rule converges monotonically on a quadratic") {
  ModelParams params;
  params.add("x", Tensor({1}, {5.0}));
  Optimizer opt({OptimizerConfig::Method::Sgd, 0.1});
  double prev_dist = 5.0;
  for (int i = 0; i < 40; ++i) {
    VarPtr x = params.get("x");
    backward(mul(x, x));  // scalar x^2, gradient 2x
    opt.step(params);
    const double dist = std::abs(params.get("x")->val.v[0]);
    CHECK(dist <= prev_dist + 1e-15);
    prev_dist = dist;
  }
  CHECK(prev_dist < 5e-3);
  // closed-form trace: x_{t+1} = (1 - 2 lr) x_t
  double x = 5.0;
  for (int i = 0; i < 40; ++i) x *= (1.0 - 0.2);
  CHECK(params.get("x")->val.v[0] == Catch::Approx(x).margin(1e-12));
}
