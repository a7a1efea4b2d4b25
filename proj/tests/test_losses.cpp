#include <catch2/catch_amalgamated.hpp>

#include "asfm/losses.hpp"
#include "asfm/rng.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace asfm;
using ad::constant;
using ad::parameter;
using ad::Tensor;
using ad::VarPtr;

namespace {

Tensor cloud_tensor(const PointCloud& c) {
  Tensor t = Tensor::zeros({static_cast<std::int64_t>(c.size()), 3});
  for (std::size_t i = 0; i < c.size(); ++i) {
    t.at(static_cast<std::int64_t>(i) * 3) = c[i].x;
    t.at(static_cast<std::int64_t>(i) * 3 + 1) = c[i].y;
    t.at(static_cast<std::int64_t>(i) * 3 + 2) = c[i].z;
  }
  return t;
}

}  // namespace

TEST_CASE("cd_t: identity, analytic one-point case, empty rejection") {
  PointCloud p({{0.25, -0.5, 1.0}, {0.0, 0.0, 0.0}});
  CHECK(losses::cd_t_value(p, p) == 0.0);

  PointCloud a({{0, 0, 0}}), b({{1, 0, 0}});
  CHECK(losses::cd_t_value(a, b) == Catch::Approx(2.0).epsilon(1e-15));

  PointCloud empty;
  CHECK_THROWS_AS(losses::cd_t_value(empty, a), std::invalid_argument);
  CHECK_THROWS_AS(losses::cd_t_value(a, empty), std::invalid_argument);
}

TEST_CASE("cd_p: identity and analytic one-point case") {
  PointCloud p({{0.25, -0.5, 1.0}, {0.0, 0.0, 0.0}});
  CHECK(losses::cd_p_value(p, p) == Catch::Approx(0.0).margin(2e-6));  // sqrt eps clamp

  PointCloud a({{0, 0, 0}}), b({{1, 0, 0}});
  CHECK(losses::cd_p_value(a, b) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("chamfer distances match the exhaustive oracle on random clouds") {
  Rng rng(61);
  for (int rep = 0; rep < 30; ++rep) {
    PointCloud p = oracle::random_cloud(rng, 32);
    PointCloud q = oracle::random_cloud(rng, 32);
    CHECK(std::abs(losses::cd_t_value(p, q) - oracle::cd_t_ref(p, q)) < 1e-12);
    CHECK(std::abs(losses::cd_p_value(p, q) - oracle::cd_p_ref(p, q)) < 1e-12);
  }
}

TEST_CASE("chamfer distances are symmetric, non-negative, positive when clouds differ") {
  Rng rng(62);
  for (int rep = 0; rep < 20; ++rep) {
    PointCloud p = oracle::random_cloud(rng, 16);
    PointCloud q = oracle::random_cloud(rng, 12);
    const double t1 = losses::cd_t_value(p, q), t2 = losses::cd_t_value(q, p);
    CHECK(t1 == Catch::Approx(t2).epsilon(1e-14));
    CHECK(t1 >= 0.0);
    CHECK(t1 > 0.0);  // random clouds differ almost surely
    const double p1 = losses::cd_p_value(p, q), p2 = losses::cd_p_value(q, p);
    CHECK(p1 == Catch::Approx(p2).epsilon(1e-14));
    CHECK(p1 > 0.0);
  }
}

TEST_CASE("cd_t decreases when a point moves strictly closer to its nearest neighbor") {
  PointCloud q({{0, 0, 0}, {5, 0, 0}});
  PointCloud p1({{2, 0, 0}, {5, 1, 0}});
  PointCloud p2({{1, 0, 0}, {5, 1, 0}});  // first point moved toward its NN at origin
  CHECK(losses::cd_t_value(p2, q) < losses::cd_t_value(p1, q));
}

TEST_CASE("cd gradients match finite differences") {
  Rng rng(63);
  for (int rep = 0; rep < 5; ++rep) {
    PointCloud pc = oracle::random_cloud(rng, 8);
    PointCloud qc = oracle::random_cloud(rng, 6);
    VarPtr p = parameter(cloud_tensor(pc));
    VarPtr q = parameter(cloud_tensor(qc));
    auto ft = [&] { return losses::cd_t(p, q); };
    CHECK(gradcheck::relative_error(ft, {p, q}) < 1e-4);
    auto fp = [&] { return losses::cd_p(p, q); };
    CHECK(gradcheck::relative_error(fp, {p, q}) < 1e-4);
  }
}

TEST_CASE("feat_match: trivial values") {
  VarPtr same = constant(Tensor({1, 4}, {1, 2, 3, 4}));
  CHECK(losses::feat_match(same, same)->val.v[0] == Catch::Approx(0.0).margin(2e-6));

  VarPtr fp = constant(Tensor({1, 2}, {0, 0}));
  VarPtr fc = constant(Tensor({1, 2}, {3, 4}));
  CHECK(losses::feat_match(fp, fc)->val.v[0] == Catch::Approx(5.0).margin(1e-9));

  // batch of two pairs sums the distances
  VarPtr bp = constant(Tensor({2, 2}, {0, 0, 1, 1}));
  VarPtr bc = constant(Tensor({2, 2}, {3, 4, 1, 2}));
  CHECK(losses::feat_match(bp, bc)->val.v[0] == Catch::Approx(6.0).margin(1e-6));

  CHECK_THROWS_AS(losses::feat_match(fp, constant(Tensor({1, 3}, {1, 2, 3}))),
                  std::invalid_argument);
}

TEST_CASE("feat_match satisfies the triangle inequality per pair") {
  Rng rng(64);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor a = Tensor::zeros({1, 8}), b = Tensor::zeros({1, 8}), c = Tensor::zeros({1, 8});
    for (int i = 0; i < 8; ++i) {
      a.at(i) = rng.uniform(-2, 2);
      b.at(i) = rng.uniform(-2, 2);
      c.at(i) = rng.uniform(-2, 2);
    }
    const double ab = losses::feat_match(constant(a), constant(b))->val.v[0];
    const double bc = losses::feat_match(constant(b), constant(c))->val.v[0];
    const double ac = losses::feat_match(constant(a), constant(c))->val.v[0];
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("feat_match gradient matches finite differences") {
  Rng rng(65);
  Tensor at = Tensor::zeros({2, 6});
  for (double& x : at.v) x = rng.uniform(-1, 1);
  Tensor bt = Tensor::zeros({2, 6});
  for (double& x : bt.v) x = rng.uniform(-1, 1);
  VarPtr a = parameter(at);
  VarPtr b = parameter(bt);
  auto f = [&] { return losses::feat_match(a, b); };
  CHECK(gradcheck::relative_error(f, {a, b}) < 1e-4);
}

TEST_CASE("overall_loss combines the three terms with scheduled weights") {
  losses::LossSchedule s;
  s.max_steps = 100;

  // constant-weight schedules for the arithmetic cases
  losses::LossSchedule gamma_only = s;
  gamma_only.alpha_start = gamma_only.alpha_end = 0.0;
  gamma_only.beta_value = 0.0;
  gamma_only.gamma_start = gamma_only.gamma_end = 1.0;
  CHECK(losses::overall_loss_value(0.7, 0.9, 0.4, gamma_only, 50) == Catch::Approx(0.4));

  losses::LossSchedule zeros = gamma_only;
  zeros.gamma_start = zeros.gamma_end = 0.0;
  CHECK(losses::overall_loss_value(1, 2, 3, zeros, 10) == 0.0);

  losses::LossSchedule mixed = s;
  mixed.alpha_start = mixed.alpha_end = 0.5;
  mixed.beta_value = 1.0;
  mixed.gamma_start = mixed.gamma_end = 2.0;
  CHECK(losses::overall_loss_value(0.2, 0.3, 0.4, mixed, 0) == Catch::Approx(1.2).epsilon(1e-14));
}

TEST_CASE("default schedule: alpha decays over first half, gamma ramps, beta fixed") {
  losses::LossSchedule s;
  s.max_steps = 1000;
  CHECK(s.at(0).alpha == Catch::Approx(1.0));
  CHECK(s.at(250).alpha == Catch::Approx(0.55));
  CHECK(s.at(500).alpha == Catch::Approx(0.1));
  CHECK(s.at(1000).alpha == Catch::Approx(0.1));
  CHECK(s.at(0).gamma == Catch::Approx(0.5));
  CHECK(s.at(1000).gamma == Catch::Approx(1.0));
  for (int step : {0, 123, 999}) CHECK(s.at(step).beta == 1.0);
  CHECK_THROWS_AS(s.at(-1), std::invalid_argument);
  CHECK_THROWS_AS(s.at(1001), std::invalid_argument);
}

TEST_CASE("composite cd_p loss through a small network matches finite differences") {
  Rng rng(66);
  VarPtr w = parameter(Tensor::zeros({3, 9}));
  for (double& x : w->val.v) x = rng.uniform(-0.8, 0.8);
  VarPtr b = parameter(Tensor::zeros({9}));
  for (double& x : b->val.v) x = rng.uniform(-0.2, 0.2);
  PointCloud in = oracle::random_cloud(rng, 5);
  PointCloud target = oracle::random_cloud(rng, 7);
  VarPtr x = constant(cloud_tensor(in));
  VarPtr t = constant(cloud_tensor(target));
  auto f = [&] {
    VarPtr h = ad::dense(x, w, b);                      // [5, 9]
    VarPtr pts = ad::reshape(h, {15, 3});               // decoded cloud
    return losses::cd_p(pts, t);
  };
  CHECK(gradcheck::relative_error(f, {w, b}) < 1e-4);
}
