#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "../support/layers.hpp"
#include "vdls/ops.hpp"
#include "vdls/optim.hpp"

using namespace vdls;
using vdls::testing::gradcheck;
using vdls::testing::random_tensor;

TEST_CASE("conv1d zero weights give the bias everywhere") {
  Tensor x({1, 1, 8}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  Tensor w({2, 1, 3}, 0.0f);
  Tensor b({2}, std::vector<float>{0.25f, -1.5f});
  auto y = conv1d(x, w, b);
  REQUIRE(y.shape() == Shape{1, 2, 8});
  for (int64_t k = 0; k < 8; ++k) {
    CHECK(y.at({0, 0, k}) == 0.25f);
    CHECK(y.at({0, 1, k}) == -1.5f);
  }
}

TEST_CASE("conv1d identity kernel copies the input") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({3, 1, 7}, rng);
  Tensor w({1, 1, 3}, std::vector<float>{0, 1, 0});
  auto y = conv1d(x, w, Tensor({1}, 0.0f));
  CHECK(y.vec() == x.vec());
}

TEST_CASE("conv1d zero padding at the ends") {
  Tensor x({1, 1, 3}, std::vector<float>{1, 2, 3});
  Tensor w({1, 1, 3}, std::vector<float>{1, 1, 1});
  auto y = conv1d(x, w, Tensor({1}, 0.0f));
  CHECK(y.vec() == std::vector<float>{3, 6, 5});
}

TEST_CASE("conv3d identity and constant cases") {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 1, 4, 4, 4}, rng);
  Tensor w({1, 1, 3, 3, 3}, 0.0f);
  w.mutable_values()[13] = 1.0f;
  CHECK(conv3d(x, w, Tensor({1}, 0.0f)).vec() == x.vec());
  Tensor zero({2, 1, 3, 3, 3}, 0.0f);
  auto y = conv3d(x, zero, Tensor({2}, std::vector<float>{0.5f, 2.0f}));
  for (int64_t i = 0; i < 64; ++i) {
    CHECK(y.values()[i] == 0.5f);
    CHECK(y.values()[64 + i] == 2.0f);
  }
}

TEST_CASE("avg_pool and nn_upsample arithmetic") {
  Tensor x({1, 1, 4}, std::vector<float>{1, 3, 5, 7});
  CHECK(avg_pool(x, 2, {2}).vec() == std::vector<float>{2, 6});
  Tensor c({1, 2, 8}, 3.5f);
  auto p = avg_pool(c, 2, {2});
  CHECK(p.shape() == Shape{1, 2, 4});
  for (float v : p.values()) CHECK(v == 3.5f);

  Tensor u({1, 1, 2}, std::vector<float>{2, 6});
  CHECK(nn_upsample(u, 2, {2}).vec() == std::vector<float>{2, 2, 6, 6});

  std::mt19937_64 rng(3);
  auto r = random_tensor({1, 2, 3, 2, 4}, rng);
  const auto back = avg_pool(nn_upsample(r, 2, {2, 3, 4}), 2, {2, 3, 4});
  REQUIRE(back.shape() == r.shape());
  for (size_t i = 0; i < r.values().size(); ++i) CHECK(back.values()[i] == doctest::Approx(r.values()[i]).epsilon(1e-6));
}

TEST_CASE("avg_pool backward spreads 1/2^k per window element") {
  std::mt19937_64 rng(4);
  auto x = random_tensor({1, 1, 4, 4}, rng).set_requires_grad(true);
  sum(avg_pool(x, 2, {2, 3})).backward();
  for (float g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("upsample adjoint: gradient of the sum is factor^k") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({1, 1, 2, 2, 2}, rng).set_requires_grad(true);
  sum(nn_upsample(x, 2, {2, 3, 4})).backward();
  for (float g : x.grad()) CHECK(g == 8.0f);
}

TEST_CASE("instance_norm cases") {
  Tensor c({1, 1, 5}, 4.0f);
  const auto cn = instance_norm(c);
  for (float v : cn.values()) CHECK(v == 0.0f);

  // mean 2, variance 1: (x - 2) / sqrt(1 + 1e-5)
  Tensor two({1, 1, 2}, std::vector<float>{1, 3});
  auto y = instance_norm(two);
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y.values()[0] == doctest::Approx(-s).epsilon(1e-6));
  CHECK(y.values()[1] == doctest::Approx(s).epsilon(1e-6));

  std::mt19937_64 rng(6);
  auto r = instance_norm(random_tensor({2, 3, 4, 5}, rng));
  for (int64_t g = 0; g < 6; ++g) {
    double m = 0.0;
    for (int64_t i = 0; i < 20; ++i) m += r.values()[g * 20 + i];
    CHECK(std::abs(m / 20.0) < 1e-5);
  }
}

TEST_CASE("relu and tanh values") {
  Tensor x({2}, std::vector<float>{-1, 2});
  CHECK(relu(x).vec() == std::vector<float>{0, 2});
  CHECK(vdls::tanh(Tensor({1}, 0.0f)).item() == 0.0f);
}

TEST_CASE("finite-difference gradients of every layer") {
  std::mt19937_64 rng(7);
  for (const auto& c : vdls::testing::layer_cases()) {
    CAPTURE(c.name);
    for (int rep = 0; rep < 5; ++rep) {
      auto inst = c.make(rng);
      auto res = gradcheck(inst.op, inst.inputs, rng);
      CHECK(res.max_rel_error < 1e-3);
      CHECK(res.max_grad_norm > 0.0);
    }
  }
}

TEST_CASE("spectral norm: diagonal, orthogonal and zero matrices") {
  std::vector<float> u{0.6f, 0.8f};
  Tensor d({2, 2}, std::vector<float>{3, 0, 0, 1});
  power_iteration(d.values(), 2, 2, u, 50);
  auto n = spectral_normalize(d, u, false);
  CHECK(n.values()[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(n.values()[3] == doctest::Approx(1.0 / 3.0).epsilon(1e-5));

  // A rotation has every singular value 1.
  const float c = std::cos(0.3f), s = std::sin(0.3f);
  Tensor q({2, 2}, std::vector<float>{c, -s, s, c});
  std::vector<float> uq{1.0f, 0.0f};
  power_iteration(q.values(), 2, 2, uq, 50);
  auto nq = spectral_normalize(q, uq, false);
  for (size_t i = 0; i < 4; ++i) CHECK(nq.values()[i] == doctest::Approx(q.values()[i]).epsilon(0.01));

  Tensor z({2, 3}, 0.0f);
  std::vector<float> uz{1.0f, 0.0f};
  const auto zn = spectral_normalize(z, uz, true);
  for (float v : zn.values()) CHECK(v == 0.0f);
}

TEST_CASE("spectral norm estimate tracks the SVD on random 8x8 matrices") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    auto w = random_tensor({8, 8}, rng);
    std::vector<float> u = vdls::testing::random_values(8, rng);
    const float sigma = power_iteration(w.values(), 8, 8, u, 50);
    Eigen::Matrix<double, 8, 8, Eigen::RowMajor> m;
    for (int i = 0; i < 64; ++i) m.data()[i] = w.values()[i];
    const double ref = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    CHECK(std::abs(sigma - ref) / ref < 0.01);
  }
}

TEST_CASE("fully connected layer forward") {
  Tensor x({1, 2}, std::vector<float>{1, 2});
  Tensor w({2, 2}, std::vector<float>{1, 0, 3, -1});
  Tensor b({2}, std::vector<float>{0.5f, 0});
  CHECK(linear(x, w, b).vec() == std::vector<float>{1.5f, 1});
}

TEST_CASE("Adam with beta1 = 0 keeps no momentum") {
  Tensor p({1}, std::vector<float>{1.0f});
  p.set_requires_grad(true);
  Adam opt({{"p", p}}, {.lr = 0.1f, .beta1 = 0.0f, .beta2 = 0.999f, .eps = 1e-8f});
  scale(sum(p), 3.0f).backward();
  opt.step();
  CHECK(opt.first_moment(0)[0] == 3.0f);
  scale(sum(p), -2.0f).backward();
  opt.step();
  CHECK(opt.first_moment(0)[0] == -2.0f);
}

TEST_CASE("Adam leaves parameters alone under a zero gradient") {
  Tensor p({3}, std::vector<float>{1, -2, 3});
  p.set_requires_grad(true);
  Adam opt({{"p", p}}, {});
  scale(sum(p), 0.0f).backward();
  opt.step();
  opt.step();
  CHECK(p.vec() == std::vector<float>{1, -2, 3});
}

TEST_CASE("Adam matches the hand recurrence over two steps") {
  // Constant gradient g = 0.5, beta1 = 0.9, beta2 = 0.999, lr = 0.01.
  // Step 1: m = 0.05, v = 0.00025, mhat = 0.5, vhat = 0.25 -> update 0.01.
  // Step 2: m = 0.095, v = 0.00049975, mhat = 0.5, vhat = 0.25 -> update 0.01.
  Tensor p({1}, std::vector<float>{2.0f});
  p.set_requires_grad(true);
  Adam opt({{"p", p}}, {.lr = 0.01f, .beta1 = 0.9f, .beta2 = 0.999f, .eps = 0.0f});
  scale(sum(p), 0.5f).backward();
  opt.step();
  CHECK(p.item() == doctest::Approx(1.99).epsilon(1e-6));
  scale(sum(p), 0.5f).backward();
  opt.step();
  CHECK(opt.first_moment(0)[0] == doctest::Approx(0.095).epsilon(1e-6));
  CHECK(opt.second_moment(0)[0] == doctest::Approx(0.00049975).epsilon(1e-5));
  CHECK(p.item() == doctest::Approx(1.98).epsilon(1e-6));
}

TEST_CASE("decoupled weight decay shrinks by lr * decay per step") {
  Tensor p({2}, std::vector<float>{1.0f, -4.0f});
  p.set_requires_grad(true);
  Adam opt({{"p", p}}, {.lr = 0.1f, .weight_decay = 0.5f});
  for (int i = 0; i < 3; ++i) {
    scale(sum(p), 0.0f).backward();
    opt.step();
  }
  // Zero gradient: only the decay acts, 0.95^3.
  CHECK(p.values()[0] == doctest::Approx(0.857375).epsilon(1e-6));
  CHECK(p.values()[1] == doctest::Approx(-3.4295).epsilon(1e-6));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(1e-3f, 0.02f, 0, 100) == doctest::Approx(1e-3));
  CHECK(cosine_lr(1e-3f, 0.02f, 99, 100) == doctest::Approx(2e-5));
  CHECK(cosine_lr(1.0f, 0.5f, 50, 101) == doctest::Approx(0.75));
  CHECK(cosine_lr(0.3f, 1.0f, 7, 10) == 0.3f);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x({2}, std::vector<float>{1, 2});
  x.set_requires_grad(true);
  Tensor y;
  {
    NoGradGuard g;
    y = scale(x, 2.0f);
  }
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shape errors are reported") {
  Tensor x({1, 2, 5}, 0.0f);
  Tensor w({1, 3, 3}, 0.0f);
  CHECK_THROWS_AS(conv1d(x, w, Tensor({1}, 0.0f)), std::invalid_argument);
  CHECK_THROWS_AS(avg_pool(x, 2, {2}), std::invalid_argument);
}
