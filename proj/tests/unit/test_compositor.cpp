#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vdls/compositor.hpp"

using namespace vdls;

namespace {

ViewDependentVolume random_view(int axis, int sign, int64_t w, int64_t h, int64_t l, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  ViewDependentVolume v;
  v.config = {.axis = axis, .sign = sign, .width = w, .height = h, .ray_length = l};
  v.normalization = {0.0, 1.0};
  v.values.resize(static_cast<size_t>(w * h * l));
  for (auto& x : v.values) x = d(rng);
  return v;
}

ViewDependentVolume constant_view(int axis, float c) {
  ViewDependentVolume v;
  v.config = {.axis = axis, .sign = 1, .width = 4, .height = 4, .ray_length = 4};
  v.normalization = {0.0, 1.0};
  v.values.assign(64, c);
  return v;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v{n(rng), n(rng), n(rng)};
  const double s = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / s, v[1] / s, v[2] / s};
}

}  // namespace

TEST_CASE("great-circle distance") {
  const Vec3 x{1, 0, 0}, y{0, 1, 0}, nx{-1, 0, 0};
  CHECK(great_circle(x, x) == 0.0);
  CHECK(great_circle(x, nx) == doctest::Approx(std::numbers::pi));
  CHECK(great_circle(x, y) == doctest::Approx(std::numbers::pi / 2));
  CHECK_THROWS(great_circle({2, 0, 0}, x));
}

TEST_CASE("view weights: clamp, symmetry and the equidistant viewpoint") {
  const Vec3 v0{1, 0, 0};
  CHECK(view_weight(v0, v0) == doctest::Approx(1.0 / kViewDistanceFloor));
  const Vec3 nv0{-1, 0, 0};
  CHECK(view_weight(nv0, v0) == view_weight(v0, v0));
  const double s = 1.0 / std::sqrt(3.0);
  const Vec3 diag{s, s, s};
  const double q0 = view_weight(diag, {1, 0, 0});
  CHECK(view_weight(diag, {0, 1, 0}) == doctest::Approx(q0));
  CHECK(view_weight(diag, {0, 0, 1}) == doctest::Approx(q0));
}

TEST_CASE("equidistant viewpoint gives the plain mean of the views") {
  std::mt19937_64 rng(1);
  auto a = random_view(0, 1, 4, 4, 4, rng), b = random_view(1, 1, 4, 4, 4, rng), c = random_view(2, 1, 4, 4, 4, rng);
  const double s = 1.0 / std::sqrt(3.0);
  const Vec3 p{0.3, 0.6, 0.45};
  float sa, sb, sc;
  sample_view_data(a, p, sa);
  sample_view_data(b, p, sb);
  sample_view_data(c, p, sc);
  CHECK(sample_fused(p, {&a, &b, &c}, {s, s, s}) == doctest::Approx((sa + sb + sc) / 3.0).epsilon(1e-6));
}

TEST_CASE("constant views fuse to the constant") {
  auto a = constant_view(0, 0.4f), b = constant_view(1, 0.4f), c = constant_view(2, 0.4f);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const Vec3 v = random_unit(rng);
    CHECK(sample_fused({0.2, 0.7, 0.5}, {&a, &b, &c}, v) == doctest::Approx(0.4f));
  }
}

TEST_CASE("identical views fuse to any one of them") {
  std::mt19937_64 rng(3);
  auto a = random_view(2, 1, 5, 5, 5, rng);
  auto fused = fuse_to_grid({&a, &a, &a}, random_unit(rng), {5, 5, 5});
  for (size_t i = 0; i < fused.values.size(); ++i) CHECK(fused.values[i] == doctest::Approx(a.values[i]).epsilon(1e-6));
}

TEST_CASE("fusion matches the brute-force oracle at random points") {
  std::mt19937_64 rng(4);
  auto a = random_view(0, 1, 6, 5, 7, rng), b = random_view(1, -1, 7, 4, 5, rng), c = random_view(2, 1, 5, 6, 8, rng);
  std::vector<const ViewDependentVolume*> views{&a, &b, &c};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 300; ++n) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    const Vec3 v = random_unit(rng);
    const double ref = vdls::testing::brute_fused(views, p, v);
    CHECK(std::abs(sample_fused(p, views, v) - ref) < 1e-5);
  }
}

TEST_CASE("viewpoint on an axis returns that view's sample") {
  std::mt19937_64 rng(5);
  auto a = random_view(0, 1, 4, 4, 4, rng), b = random_view(1, 1, 4, 4, 4, rng), c = random_view(2, 1, 4, 4, 4, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 50; ++n) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    float sb;
    sample_view_data(b, p, sb);
    const float f = sample_fused(p, {&a, &b, &c}, {0, 1, 0});
    CHECK(std::abs(f - sb) <= 1e-5 * std::max(1.0f, std::abs(sb)));
  }
}

TEST_CASE("fused values lie within the view values") {
  std::mt19937_64 rng(6);
  auto a = random_view(0, 1, 4, 5, 6, rng), b = random_view(1, 1, 6, 4, 5, rng), c = random_view(2, 1, 5, 6, 4, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 200; ++n) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    float s[3];
    sample_view_data(a, p, s[0]);
    sample_view_data(b, p, s[1]);
    sample_view_data(c, p, s[2]);
    const float f = sample_fused(p, {&a, &b, &c}, random_unit(rng));
    CHECK(f >= std::min({s[0], s[1], s[2]}) - 1e-6f);
    CHECK(f <= std::max({s[0], s[1], s[2]}) + 1e-6f);
  }
}

TEST_CASE("fuse_to_grid shape, outside points and normalization check") {
  std::mt19937_64 rng(7);
  auto a = random_view(0, 1, 4, 4, 4, rng), b = random_view(1, 1, 4, 4, 4, rng), c = random_view(2, 1, 4, 4, 4, rng);
  const auto g = fuse_to_grid({&a, &b, &c}, {0, 0, 1}, {6, 5, 4});
  CHECK(g.extents == Extents3{6, 5, 4});
  CHECK(g.values.size() == 120);
  CHECK(sample_fused({1.2, 0.5, 0.5}, {&a, &b, &c}, {0, 0, 1}) == 0.0f);
  c.normalization = {0.0, 2.0};
  CHECK_THROWS(fuse_to_grid({&a, &b, &c}, {0, 0, 1}, {4, 4, 4}));
}

TEST_CASE("sensitivity aggregates absolute per-view derivatives") {
  CHECK(aggregate_sensitivity({0.7, -0.7, 0.7}) == doctest::Approx(0.7));
  CHECK(aggregate_sensitivity({0.0, 0.0, 0.0}) == 0.0);
}
