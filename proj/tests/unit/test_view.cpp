#include <doctest.h>

#include <random>

#include "tmpdir.hpp"
#include "vdls/view.hpp"

using namespace vdls;

namespace {

Volume ramp_volume(const Extents3& e, int axis) {
  Volume v;
  v.extents = e;
  v.value_range = {-1.0, 1.0};
  v.values.resize(static_cast<size_t>(v.size()));
  for (int64_t i = 0; i < e[0]; ++i)
    for (int64_t j = 0; j < e[1]; ++j)
      for (int64_t k = 0; k < e[2]; ++k) {
        const int64_t idx[3] = {i, j, k};
        v.values[static_cast<size_t>((i * e[1] + j) * e[2] + k)] =
            static_cast<float>((idx[axis] + 0.5) / static_cast<double>(e[static_cast<size_t>(axis)]));
      }
  return v;
}

}  // namespace

TEST_CASE("view extents and plane axes") {
  ViewConfig c{.axis = 0, .sign = 1, .width = 4, .height = 2, .ray_length = 8};
  CHECK(c.plane_axes() == std::array<int, 2>{1, 2});
  CHECK(view_extents({8, 6, 6}, c) == std::array<int64_t, 3>{4, 2, 8});
  c.ray_length = 6;
  CHECK_THROWS(view_extents({8, 6, 6}, c));
}

TEST_CASE("constant volume gives constant view data") {
  Volume v;
  v.extents = {6, 6, 6};
  v.values.assign(216, 0.25f);
  v.value_range = {-1, 1};
  for (int axis = 0; axis < 3; ++axis) {
    auto vdv = sample_view(v, {.axis = axis, .sign = 1, .width = 4, .height = 3, .ray_length = 6});
    for (float x : vdv.values) CHECK(x == doctest::Approx(0.25f));
  }
}

TEST_CASE("linear ramp along x1 viewed down axis 3 gives constant rays") {
  const auto v = ramp_volume({8, 8, 8}, 0);
  const auto vdv = sample_view(v, {.axis = 2, .sign = 1, .width = 4, .height = 4, .ray_length = 8});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      for (int64_t k = 0; k < 8; ++k) CHECK(vdv.at(i, j, k) == doctest::Approx((i + 0.5) / 4.0).epsilon(1e-6));
}

TEST_CASE("ray axis is copied at full resolution and reversed for sign -1") {
  const auto v = ramp_volume({4, 4, 8}, 2);
  const auto fwd = sample_view(v, {.axis = 2, .sign = 1, .width = 4, .height = 4, .ray_length = 8});
  const auto rev = sample_view(v, {.axis = 2, .sign = -1, .width = 4, .height = 4, .ray_length = 8});
  for (int64_t k = 0; k < 8; ++k) {
    CHECK(fwd.at(1, 2, k) == doctest::Approx((k + 0.5) / 8.0));
    CHECK(rev.at(1, 2, k) == doctest::Approx((7 - k + 0.5) / 8.0));
  }
}

TEST_CASE("ray extraction order and inverse") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> d(-1, 1);
  Volume v;
  v.extents = {2, 2, 5};
  v.value_range = {-1, 1};
  for (int i = 0; i < 20; ++i) v.values.push_back(d(rng));
  const ViewConfig c{.axis = 2, .sign = 1, .width = 2, .height = 2, .ray_length = 5};
  const auto vdv = sample_view(v, c);
  const auto rays = extract_rays(vdv);
  CHECK(rays.shape() == Shape{4, 1, 5});
  // ray k = i*H + j, j fastest
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j)
      for (int64_t s = 0; s < 5; ++s) CHECK(rays.at({i * 2 + j, 0, s}) == vdv.at(i, j, s));
  const auto back = assemble_rays(rays, c, vdv.normalization);
  CHECK(back.values == vdv.values);
}

TEST_CASE("view volume persistence is bit-exact") {
  const auto dir = vdls::testing::fresh_dir("view");
  const auto v = ramp_volume({4, 6, 8}, 1);
  const auto vdv = sample_view(v, {.axis = 1, .sign = 1, .width = 4, .height = 8, .ray_length = 6});
  save_view_volume(dir / "vdv", vdv);
  const auto back = load_view_volume(dir / "vdv");
  CHECK(back.values == vdv.values);
  CHECK(back.config == vdv.config);
  CHECK(back.normalization == vdv.normalization);
}
