#include <doctest.h>

#include <cmath>

#include "tmpdir.hpp"
#include "vdls/render.hpp"
#include "vdls/serialize.hpp"

using namespace vdls;

namespace {

TransferFunction flat_tf(double r, double g, double b, double a) {
  return {{{0.0, {r, g, b, a}}, {1.0, {r, g, b, a}}}};
}

Volume constant_volume(int64_t n, float value) {
  Volume v;
  v.extents = {n, n, n};
  v.values.assign(static_cast<size_t>(n * n * n), value);
  v.value_range = {0.0, 1.0};
  return v;
}

// Camera straight down -z onto the cube; odd width puts a pixel center on the axis.
Camera top_camera(int size) {
  Camera c;
  c.eye = {0.5, 0.5, 2.5};
  c.look_at = {0.5, 0.5, 0.5};
  c.up = {0, 1, 0};
  c.fov_degrees = 30.0;
  c.width = c.height = size;
  return c;
}

}  // namespace

TEST_CASE("transparent transfer function shows the background exactly") {
  RenderOptions opt;
  opt.background = {0.2, 0.4, 0.6};
  const auto img = render_volume(constant_volume(8, 0.5f), top_camera(9), flat_tf(1, 0, 0, 0), opt);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) CHECK(img.at(x, y) == std::array<uint8_t, 3>{51, 102, 153});
}

TEST_CASE("homogeneous volume accumulates 1 - (1 - alpha)^n") {
  RenderOptions opt;
  opt.termination_alpha = 2.0;  // never terminate early
  RenderTrace trace;
  const double alpha = 0.03;
  render_volume(constant_volume(16, 0.5f), top_camera(9), flat_tf(1, 1, 1, alpha), opt, &trace);
  const size_t center = 4 * 9 + 4;
  // The central ray crosses the unit cube along z: 1 / (0.5/16) = 32 samples.
  CHECK(trace.samples[center] == 32);
  for (size_t i = 0; i < trace.alpha.size(); ++i) {
    if (trace.samples[i] == 0) continue;
    CHECK(std::abs(trace.alpha[i] - (1.0 - std::pow(1.0 - alpha, trace.samples[i]))) < 1e-4);
  }

  // Doubling the step with opacity correction keeps the same accumulated alpha.
  RenderTrace coarse;
  RenderOptions c = opt;
  c.step = 1.0 / 16.0;
  render_volume(constant_volume(16, 0.5f), top_camera(9), flat_tf(1, 1, 1, alpha), c, &coarse);
  CHECK(coarse.samples[center] == 16);
  CHECK(std::abs(coarse.alpha[center] - (1.0 - std::pow(1.0 - alpha, 32))) < 1e-4);
}

TEST_CASE("opaque first sample shows its transfer-function color") {
  // Value increases with depth below the top face: s = 1 - z.
  const ScalarField field = [](const Vec3& p) { return static_cast<float>(1.0 - p[2]); };
  TransferFunction tf{{{0.0, {1.0, 0.0, 0.0, 1.0}}, {1.0, {0.0, 0.0, 1.0, 1.0}}}};
  RenderTrace trace;
  const auto img = render(field, {0.0, 1.0}, 16, top_camera(9), tf, {}, &trace);
  for (size_t i = 0; i < trace.samples.size(); ++i) CHECK(trace.samples[i] <= 1);
  // Central ray enters at z = 1; first sample half a step (1/64) below.
  const double s = 1.0 / 64.0;
  const auto rgba = tf(s);
  CHECK(img.at(4, 4) == std::array<uint8_t, 3>{static_cast<uint8_t>(std::lround(rgba[0] * 255)), 0,
                                                static_cast<uint8_t>(std::lround(rgba[2] * 255))});
}

TEST_CASE("rendering is byte-identical across runs") {
  Volume v = constant_volume(12, 0.0f);
  for (size_t i = 0; i < v.values.size(); ++i) v.values[i] = static_cast<float>(std::fmod(i * 0.137, 1.0));
  const auto cam = Camera::orbit({0.6, 0.0, 0.8}, 2.2, 40, 30);
  const auto a = encode_png(render_volume(v, cam, TransferFunction::high_opacity()));
  const auto b = encode_png(render_volume(v, cam, TransferFunction::high_opacity()));
  CHECK(a == b);
}

TEST_CASE("PNG write and read roundtrip") {
  const auto dir = vdls::testing::fresh_dir("render");
  ImageRGB img(5, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) img.set(x, y, {static_cast<uint8_t>(x * 40), static_cast<uint8_t>(y * 90), 7});
  write_png(dir / "a.png", img);
  const auto back = read_png(dir / "a.png");
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("transfer function evaluation and validation") {
  const TransferFunction tf{{{0.0, {0, 0, 0, 0}}, {0.5, {1, 0, 0, 0.5}}, {1.0, {1, 1, 1, 1}}}};
  const auto m = tf(0.25);
  CHECK(m[0] == doctest::Approx(0.5));
  CHECK(m[3] == doctest::Approx(0.25));
  CHECK(tf(2.0)[1] == 1.0);
  CHECK_NOTHROW(TransferFunction::high_opacity().validate());
  CHECK_NOTHROW(TransferFunction::three_surfaces().validate());
  CHECK_THROWS(TransferFunction{{{0.0, {0, 0, 0, 0}}}}.validate());
  CHECK_THROWS(TransferFunction{{{0.0, {0, 0, 0, 0}}, {1.0, {0, 0, 0, 1.5}}}}.validate());
}

TEST_CASE("camera and transfer function JSON roundtrip") {
  const auto cam = Camera::orbit({0.0, 0.0, 1.0}, 2.0, 64, 48);
  nlohmann::json j = cam;
  const auto back = j.get<Camera>();
  CHECK(back.eye == cam.eye);
  CHECK(back.up == cam.up);
  CHECK(back.width == 64);
  nlohmann::json t = TransferFunction::three_surfaces();
  CHECK(t.get<TransferFunction>().points.size() == TransferFunction::three_surfaces().points.size());
  CHECK_THROWS(nlohmann::json::parse(R"({"eye":[0,0]})").get<Camera>());
}
