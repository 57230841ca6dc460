#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vdls/compositor.hpp"
#include "vdls/ensemble.hpp"

namespace vdls {

/// Piecewise-linear map from a normalized scalar in [0,1] to RGBA.
struct TransferFunction {
  struct Point {
    double position;
    std::array<double, 4> rgba;
  };
  std::vector<Point> points;

  void validate() const;
  std::array<double, 4> operator()(double s) const;

  /// Shipped examples: mostly opaque ramp, and three narrow opacity peaks.
  static TransferFunction high_opacity();
  static TransferFunction three_surfaces();
};

struct Camera {
  Vec3 eye{0.5, 0.5, 2.5};
  Vec3 look_at{0.5, 0.5, 0.5};
  Vec3 up{0.0, 1.0, 0.0};
  double fov_degrees = 40.0;
  int width = 128;
  int height = 128;

  void validate() const;
  /// Camera at `distance` from the cube center looking at it from direction v.
  static Camera orbit(const Vec3& v, double distance, int width, int height, double fov_degrees = 40.0);
};

struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major RGB, row 0 at the top

  ImageRGB() = default;
  ImageRGB(int w, int h);
  std::array<uint8_t, 3> at(int x, int y) const;
  void set(int x, int y, const std::array<uint8_t, 3>& rgb);
};

void to_json(nlohmann::json& j, const TransferFunction& tf);
void from_json(const nlohmann::json& j, TransferFunction& tf);
void to_json(nlohmann::json& j, const Camera& c);
void from_json(const nlohmann::json& j, Camera& c);

void write_png(const std::filesystem::path& path, const ImageRGB& image);
std::vector<uint8_t> encode_png(const ImageRGB& image);
ImageRGB read_png(const std::filesystem::path& path);

struct RenderOptions {
  /// World-space step; 0 selects half a voxel of the finest volume axis.
  double step = 0.0;
  /// Step at which TF opacities are taken literally; 0 selects half a voxel.
  double reference_step = 0.0;
  std::array<double, 3> background{0.0, 0.0, 0.0};
  double termination_alpha = 0.999;
};

/// Per-pixel compositing record, for inspection and tests.
struct RenderTrace {
  std::vector<double> alpha;
  std::vector<int> samples;
};

/// Scalar field over the unit cube, returning data-space values.
using ScalarField = std::function<float(const Vec3&)>;

/// Trilinear data-space sampler over a volume on the unit cube (cell-centered).
ScalarField volume_field(const Volume& volume);

/// Perspective ray casting with front-to-back emission-absorption compositing
/// over the unit cube. Field values are mapped to [0,1] through `norm` before
/// the transfer function. `voxels` is the finest grid resolution, used for the
/// default step sizes.
ImageRGB render(const ScalarField& field, const Normalization& norm, int64_t voxels, const Camera& camera,
                const TransferFunction& tf, const RenderOptions& options = {}, RenderTrace* trace = nullptr);

ImageRGB render_volume(const Volume& volume, const Camera& camera, const TransferFunction& tf,
                       const RenderOptions& options = {}, RenderTrace* trace = nullptr);

}  // namespace vdls
