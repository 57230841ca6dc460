#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vdls/ensemble.hpp"
#include "vdls/tensor.hpp"

namespace vdls {

/// One of the three axis-parallel training viewpoints.
///
/// The ray runs along `axis`; the image plane spans the two remaining grid
/// axes in increasing order (W pixels along the lower one, H along the
/// higher one). `sign` is +1 for the positive end of the axis; -1 reverses the
/// sample order along each ray.
struct ViewConfig {
  int axis = 2;
  int sign = 1;
  int64_t width = 64;
  int64_t height = 64;
  int64_t ray_length = 64;

  std::array<int, 2> plane_axes() const;
  /// Unit vector of the viewpoint on the viewing sphere.
  std::array<double, 3> direction() const;
  void validate() const;
  bool operator==(const ViewConfig&) const = default;
};

/// Shape {W, H, L0} of the view-dependent data for a volume of the given
/// extents; rejects a ray length that differs from the extent along the axis.
std::array<int64_t, 3> view_extents(const Extents3& volume_extents, const ViewConfig& config);

/// W x H x L0 samples (ray index i*H + j, sample k fastest) in normalized units.
struct ViewDependentVolume {
  ViewConfig config;
  std::vector<float> values;
  Normalization normalization;
  std::optional<SimParams> params;

  int64_t ray_count() const { return config.width * config.height; }
  float at(int64_t i, int64_t j, int64_t k) const {
    return values[static_cast<size_t>((i * config.height + j) * config.ray_length + k)];
  }
};

/// Resamples a normalized volume onto the image plane of `config`. Each pixel
/// (i, j) sits at ((i+0.5)/W, (j+0.5)/H) of the unit plane and is bilinearly
/// interpolated from cell-centered grid samples; the ray axis is copied at
/// full resolution.
ViewDependentVolume sample_view(const Volume& normalized, const ViewConfig& config);

/// [W*H, 1, L0] batch of rays; ray k = i*H + j.
Tensor extract_rays(const ViewDependentVolume& vdv);
/// Inverse of extract_rays for a [W*H, 1, L0] (or [W*H, L0]) tensor.
ViewDependentVolume assemble_rays(const Tensor& rays, const ViewConfig& config, const Normalization& norm,
                                  std::optional<SimParams> params = std::nullopt);

void save_view_volume(const std::filesystem::path& stem, const ViewDependentVolume& vdv);
ViewDependentVolume load_view_volume(const std::filesystem::path& path);

}  // namespace vdls
