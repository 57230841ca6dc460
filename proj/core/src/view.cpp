#include "vdls/view.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vdls/serialize.hpp"

namespace vdls {

namespace fs = std::filesystem;

std::array<int, 2> ViewConfig::plane_axes() const {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

std::array<double, 3> ViewConfig::direction() const {
  std::array<double, 3> d{0.0, 0.0, 0.0};
  d[static_cast<size_t>(axis)] = sign >= 0 ? 1.0 : -1.0;
  return d;
}

void ViewConfig::validate() const {
  if (axis < 0 || axis > 2) throw std::invalid_argument("view axis must be 0, 1 or 2");
  if (sign != 1 && sign != -1) throw std::invalid_argument("view sign must be +1 or -1");
  if (width < 1 || height < 1) throw std::invalid_argument("view image extents must be >= 1");
  if (ray_length < 1) throw std::invalid_argument("view ray length must be >= 1");
}

std::array<int64_t, 3> view_extents(const Extents3& volume_extents, const ViewConfig& config) {
  config.validate();
  const int64_t along = volume_extents[static_cast<size_t>(config.axis)];
  if (along != config.ray_length) {
    throw std::invalid_argument("view ray length " + std::to_string(config.ray_length) +
                                " does not match volume extent " + std::to_string(along) + " along axis " +
                                std::to_string(config.axis));
  }
  return {config.width, config.height, config.ray_length};
}

namespace {

struct Lerp1 {
  int64_t i0, i1;
  float w1;
};

// Cell-centered sample positions: pixel center u in (0,1) maps to grid
// coordinate u*n - 0.5, clamped to the outermost cell centers.
Lerp1 plane_lerp(int64_t pixel, int64_t pixels, int64_t n) {
  const double u = (pixel + 0.5) / static_cast<double>(pixels);
  const double g = std::clamp(u * static_cast<double>(n) - 0.5, 0.0, static_cast<double>(n - 1));
  const auto i0 = static_cast<int64_t>(std::floor(g));
  const int64_t i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, static_cast<float>(g - static_cast<double>(i0))};
}

}  // namespace

ViewDependentVolume sample_view(const Volume& volume, const ViewConfig& config) {
  const auto ext = view_extents(volume.extents, config);
  if (static_cast<int64_t>(volume.values.size()) != volume.size()) throw std::invalid_argument("volume value count mismatch");
  const auto [pa, pb] = config.plane_axes();
  const int64_t na = volume.extents[static_cast<size_t>(pa)];
  const int64_t nb = volume.extents[static_cast<size_t>(pb)];
  const int64_t L = ext[2];
  std::array<int64_t, 3> stride{volume.extents[1] * volume.extents[2], volume.extents[2], 1};

  ViewDependentVolume out;
  out.config = config;
  out.normalization = volume.value_range;
  out.params = volume.params;
  out.values.resize(static_cast<size_t>(ext[0] * ext[1] * L));
  const float* src = volume.values.data();
  const int64_t ray_stride = stride[static_cast<size_t>(config.axis)];
  for (int64_t i = 0; i < ext[0]; ++i) {
    const auto la = plane_lerp(i, ext[0], na);
    for (int64_t j = 0; j < ext[1]; ++j) {
      const auto lb = plane_lerp(j, ext[1], nb);
      const int64_t base00 = la.i0 * stride[pa] + lb.i0 * stride[pb];
      const int64_t base10 = la.i1 * stride[pa] + lb.i0 * stride[pb];
      const int64_t base01 = la.i0 * stride[pa] + lb.i1 * stride[pb];
      const int64_t base11 = la.i1 * stride[pa] + lb.i1 * stride[pb];
      const float w00 = (1 - la.w1) * (1 - lb.w1), w10 = la.w1 * (1 - lb.w1);
      const float w01 = (1 - la.w1) * lb.w1, w11 = la.w1 * lb.w1;
      float* ray = out.values.data() + (i * ext[1] + j) * L;
      for (int64_t k = 0; k < L; ++k) {
        const int64_t kk = (config.sign >= 0 ? k : L - 1 - k) * ray_stride;
        ray[k] = w00 * src[base00 + kk] + w10 * src[base10 + kk] + w01 * src[base01 + kk] + w11 * src[base11 + kk];
      }
    }
  }
  return out;
}

Tensor extract_rays(const ViewDependentVolume& vdv) {
  return Tensor({vdv.ray_count(), 1, vdv.config.ray_length}, vdv.values);
}

ViewDependentVolume assemble_rays(const Tensor& rays, const ViewConfig& config, const Normalization& norm,
                                  std::optional<SimParams> params) {
  if (rays.numel() != config.width * config.height * config.ray_length || rays.dim(0) != config.width * config.height) {
    throw std::invalid_argument("assemble_rays: tensor " + shape_str(rays.shape()) + " does not match view " +
                                std::to_string(config.width) + "x" + std::to_string(config.height) + "x" +
                                std::to_string(config.ray_length));
  }
  ViewDependentVolume out;
  out.config = config;
  out.values = rays.vec();
  out.normalization = norm;
  out.params = std::move(params);
  return out;
}

void save_view_volume(const fs::path& stem, const ViewDependentVolume& vdv) {
  Volume v;
  v.extents = {vdv.config.width, vdv.config.height, vdv.config.ray_length};
  v.values = vdv.values;
  v.value_range = {-1.0, 1.0};
  v.params = vdv.params;
  save_volume(stem, v);
  const fs::path header = stem.extension() == ".json" ? stem : fs::path(stem.string() + ".json");
  auto j = read_json_file(header);
  j["view"] = vdv.config;
  j["normalization"] = vdv.normalization;
  write_json_file(header, j);
}

ViewDependentVolume load_view_volume(const fs::path& path) {
  Volume v = load_volume(path);
  const fs::path header = path.extension() == ".json" ? path : fs::path(path.string() + ".json");
  const auto j = read_json_file(header);
  if (!j.contains("view")) throw std::runtime_error(header.string() + ": missing view configuration");
  ViewDependentVolume out;
  out.config = j.at("view").get<ViewConfig>();
  out.normalization = j.at("normalization").get<Normalization>();
  out.values = std::move(v.values);
  out.params = std::move(v.params);
  return out;
}

}  // namespace vdls
