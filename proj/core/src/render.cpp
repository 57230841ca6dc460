#include "vdls/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "vdls/parallel.hpp"

namespace vdls {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 unit(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

uint8_t to_byte(double x) { return static_cast<uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); }

}  // namespace

// --- transfer function -------------------------------------------------------

void TransferFunction::validate() const {
  if (points.size() < 2) throw std::invalid_argument("transfer function needs at least two control points");
  if (points.front().position != 0.0 || points.back().position != 1.0) {
    throw std::invalid_argument("transfer function must start at 0 and end at 1");
  }
  for (size_t i = 0; i < points.size(); ++i) {
    if (i > 0 && !(points[i].position > points[i - 1].position)) {
      throw std::invalid_argument("transfer function positions must be strictly increasing");
    }
    for (double c : points[i].rgba) {
      if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("transfer function RGBA components must lie in [0,1]");
    }
  }
}

std::array<double, 4> TransferFunction::operator()(double s) const {
  s = std::clamp(s, 0.0, 1.0);
  auto hi = std::upper_bound(points.begin(), points.end(), s,
                             [](double v, const Point& p) { return v < p.position; });
  if (hi == points.begin()) return points.front().rgba;
  if (hi == points.end()) return points.back().rgba;
  const auto& a = *(hi - 1);
  const auto& b = *hi;
  const double w = (s - a.position) / (b.position - a.position);
  std::array<double, 4> out;
  for (int c = 0; c < 4; ++c) out[static_cast<size_t>(c)] = a.rgba[static_cast<size_t>(c)] * (1 - w) + b.rgba[static_cast<size_t>(c)] * w;
  return out;
}

TransferFunction TransferFunction::high_opacity() {
  return {{{0.0, {0.05, 0.05, 0.3, 0.0}},
           {0.3, {0.1, 0.4, 0.8, 0.05}},
           {0.6, {0.9, 0.8, 0.2, 0.3}},
           {1.0, {0.9, 0.1, 0.05, 0.8}}}};
}

TransferFunction TransferFunction::three_surfaces() {
  return {{{0.0, {0.0, 0.0, 0.0, 0.0}},
           {0.22, {0.2, 0.4, 1.0, 0.0}},
           {0.25, {0.2, 0.4, 1.0, 0.6}},
           {0.28, {0.2, 0.4, 1.0, 0.0}},
           {0.47, {0.2, 1.0, 0.3, 0.0}},
           {0.5, {0.2, 1.0, 0.3, 0.6}},
           {0.53, {0.2, 1.0, 0.3, 0.0}},
           {0.72, {1.0, 0.3, 0.2, 0.0}},
           {0.75, {1.0, 0.3, 0.2, 0.8}},
           {0.78, {1.0, 0.3, 0.2, 0.0}},
           {1.0, {0.0, 0.0, 0.0, 0.0}}}};
}

void to_json(nlohmann::json& j, const TransferFunction& tf) {
  j = nlohmann::json::array();
  for (const auto& p : tf.points) {
    j.push_back({{"x", p.position}, {"rgba", p.rgba}});
  }
}

void from_json(const nlohmann::json& j, TransferFunction& tf) {
  const auto& pts = j.is_object() ? j.at("points") : j;
  tf.points.clear();
  for (const auto& p : pts) tf.points.push_back({p.at("x").get<double>(), p.at("rgba").get<std::array<double, 4>>()});
  tf.validate();
}

// --- camera --------------------------------------------------------------------

void Camera::validate() const {
  const Vec3 f = sub(look_at, eye);
  if (norm(f) < 1e-12) throw std::invalid_argument("camera eye coincides with look-at point");
  if (norm(cross(unit(f), up)) < 1e-9) throw std::invalid_argument("camera up vector is parallel to the view direction");
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw std::invalid_argument("camera fov must lie in (0, 180)");
  if (width < 1 || height < 1) throw std::invalid_argument("camera image extents must be >= 1");
}

Camera Camera::orbit(const Vec3& v, double distance, int width, int height, double fov_degrees) {
  Camera c;
  const Vec3 d = unit(v);
  c.eye = {0.5 + d[0] * distance, 0.5 + d[1] * distance, 0.5 + d[2] * distance};
  c.look_at = {0.5, 0.5, 0.5};
  c.up = std::abs(d[1]) > 0.99 ? Vec3{0.0, 0.0, 1.0} : Vec3{0.0, 1.0, 0.0};
  c.fov_degrees = fov_degrees;
  c.width = width;
  c.height = height;
  return c;
}

void to_json(nlohmann::json& j, const Camera& c) {
  j = {{"eye", c.eye}, {"look_at", c.look_at}, {"up", c.up}, {"fov", c.fov_degrees}, {"width", c.width}, {"height", c.height}};
}

void from_json(const nlohmann::json& j, Camera& c) {
  c.eye = j.value("eye", c.eye);
  c.look_at = j.value("look_at", c.look_at);
  c.up = j.value("up", c.up);
  c.fov_degrees = j.value("fov", c.fov_degrees);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.validate();
}

// --- images --------------------------------------------------------------------

ImageRGB::ImageRGB(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw std::invalid_argument("image extents must be positive");
  pixels.assign(static_cast<size_t>(w) * static_cast<size_t>(h) * 3, 0);
}

std::array<uint8_t, 3> ImageRGB::at(int x, int y) const {
  const size_t o = (static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) * 3;
  return {pixels[o], pixels[o + 1], pixels[o + 2]};
}

void ImageRGB::set(int x, int y, const std::array<uint8_t, 3>& rgb) {
  const size_t o = (static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) * 3;
  std::copy(rgb.begin(), rgb.end(), pixels.begin() + static_cast<std::ptrdiff_t>(o));
}

std::vector<uint8_t> encode_png(const ImageRGB& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode: ") + img.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const ImageRGB& image) {
  const auto bytes = encode_png(image);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageRGB read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw std::runtime_error(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  ImageRGB out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(path.string() + ": " + img.message);
  }
  return out;
}

// --- ray casting -----------------------------------------------------------------

ScalarField volume_field(const Volume& volume) {
  return [&volume](const Vec3& p) {
    const auto& e = volume.extents;
    int64_t i0[3], i1[3];
    float w[3];
    for (int a = 0; a < 3; ++a) {
      const double g = std::clamp(p[static_cast<size_t>(a)] * static_cast<double>(e[static_cast<size_t>(a)]) - 0.5, 0.0,
                                  static_cast<double>(e[static_cast<size_t>(a)] - 1));
      i0[a] = static_cast<int64_t>(g);
      i1[a] = std::min(i0[a] + 1, e[static_cast<size_t>(a)] - 1);
      w[a] = static_cast<float>(g - static_cast<double>(i0[a]));
    }
    auto at = [&](int64_t i, int64_t j, int64_t k) { return volume.at(i, j, k); };
    const float c00 = at(i0[0], i0[1], i0[2]) * (1 - w[2]) + at(i0[0], i0[1], i1[2]) * w[2];
    const float c01 = at(i0[0], i1[1], i0[2]) * (1 - w[2]) + at(i0[0], i1[1], i1[2]) * w[2];
    const float c10 = at(i1[0], i0[1], i0[2]) * (1 - w[2]) + at(i1[0], i0[1], i1[2]) * w[2];
    const float c11 = at(i1[0], i1[1], i0[2]) * (1 - w[2]) + at(i1[0], i1[1], i1[2]) * w[2];
    return (c00 * (1 - w[1]) + c01 * w[1]) * (1 - w[0]) + (c10 * (1 - w[1]) + c11 * w[1]) * w[0];
  };
}

ImageRGB render(const ScalarField& field, const Normalization& norm_range, int64_t voxels, const Camera& camera,
                const TransferFunction& tf, const RenderOptions& options, RenderTrace* trace) {
  camera.validate();
  tf.validate();
  if (voxels < 1) throw std::invalid_argument("render: voxel resolution must be >= 1");
  if (!(norm_range.range() > 0.0)) throw std::invalid_argument("render: degenerate value range");
  const double half_voxel = 0.5 / static_cast<double>(voxels);
  const double step = options.step > 0.0 ? options.step : half_voxel;
  const double ref = options.reference_step > 0.0 ? options.reference_step : half_voxel;
  const double exponent = step / ref;

  const Vec3 forward = unit(sub(camera.look_at, camera.eye));
  const Vec3 right = unit(cross(forward, camera.up));
  const Vec3 up = cross(right, forward);
  const double tan_half = std::tan(camera.fov_degrees * std::numbers::pi / 360.0);
  const double aspect = static_cast<double>(camera.width) / static_cast<double>(camera.height);

  ImageRGB image(camera.width, camera.height);
  if (trace) {
    trace->alpha.assign(static_cast<size_t>(camera.width * camera.height), 0.0);
    trace->samples.assign(static_cast<size_t>(camera.width * camera.height), 0);
  }
  parallel_for(camera.height, [&](int64_t y) {
    for (int x = 0; x < camera.width; ++x) {
      const double sx = (2.0 * (x + 0.5) / camera.width - 1.0) * tan_half * aspect;
      const double sy = (1.0 - 2.0 * (static_cast<double>(y) + 0.5) / camera.height) * tan_half;
      const Vec3 dir = unit({forward[0] + sx * right[0] + sy * up[0], forward[1] + sx * right[1] + sy * up[1],
                             forward[2] + sx * right[2] + sy * up[2]});
      // Slab intersection with the unit cube.
      double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        const double o = camera.eye[static_cast<size_t>(a)], d = dir[static_cast<size_t>(a)];
        if (std::abs(d) < 1e-15) {
          if (o < 0.0 || o > 1.0) t1 = -1.0;
          continue;
        }
        double ta = (0.0 - o) / d, tb = (1.0 - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      double C[3] = {0.0, 0.0, 0.0};
      double A = 0.0;
      int n = 0;
      for (double t = t0 + 0.5 * step; t < t1 && A <= options.termination_alpha; t += step) {
        const Vec3 p{camera.eye[0] + t * dir[0], camera.eye[1] + t * dir[1], camera.eye[2] + t * dir[2]};
        const double s = (static_cast<double>(field(p)) - norm_range.min) / norm_range.range();
        const auto rgba = tf(s);
        const double alpha = exponent == 1.0 ? rgba[3] : 1.0 - std::pow(1.0 - rgba[3], exponent);
        for (int c = 0; c < 3; ++c) C[c] += (1.0 - A) * alpha * rgba[static_cast<size_t>(c)];
        A += (1.0 - A) * alpha;
        ++n;
      }
      std::array<uint8_t, 3> px;
      for (int c = 0; c < 3; ++c) px[static_cast<size_t>(c)] = to_byte(C[c] + (1.0 - A) * options.background[static_cast<size_t>(c)]);
      image.set(x, static_cast<int>(y), px);
      if (trace) {
        trace->alpha[static_cast<size_t>(y * camera.width + x)] = A;
        trace->samples[static_cast<size_t>(y * camera.width + x)] = n;
      }
    }
  });
  return image;
}

ImageRGB render_volume(const Volume& volume, const Camera& camera, const TransferFunction& tf,
                       const RenderOptions& options, RenderTrace* trace) {
  const int64_t voxels = std::max({volume.extents[0], volume.extents[1], volume.extents[2]});
  return render(volume_field(volume), volume.value_range, voxels, camera, tf, options, trace);
}

}  // namespace vdls
