#include "vdls/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "vdls/ops.hpp"
#include "vdls/parallel.hpp"

namespace vdls {

namespace {

void require_unit(const Vec3& v, const char* what) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(std::abs(n - 1.0) <= 1e-6)) {
    throw std::invalid_argument(std::string(what) + " is not a unit vector (norm " + std::to_string(n) + ")");
  }
}

struct Coord {
  int64_t i0, i1;
  float w;
};

Coord grid_coord(double u, int64_t n) {
  const double g = std::clamp(u * static_cast<double>(n) - 0.5, 0.0, static_cast<double>(n - 1));
  const auto i0 = static_cast<int64_t>(g);
  return {i0, std::min(i0 + 1, n - 1), static_cast<float>(g - static_cast<double>(i0))};
}

}  // namespace

double great_circle(const Vec3& a, const Vec3& b) {
  require_unit(a, "viewpoint");
  require_unit(b, "viewpoint");
  const double d = std::clamp(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], -1.0, 1.0);
  return std::acos(d);
}

double view_weight(const Vec3& v, const Vec3& vi) {
  const Vec3 sym{-vi[0], -vi[1], -vi[2]};
  const double d = std::min(great_circle(v, vi), great_circle(v, sym));
  return 1.0 / std::max(d, kViewDistanceFloor);
}

bool sample_view_data(const ViewDependentVolume& vdv, const Vec3& p, float& value) {
  for (double c : p) {
    if (!(c >= 0.0 && c <= 1.0)) return false;
  }
  const auto& cfg = vdv.config;
  const auto [pa, pb] = cfg.plane_axes();
  const double along = cfg.sign >= 0 ? p[static_cast<size_t>(cfg.axis)] : 1.0 - p[static_cast<size_t>(cfg.axis)];
  const Coord a = grid_coord(p[static_cast<size_t>(pa)], cfg.width);
  const Coord b = grid_coord(p[static_cast<size_t>(pb)], cfg.height);
  const Coord k = grid_coord(along, cfg.ray_length);
  auto at = [&](int64_t i, int64_t j, int64_t l) { return vdv.at(i, j, l); };
  const float c00 = at(a.i0, b.i0, k.i0) * (1 - k.w) + at(a.i0, b.i0, k.i1) * k.w;
  const float c01 = at(a.i0, b.i1, k.i0) * (1 - k.w) + at(a.i0, b.i1, k.i1) * k.w;
  const float c10 = at(a.i1, b.i0, k.i0) * (1 - k.w) + at(a.i1, b.i0, k.i1) * k.w;
  const float c11 = at(a.i1, b.i1, k.i0) * (1 - k.w) + at(a.i1, b.i1, k.i1) * k.w;
  const float c0 = c00 * (1 - b.w) + c01 * b.w;
  const float c1 = c10 * (1 - b.w) + c11 * b.w;
  value = c0 * (1 - a.w) + c1 * a.w;
  return true;
}

float sample_fused(const Vec3& position, const std::vector<const ViewDependentVolume*>& views, const Vec3& v) {
  if (views.empty()) throw std::invalid_argument("sample_fused: no views");
  double num = 0.0, den = 0.0;
  for (const auto* view : views) {
    float s = 0.0f;
    if (!sample_view_data(*view, position, s)) return 0.0f;
    const double q = view_weight(v, view->config.direction());
    num += q * s;
    den += q;
  }
  return static_cast<float>(num / den);
}

Volume fuse_to_grid(const std::vector<const ViewDependentVolume*>& views, const Vec3& v, const Extents3& extents) {
  if (views.empty()) throw std::invalid_argument("fuse_to_grid: no views");
  require_unit(v, "viewpoint");
  for (const auto* view : views) {
    if (!(view->normalization == views[0]->normalization)) {
      throw std::invalid_argument("fuse_to_grid: views carry different normalizations");
    }
  }
  std::vector<double> q;
  for (const auto* view : views) q.push_back(view_weight(v, view->config.direction()));
  double qsum = 0.0;
  for (double w : q) qsum += w;

  Volume out;
  out.extents = extents;
  out.value_range = views[0]->normalization;
  out.params = views[0]->params;
  out.values.resize(static_cast<size_t>(out.size()));
  parallel_for(extents[0], [&](int64_t i) {
    for (int64_t j = 0; j < extents[1]; ++j) {
      for (int64_t k = 0; k < extents[2]; ++k) {
        const Vec3 p{(i + 0.5) / extents[0], (j + 0.5) / extents[1], (k + 0.5) / extents[2]};
        double num = 0.0;
        for (size_t n = 0; n < views.size(); ++n) {
          float s = 0.0f;
          sample_view_data(*views[n], p, s);
          num += q[n] * s;
        }
        out.values[static_cast<size_t>((i * extents[1] + j) * extents[2] + k)] = static_cast<float>(num / qsum);
      }
    }
  });
  return out;
}

std::vector<ViewModel> load_view_models(const std::filesystem::path& dir) {
  std::vector<ViewModel> models;
  for (int a = 0; a < 3; ++a) {
    ViewModel m;
    m.rae = load_rae(dir / ("rae_axis" + std::to_string(a)));
    m.predictor = load_predictor(dir / ("predictor_axis" + std::to_string(a)));
    check_binding(m.predictor, m.rae);
    if (m.rae.view.axis != a) throw std::runtime_error("rae_axis" + std::to_string(a) + " is bound to another axis");
    if (!models.empty() && !(m.rae.normalization == models[0].rae.normalization)) {
      throw std::runtime_error("view models use different dataset normalizations");
    }
    models.push_back(std::move(m));
  }
  return models;
}

FusedPrediction predict_fused(const SimParams& params, const std::vector<ViewModel>& models, const Vec3& v,
                              const Extents3& extents) {
  if (models.size() != 3) throw std::invalid_argument("predict_fused needs one model per axis");
  FusedPrediction out;
  for (const auto& m : models) {
    auto p = predict_view_data(params, m.predictor, m.rae);
    out.extrapolated = out.extrapolated || p.extrapolated;
    out.views.push_back(std::move(p.data));
  }
  std::vector<const ViewDependentVolume*> ptrs;
  for (const auto& view : out.views) ptrs.push_back(&view);
  out.volume = denormalize(fuse_to_grid(ptrs, v, extents), models[0].rae.normalization);
  out.volume.params = SimParams{params.values, models[0].predictor.model->space()};
  return out;
}

ViewL1 view_l1(const std::vector<double>& params, const ViewModel& model, bool with_gradient) {
  const auto& norm = model.rae.normalization;
  const float half = static_cast<float>(norm.range() / 2.0);
  const float mid = static_cast<float>(norm.min + norm.range() / 2.0);
  std::vector<float> p(params.begin(), params.end());
  const auto d = static_cast<int64_t>(p.size());
  Tensor input({d}, std::move(p));
  ViewL1 out;
  if (!with_gradient) {
    NoGradGuard guard;
    Tensor rays = decode_predicted(model.predictor.model->forward(input), *model.rae.model);
    for (float x : rays.values()) out.value += std::abs(static_cast<double>(x) * half + mid);
    return out;
  }
  // Backward also accumulates into the shared model weights; serialize and
  // clear them so concurrent callers see read-only models.
  static std::mutex grad_mutex;
  std::lock_guard lock(grad_mutex);
  input.set_requires_grad(true);
  Tensor rays = decode_predicted(model.predictor.model->forward(input), *model.rae.model);
  const float sc[1] = {half}, sh[1] = {mid};
  Tensor l1 = l1_norm(affine(rays, sc, sh));
  l1.backward();
  out.value = l1.item();
  for (float g : input.grad()) out.gradient.push_back(g);
  for (auto& p : model.predictor.model->parameters()) p.tensor.zero_grad();
  for (auto& p : model.rae.model->parameters()) p.tensor.zero_grad();
  return out;
}

std::string SensitivityCurve::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "parameter_value,sensitivity\n";
  for (size_t i = 0; i < values.size(); ++i) os << values[i] << ',' << sensitivity[i] << '\n';
  return os.str();
}

double aggregate_sensitivity(const std::vector<double>& per_view) {
  if (per_view.empty()) throw std::invalid_argument("aggregate_sensitivity: no views");
  double acc = 0.0;
  for (double g : per_view) acc += std::abs(g);
  return acc / static_cast<double>(per_view.size());
}

SensitivityCurve sensitivity(const SimParams& params, size_t index, int n, const std::vector<ViewModel>& models) {
  if (models.empty()) throw std::invalid_argument("sensitivity: no view models");
  const auto& space = models[0].predictor.model->space();
  if (index >= space.size()) {
    throw std::invalid_argument("parameter index " + std::to_string(index) + " out of range (have " +
                                std::to_string(space.size()) + ")");
  }
  if (n < 2) throw std::invalid_argument("sensitivity needs at least 2 samples");
  if (params.values.size() != space.size()) throw std::invalid_argument("sensitivity: parameter count mismatch");
  SensitivityCurve curve;
  curve.parameter = index;
  curve.name = space.names[index];
  const auto& r = space.ranges[index];
  for (int s = 0; s < n; ++s) {
    auto p = params.values;
    p[index] = r.min + (r.max - r.min) * static_cast<double>(s) / static_cast<double>(n - 1);
    std::vector<double> derivs;
    for (const auto& m : models) derivs.push_back(view_l1(p, m, true).gradient[index]);
    curve.values.push_back(p[index]);
    curve.sensitivity.push_back(aggregate_sensitivity(derivs));
    curve.per_view.push_back(std::move(derivs));
  }
  return curve;
}

}  // namespace vdls
