#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "vdls/predictor.hpp"
#include "vdls/rae.hpp"
#include "vdls/view.hpp"

namespace vdls {

using Vec3 = std::array<double, 3>;

/// Distance clamp applied before inverting a viewpoint distance.
inline constexpr double kViewDistanceFloor = 1e-6;

/// Great-circle distance between unit vectors, in [0, pi]. Rejects vectors
/// whose norm differs from 1 by more than 1e-6.
double great_circle(const Vec3& a, const Vec3& b);

/// q_i = 1 / max(delta, min(d(v, v_i), d(v, -v_i))).
double view_weight(const Vec3& v, const Vec3& vi);

/// Trilinear sample of view-dependent data at a world position in the unit
/// cube. Pixel (i, j) and ray sample k sit at cell centers of the view grid;
/// positions between the outermost centers and the domain boundary clamp to
/// the edge. Returns false for positions outside [0,1]^3.
bool sample_view_data(const ViewDependentVolume& vdv, const Vec3& position, float& value);

/// Inverse-view-distance weighted mean of the views at a point; zero outside
/// the unit cube.
float sample_fused(const Vec3& position, const std::vector<const ViewDependentVolume*>& views, const Vec3& v);

/// Dense W0 x H0 x L0 fused volume (normalized units) evaluated at cell
/// centers. Every view must carry the same normalization.
Volume fuse_to_grid(const std::vector<const ViewDependentVolume*>& views, const Vec3& v, const Extents3& extents);

/// A trained predictor and the RAE it was trained against, for one axis.
struct ViewModel {
  PredictorCheckpoint predictor;
  RAECheckpoint rae;
};

/// Loads `<dir>/rae_axis{a}` and `<dir>/predictor_axis{a}` for a = 0, 1, 2 and
/// checks each binding.
std::vector<ViewModel> load_view_models(const std::filesystem::path& dir);

/// Predicts, decodes and fuses the three views into a data-space volume.
struct FusedPrediction {
  Volume volume;  // data space
  std::vector<ViewDependentVolume> views;
  bool extrapolated = false;
};
FusedPrediction predict_fused(const SimParams& params, const std::vector<ViewModel>& models, const Vec3& v,
                              const Extents3& extents);

/// Scalar pipeline of one view: L1 norm (sum of |x|) of the decoded
/// view-dependent data in data units, and its gradient with respect to every
/// raw parameter value.
struct ViewL1 {
  double value = 0.0;
  std::vector<double> gradient;
};
ViewL1 view_l1(const std::vector<double>& params, const ViewModel& model, bool with_gradient);

struct SensitivityCurve {
  size_t parameter = 0;
  std::string name;
  std::vector<double> values;
  std::vector<double> sensitivity;  // mean of the per-view |dL1/dp|
  std::vector<std::vector<double>> per_view;  // signed derivatives, one row per sample

  std::string to_csv() const;
};

/// Mean of the absolute per-view derivatives.
double aggregate_sensitivity(const std::vector<double>& per_view);

/// Uniformly samples parameter `index` over its range (n >= 2 points, both
/// ends included) with the others fixed at `params`.
SensitivityCurve sensitivity(const SimParams& params, size_t index, int n, const std::vector<ViewModel>& models);

}  // namespace vdls
