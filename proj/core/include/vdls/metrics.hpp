#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "vdls/compositor.hpp"
#include "vdls/ensemble.hpp"
#include "vdls/render.hpp"

namespace vdls {

/// PSNR in dB. Identical inputs give `infinite` = true and db = +inf;
/// serialize with to_json, which writes null plus the flag.
struct Psnr {
  double db = 0.0;
  bool infinite = false;
};
void to_json(nlohmann::json& j, const Psnr& p);

/// 10 log10(R^2 / MSE) with R the range of `norm`.
Psnr psnr(const Volume& a, const Volume& b, const Normalization& norm);
Psnr psnr(std::span<const float> a, std::span<const float> b, double range);
/// max |a - b| / R.
double max_difference(const Volume& a, const Volume& b, const Normalization& norm);

/// SSIM of Rec.601 luma, 11x11 Gaussian window (sigma 1.5), mean over all
/// windows fully inside the image.
double ssim(const ImageRGB& a, const ImageRGB& b);

/// Mean over R, G, B of the 1D EMD between normalized histograms, each
/// computed as sum |CDF_a - CDF_b| / bins.
double emd_color_hist(const ImageRGB& a, const ImageRGB& b, int bins = 64);

/// sRGB (8 bit) -> CIELUV, reference white of the sRGB primaries (D65).
std::array<double, 3> srgb_to_luv(const std::array<uint8_t, 3>& rgb);
double delta_e_luv(const std::array<uint8_t, 3>& a, const std::array<uint8_t, 3>& b);

struct DifferenceImage {
  ImageRGB image;
  double flagged_fraction = 0.0;
  size_t flagged = 0;
};
/// Pixels with Delta E >= threshold are highlighted (yellow to red with
/// growing Delta E); the rest show the luma of `a` in gray.
DifferenceImage difference_image(const ImageRGB& a, const ImageRGB& b, double threshold = 6.0);

/// Deterministic Fibonacci lattice of n unit vectors; the first and last
/// points are the poles (0,0,1) and (0,0,-1). n = 1 gives (0,0,1).
std::vector<Vec3> sphere_viewpoints(int n);

// --- parameter-space interpolation baselines --------------------------------------

/// Training members for the baselines: parameters and data-space volumes.
struct BaselineSet {
  ParameterSpace space;
  std::vector<std::vector<double>> params;
  std::vector<const Volume*> volumes;
};

/// Voxelwise weighted mean of the g nearest members (Manhattan distance of
/// range-normalized parameters), weights 1/(d + delta).
Volume idw_baseline(const std::vector<double>& params, const BaselineSet& set, int g, double delta = 1e-6);

/// Gaussian-kernel RBF interpolation over all members. The kernel width is
/// fitted by gradient descent on the closed-form leave-one-out error. Keeps
/// a pointer to `set`, which must outlive it.
class RbfBaseline {
 public:
  RbfBaseline(const BaselineSet& set, double ridge = 1e-8, int iterations = 200);
  Volume predict(const std::vector<double>& params) const;
  double width() const { return width_; }
  /// Mean squared leave-one-out error (over members and voxels) at width w.
  double loo_error(double w) const;

 private:
  std::vector<double> unit_params(const std::vector<double>& p) const;
  std::vector<double> solve_weights(const std::vector<double>& query) const;

  const BaselineSet* set_;
  double ridge_;
  double width_ = 0.5;
  std::vector<std::vector<double>> units_;
  std::vector<double> r2_, gram_;  // n x n squared distances and volume inner products
};

}  // namespace vdls
