#include "vdls/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace vdls {

void to_json(nlohmann::json& j, const Psnr& p) {
  if (p.infinite) j = {{"db", nullptr}, {"infinite", true}};
  else j = {{"db", p.db}, {"infinite", false}};
}

Psnr psnr(std::span<const float> a, std::span<const float> b, double range) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("psnr: extent mismatch");
  if (!(range > 0.0)) throw std::invalid_argument("psnr: value range must be positive");
  double se = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  if (se == 0.0) return {std::numeric_limits<double>::infinity(), true};
  const double mse = se / static_cast<double>(a.size());
  return {10.0 * std::log10(range * range / mse), false};
}

Psnr psnr(const Volume& a, const Volume& b, const Normalization& norm) {
  if (a.extents != b.extents) throw std::invalid_argument("psnr: volume extents differ");
  return psnr(a.values, b.values, norm.range());
}

double max_difference(const Volume& a, const Volume& b, const Normalization& norm) {
  if (a.extents != b.extents || a.values.size() != b.values.size()) throw std::invalid_argument("md: volume extents differ");
  double m = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.values[i]) - static_cast<double>(b.values[i])));
  }
  return m / norm.range();
}

// --- SSIM ------------------------------------------------------------------------

namespace {

std::vector<double> luma(const ImageRGB& im) {
  std::vector<double> y(static_cast<size_t>(im.width) * static_cast<size_t>(im.height));
  for (size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * im.pixels[3 * i] + 0.587 * im.pixels[3 * i + 1] + 0.114 * im.pixels[3 * i + 2];
  }
  return y;
}

}  // namespace

double ssim(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("ssim: image extents differ");
  constexpr int R = 5;  // 11x11 window
  if (a.width < 2 * R + 1 || a.height < 2 * R + 1) throw std::invalid_argument("ssim: images must be at least 11x11");
  double kernel[2 * R + 1];
  double ksum = 0.0;
  for (int i = -R; i <= R; ++i) ksum += kernel[i + R] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
  for (double& k : kernel) k /= ksum;
  const double C1 = (0.01 * 255) * (0.01 * 255), C2 = (0.03 * 255) * (0.03 * 255);
  const auto ya = luma(a), yb = luma(b);
  const int W = a.width;
  double total = 0.0;
  int64_t windows = 0;
  for (int y = R; y < a.height - R; ++y) {
    for (int x = R; x < W - R; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -R; dy <= R; ++dy) {
        for (int dx = -R; dx <= R; ++dx) {
          const double w = kernel[dy + R] * kernel[dx + R];
          const size_t i = static_cast<size_t>((y + dy) * W + x + dx);
          ma += w * ya[i];
          mb += w * yb[i];
          saa += w * ya[i] * ya[i];
          sbb += w * yb[i] * yb[i];
          sab += w * ya[i] * yb[i];
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double emd_color_hist(const ImageRGB& a, const ImageRGB& b, int bins) {
  if (bins < 1 || bins > 256) throw std::invalid_argument("emd: bins must be in [1, 256]");
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ha(static_cast<size_t>(bins), 0.0), hb(static_cast<size_t>(bins), 0.0);
    for (size_t i = static_cast<size_t>(c); i < a.pixels.size(); i += 3) ha[a.pixels[i] * static_cast<size_t>(bins) / 256] += 1.0;
    for (size_t i = static_cast<size_t>(c); i < b.pixels.size(); i += 3) hb[b.pixels[i] * static_cast<size_t>(bins) / 256] += 1.0;
    const double na = static_cast<double>(a.pixels.size() / 3), nb = static_cast<double>(b.pixels.size() / 3);
    double ca = 0.0, cb = 0.0, d = 0.0;
    for (int k = 0; k < bins; ++k) {
      ca += ha[static_cast<size_t>(k)] / na;
      cb += hb[static_cast<size_t>(k)] / nb;
      d += std::abs(ca - cb);
    }
    total += d / bins;
  }
  return total / 3.0;
}

// --- CIELUV ------------------------------------------------------------------------

namespace {

constexpr double kM[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}};

double srgb_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

}  // namespace

std::array<double, 3> srgb_to_luv(const std::array<uint8_t, 3>& rgb) {
  double lin[3];
  for (int c = 0; c < 3; ++c) lin[c] = srgb_linear(rgb[static_cast<size_t>(c)] / 255.0);
  double xyz[3], white[3];
  for (int r = 0; r < 3; ++r) {
    xyz[r] = kM[r][0] * lin[0] + kM[r][1] * lin[1] + kM[r][2] * lin[2];
    white[r] = kM[r][0] + kM[r][1] + kM[r][2];
  }
  const double yr = xyz[1] / white[1];
  constexpr double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
  const double L = yr > eps ? 116.0 * std::cbrt(yr) - 16.0 : kappa * yr;
  const double dn = white[0] + 15 * white[1] + 3 * white[2];
  const double un = 4 * white[0] / dn, vn = 9 * white[1] / dn;
  const double d = xyz[0] + 15 * xyz[1] + 3 * xyz[2];
  if (d == 0.0) return {L, 0.0, 0.0};
  const double u = 4 * xyz[0] / d, v = 9 * xyz[1] / d;
  return {L, 13 * L * (u - un), 13 * L * (v - vn)};
}

double delta_e_luv(const std::array<uint8_t, 3>& a, const std::array<uint8_t, 3>& b) {
  const auto la = srgb_to_luv(a), lb = srgb_to_luv(b);
  return std::sqrt((la[0] - lb[0]) * (la[0] - lb[0]) + (la[1] - lb[1]) * (la[1] - lb[1]) +
                   (la[2] - lb[2]) * (la[2] - lb[2]));
}

DifferenceImage difference_image(const ImageRGB& a, const ImageRGB& b, double threshold) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("difference_image: image extents differ");
  DifferenceImage out{ImageRGB(a.width, a.height), 0.0, 0};
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const auto pa = a.at(x, y), pb = b.at(x, y);
      const double de = delta_e_luv(pa, pb);
      if (de >= threshold) {
        ++out.flagged;
        const double t = std::clamp((de - threshold) / (50.0 - threshold), 0.0, 1.0);
        out.image.set(x, y, {255, static_cast<uint8_t>(std::lround(230 * (1 - t))), 0});
      } else {
        const auto g = static_cast<uint8_t>(std::lround(0.299 * pa[0] + 0.587 * pa[1] + 0.114 * pa[2]));
        out.image.set(x, y, {g, g, g});
      }
    }
  }
  out.flagged_fraction = static_cast<double>(out.flagged) / (static_cast<double>(a.width) * a.height);
  return out;
}

std::vector<Vec3> sphere_viewpoints(int n) {
  if (n < 1) throw std::invalid_argument("sphere_viewpoints: n must be >= 1");
  if (n == 1) return {{0.0, 0.0, 1.0}};
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * i / static_cast<double>(n - 1);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    Vec3 v{r * std::cos(phi), r * std::sin(phi), z};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    out.push_back({v[0] / len, v[1] / len, v[2] / len});
  }
  return out;
}

// --- baselines ---------------------------------------------------------------------

namespace {

void check_set(const BaselineSet& set) {
  if (set.volumes.empty()) throw std::invalid_argument("baseline: empty training split");
  if (set.params.size() != set.volumes.size()) throw std::invalid_argument("baseline: parameter/volume count mismatch");
  for (const auto* v : set.volumes) {
    if (v->extents != set.volumes[0]->extents) throw std::invalid_argument("baseline: training volumes differ in extents");
  }
}

double voxels_of(const BaselineSet& set) { return static_cast<double>(set.volumes[0]->values.size()); }

// Mean squared leave-one-out error of the Gaussian interpolant (Rippa's
// closed form e_k = (A y)_k / A_kk, A = Phi^-1, summed over voxels through the
// Gram matrix of the member volumes) and its derivative in log-width.
double loo(const std::vector<double>& r2, const std::vector<double>& gram, Eigen::Index n, double w, double ridge,
           double voxels, double* grad) {
  const Eigen::Map<const Eigen::MatrixXd> R2(r2.data(), n, n), G(gram.data(), n, n);
  const Eigen::MatrixXd K = (-R2 / (2 * w * w)).array().exp().matrix();
  Eigen::MatrixXd Phi = K;
  Phi.diagonal().array() += ridge;
  const Eigen::MatrixXd A = Phi.inverse();
  const Eigen::MatrixXd AGA = A * G * A;
  double e = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) e += AGA(k, k) / (A(k, k) * A(k, k));
  const double scale = voxels * static_cast<double>(n);
  if (grad) {
    const Eigen::MatrixXd dPhi = (K.array() * (R2 / (w * w)).array()).matrix();
    const Eigen::MatrixXd dA = -A * dPhi * A;
    const Eigen::MatrixXd dAGA = dA * G * A;
    double g = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double akk = A(k, k);
      g += 2.0 * dAGA(k, k) / (akk * akk) - 2.0 * AGA(k, k) * dA(k, k) / (akk * akk * akk);
    }
    *grad = g / scale;
  }
  return e / scale;
}

Volume combine(const BaselineSet& set, const std::vector<std::pair<size_t, double>>& weights) {
  Volume out;
  out.extents = set.volumes[0]->extents;
  out.value_range = set.volumes[0]->value_range;
  std::vector<double> acc(set.volumes[0]->values.size(), 0.0);
  for (const auto& [m, w] : weights) {
    const auto& src = set.volumes[m]->values;
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += w * src[i];
  }
  out.values.assign(acc.begin(), acc.end());
  return out;
}

}  // namespace

Volume idw_baseline(const std::vector<double>& params, const BaselineSet& set, int g, double delta) {
  check_set(set);
  if (g < 1 || static_cast<size_t>(g) > set.volumes.size()) {
    throw std::invalid_argument("idw: g must be in [1, " + std::to_string(set.volumes.size()) + "]");
  }
  const auto q = set.space.to_unit(params);
  std::vector<std::pair<double, size_t>> dist;
  for (size_t m = 0; m < set.params.size(); ++m) {
    const auto u = set.space.to_unit(set.params[m]);
    double d = 0.0;
    for (size_t k = 0; k < u.size(); ++k) d += std::abs(u[k] - q[k]);
    dist.push_back({d, m});
  }
  std::stable_sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<size_t, double>> w;
  double total = 0.0;
  for (int k = 0; k < g; ++k) {
    const double wk = 1.0 / (dist[static_cast<size_t>(k)].first + delta);
    w.push_back({dist[static_cast<size_t>(k)].second, wk});
    total += wk;
  }
  for (auto& [m, wk] : w) wk /= total;
  return combine(set, w);
}

RbfBaseline::RbfBaseline(const BaselineSet& set, double ridge, int iterations) : set_(&set), ridge_(ridge) {
  check_set(set);
  for (const auto& p : set.params) units_.push_back(unit_params(p));
  if (set.volumes.size() < 2) return;

  const auto n = static_cast<Eigen::Index>(units_.size());
  Eigen::MatrixXd R2(n, n), G(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (size_t k = 0; k < units_[0].size(); ++k) {
        const double d = units_[static_cast<size_t>(i)][k] - units_[static_cast<size_t>(j)][k];
        r2 += d * d;
      }
      R2(i, j) = r2;
      double dotp = 0.0;
      const auto& a = set.volumes[static_cast<size_t>(i)]->values;
      const auto& b = set.volumes[static_cast<size_t>(j)]->values;
      for (size_t v = 0; v < a.size(); ++v) dotp += static_cast<double>(a[v]) * b[v];
      G(i, j) = dotp;
    }
  }
  gram_.assign(G.data(), G.data() + G.size());
  r2_.assign(R2.data(), R2.data() + R2.size());
  auto eval = [&](double s, double* grad) { return loo(r2_, gram_, n, std::exp(s), ridge_, voxels_of(set), grad); };

  double s = std::log(width_);
  double lr = 0.1;
  double g = 0.0;
  double e = eval(s, &g);
  for (int it = 0; it < iterations; ++it) {
    // Normalized step with backtracking keeps the 1D descent scale-free.
    const double dir = g / std::max(std::abs(g), 1e-300);
    double step = lr;
    bool moved = false;
    for (int bt = 0; bt < 20; ++bt) {
      const double s_new = std::clamp(s - step * dir, std::log(1e-3), std::log(1e2));
      double g_new = 0.0;
      const double e_new = eval(s_new, &g_new);
      if (std::isfinite(e_new) && e_new < e) {
        s = s_new;
        e = e_new;
        g = g_new;
        moved = true;
        lr = std::min(1.0, step * 1.5);
        break;
      }
      step *= 0.5;
    }
    if (!moved || std::abs(g) < 1e-14) break;
  }
  width_ = std::exp(s);
}

std::vector<double> RbfBaseline::unit_params(const std::vector<double>& p) const { return set_->space.to_unit(p); }

std::vector<double> RbfBaseline::solve_weights(const std::vector<double>& query) const {
  const auto n = static_cast<Eigen::Index>(units_.size());
  Eigen::MatrixXd Phi(n, n);
  Eigen::VectorXd phi(n);
  const auto q = unit_params(query);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (size_t k = 0; k < q.size(); ++k) {
        const double d = units_[static_cast<size_t>(i)][k] - units_[static_cast<size_t>(j)][k];
        r2 += d * d;
      }
      Phi(i, j) = std::exp(-r2 / (2 * width_ * width_)) + (i == j ? ridge_ : 0.0);
    }
    double r2 = 0.0;
    for (size_t k = 0; k < q.size(); ++k) {
      const double d = units_[static_cast<size_t>(i)][k] - q[k];
      r2 += d * d;
    }
    phi(i) = std::exp(-r2 / (2 * width_ * width_));
  }
  const Eigen::VectorXd c = Phi.ldlt().solve(phi);
  return {c.data(), c.data() + c.size()};
}

Volume RbfBaseline::predict(const std::vector<double>& params) const {
  const auto c = solve_weights(params);
  std::vector<std::pair<size_t, double>> w;
  for (size_t m = 0; m < c.size(); ++m) w.push_back({m, c[m]});
  return combine(*set_, w);
}

double RbfBaseline::loo_error(double w) const {
  const auto n = static_cast<Eigen::Index>(units_.size());
  if (n < 2) return 0.0;
  return loo(r2_, gram_, n, w, ridge_, voxels_of(*set_), nullptr);
}

}  // namespace vdls
