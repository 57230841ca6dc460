#pragma once

// Central finite-difference check of reverse-mode gradients.
//
// The op under test is reduced to a scalar with a fixed random projection
// L = sum_i r_i y_i (built with `linear`, so the tape sees it too). The FD side
// recomputes L in double from the float outputs. Errors are norm-wise:
// |g_auto - g_fd| / max(|g_auto|, |g_fd|, floor) over each input's gradient.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vdls/ops.hpp"
#include "vdls/tensor.hpp"

namespace vdls::testing {

using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;

inline std::vector<float> random_values(int64_t n, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = d(rng);
  return v;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  const int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), random_values(n, rng, lo, hi));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_grad_norm = 0.0;
};

inline GradCheckResult gradcheck(const OpFn& op, std::vector<Tensor> inputs, std::mt19937_64& rng, double h = 1e-2,
                                 double floor = 1e-6) {
  for (auto& t : inputs) t.set_requires_grad(true);
  Tensor y = op(inputs);
  const auto r = random_values(y.numel(), rng);
  Tensor proj({1, y.numel()}, r);
  Tensor zero({1}, 0.0f);
  Tensor loss = linear(reshape(y, {1, y.numel()}), proj, zero);
  loss.backward();

  auto objective = [&](const std::vector<Tensor>& in) {
    NoGradGuard ng;
    Tensor out = op(in);
    double acc = 0.0;
    auto v = out.values();
    for (size_t i = 0; i < v.size(); ++i) acc += static_cast<double>(r[i]) * v[i];
    return acc;
  };

  GradCheckResult res;
  for (size_t t = 0; t < inputs.size(); ++t) {
    std::vector<double> fd(static_cast<size_t>(inputs[t].numel()));
    for (size_t i = 0; i < fd.size(); ++i) {
      std::vector<Tensor> probe;
      for (const auto& x : inputs) probe.push_back(x.detach());
      auto vals = probe[t].mutable_values();
      const float orig = vals[i];
      vals[i] = orig + static_cast<float>(h);
      const double up = objective(probe);
      vals[i] = orig - static_cast<float>(h);
      const double down = objective(probe);
      // Divide by the step actually representable in float.
      const double step = static_cast<double>(orig + static_cast<float>(h)) - static_cast<double>(orig - static_cast<float>(h));
      fd[i] = (up - down) / step;
    }
    std::vector<double> ad(fd.size(), 0.0);
    if (inputs[t].has_grad()) {
      auto g = inputs[t].grad();
      for (size_t i = 0; i < ad.size(); ++i) ad[i] = g[i];
    }
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (size_t i = 0; i < fd.size(); ++i) {
      diff += (ad[i] - fd[i]) * (ad[i] - fd[i]);
      na += ad[i] * ad[i];
      nf += fd[i] * fd[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nf), floor});
    res.max_rel_error = std::max(res.max_rel_error, std::sqrt(diff) / denom);
    res.max_grad_norm = std::max(res.max_grad_norm, std::sqrt(na));
  }
  return res;
}

/// Pushes values away from 0 so a kink at the origin never falls inside the
/// FD stencil.
inline Tensor away_from_zero(Tensor t, float margin) {
  for (auto& v : t.mutable_values()) {
    if (std::abs(v) < margin) v = v < 0 ? -margin - std::abs(v) : margin + v;
  }
  return t;
}

}  // namespace vdls::testing
