#include "vdls/optim.hpp"

#include <cmath>
#include <numbers>

namespace vdls {

Adam::Adam(std::vector<NamedParam> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(options_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(options_.beta2), static_cast<double>(step_));
  const float b1 = options_.beta1, b2 = options_.beta2;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    const float* g = t.has_grad() ? t.grad().data() : nullptr;
    auto w = t.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    const float shrink = 1.0f - options_.lr * options_.weight_decay;
    for (size_t k = 0; k < w.size(); ++k) {
      const float gk = g ? g[k] : 0.0f;
      m[k] = b1 * m[k] + (1.0f - b1) * gk;
      v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] = shrink * w[k] - static_cast<float>(options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

float cosine_lr(float base, float final_fraction, int epoch, int epochs) {
  if (epochs <= 1) return base;
  const double t = static_cast<double>(epoch) / (epochs - 1);
  const double f = final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  return static_cast<float>(base * f);
}

}  // namespace vdls
