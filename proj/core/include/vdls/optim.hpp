#pragma once

#include <cstdint>
#include <vector>

#include "vdls/nn.hpp"

namespace vdls {

struct AdamOptions {
  float lr = 5e-5f;
  float beta1 = 0.0f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;  // decoupled: w -= lr * weight_decay * w each step
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<NamedParam> params, AdamOptions options);

  /// Applies one update from the accumulated gradients and clears them.
  /// Parameters whose gradient was never touched count as zero-gradient.
  void step();
  void zero_grad();

  int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(float lr) { options_.lr = lr; }
  const std::vector<float>& first_moment(size_t i) const { return m_[i]; }
  const std::vector<float>& second_moment(size_t i) const { return v_[i]; }

 private:
  std::vector<NamedParam> params_;
  AdamOptions options_;
  std::vector<std::vector<float>> m_, v_;
  int64_t step_ = 0;
};

/// Cosine decay from `base` at epoch 0 to base * final_fraction at the last
/// epoch. final_fraction 1 is a constant rate.
float cosine_lr(float base, float final_fraction, int epoch, int epochs);

}  // namespace vdls
