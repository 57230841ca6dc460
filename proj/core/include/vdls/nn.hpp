#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vdls/checkpoint.hpp"
#include "vdls/tensor.hpp"

namespace vdls {

using Rng = std::mt19937_64;

/// A trainable tensor with a stable checkpoint name.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Non-trainable persistent state (spectral-norm `u` vectors).
struct NamedBuffer {
  std::string name;
  std::vector<float>* data;
};

/// Convolution with kernel K along each of 1 or 3 spatial axes, optional
/// spectral normalization of the weight.
class Conv {
 public:
  Conv() = default;
  Conv(std::string name, int spatial_dims, int64_t in_channels, int64_t out_channels, int kernel, bool spectral,
       Rng& rng, float init_scale = 1.0f);

  /// Updates the spectral-norm vector when `training` and grad recording is on.
  Tensor forward(const Tensor& x, bool training);

  void collect(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers);

  int64_t in_channels() const { return weight_.dim(1); }
  int64_t out_channels() const { return weight_.dim(0); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  std::vector<float>& u() { return u_; }

 private:
  std::string name_;
  int spatial_dims_ = 1;
  bool spectral_ = true;
  Tensor weight_, bias_;
  std::vector<float> u_;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int64_t in_features, int64_t out_features, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<NamedParam>& params);
  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }

 private:
  std::string name_;
  Tensor weight_, bias_;
};

/// Snapshot of parameters and buffers as checkpoint records.
std::vector<TensorRecord> gather_state(const std::vector<NamedParam>& params, const std::vector<NamedBuffer>& buffers);
/// Copies records back by name; a missing name or a shape mismatch throws.
void scatter_state(const std::vector<TensorRecord>& records, std::vector<NamedParam> params,
                   std::vector<NamedBuffer> buffers);

/// Uniform fan-in (Kaiming-style) initializer: U(-b, b), b = gain*sqrt(3/fan_in).
std::vector<float> kaiming_uniform(int64_t count, int64_t fan_in, Rng& rng, float gain = 1.0f);

}  // namespace vdls
