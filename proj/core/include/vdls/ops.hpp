#pragma once

#include <span>
#include <vector>

#include "vdls/tensor.hpp"

namespace vdls {

// Elementwise / structural ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
/// y = x * scale + shift, broadcast along the last axis. `scale` and `shift`
/// have either one entry or one per last-axis element.
Tensor affine(const Tensor& x, std::span<const float> scale, std::span<const float> shift);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Output axis i is input axis perm[i].
Tensor permute(const Tensor& x, const std::vector<int>& perm);

// Layers --------------------------------------------------------------------

/// Stride-1 "same" convolution with zero padding of kernel/2.
/// input [N, C_in, L] (or [C_in, L]), weight [C_out, C_in, K], bias [C_out].
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias);
/// input [N, C_in, D1, D2, D3] (or rank 4 without batch),
/// weight [C_out, C_in, K, K, K], bias [C_out].
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Mean over non-overlapping windows of `factor` along each of `axes`.
Tensor avg_pool(const Tensor& input, int factor, const std::vector<int>& axes);
/// Replicates every value `factor` times along each of `axes`.
Tensor nn_upsample(const Tensor& input, int factor, const std::vector<int>& axes);

/// Per-(instance, channel) standardization over every axis after the channel
/// axis. input [N, C, ...] with at least one spatial axis; no affine terms.
Tensor instance_norm(const Tensor& input, float eps = 1e-5f);

/// input [N, in] (or [in]), weight [out, in], bias [out].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Weight reshaped to [rows, rest] and divided by the largest singular value
/// estimated from the persistent left vector `u`. With `update`, one power
/// iteration refines `u` in place. Gradients flow through sigma with u, v
/// held constant.
Tensor spectral_normalize(const Tensor& weight, std::vector<float>& u, bool update, float eps = 1e-12f);

/// Runs `iterations` power iterations on a row-major [rows, cols] matrix
/// starting from `u` (updated in place) and returns the sigma estimate.
float power_iteration(std::span<const float> matrix, int64_t rows, int64_t cols, std::vector<float>& u,
                      int iterations, float eps = 1e-12f);

// Reductions / losses ---------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of absolute values (L1 norm).
Tensor l1_norm(const Tensor& x);
/// mean(|pred - target|); target receives no gradient.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
/// mean(w * |pred - target|) with constant per-element weights.
Tensor weighted_l1_loss(const Tensor& pred, const Tensor& target, std::span<const float> weights);

}  // namespace vdls
