#include "vdls/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "vdls/ops.hpp"

namespace vdls {

std::vector<float> kaiming_uniform(int64_t count, int64_t fan_in, Rng& rng, float gain) {
  const float bound = gain * std::sqrt(3.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> out(static_cast<size_t>(count));
  for (auto& v : out) v = dist(rng);
  return out;
}

Conv::Conv(std::string name, int spatial_dims, int64_t in_channels, int64_t out_channels, int kernel, bool spectral,
           Rng& rng, float init_scale)
    : name_(std::move(name)), spatial_dims_(spatial_dims), spectral_(spectral) {
  if (spatial_dims != 1 && spatial_dims != 3) throw std::invalid_argument("Conv: spatial_dims must be 1 or 3");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("Conv: kernel must be odd");
  Shape ws{out_channels, in_channels};
  int64_t taps = 1;
  for (int i = 0; i < spatial_dims; ++i) {
    ws.push_back(kernel);
    taps *= kernel;
  }
  const int64_t fan_in = in_channels * taps;
  weight_ = Tensor(ws, kaiming_uniform(shape_numel(ws), fan_in, rng, std::sqrt(2.0f) * init_scale));
  weight_.set_requires_grad(true);
  std::uniform_real_distribution<float> bias_dist(-1.0f / std::sqrt(static_cast<float>(fan_in)),
                                                  1.0f / std::sqrt(static_cast<float>(fan_in)));
  std::vector<float> b(static_cast<size_t>(out_channels));
  for (auto& v : b) v = bias_dist(rng) * init_scale;
  bias_ = Tensor({out_channels}, std::move(b));
  bias_.set_requires_grad(true);
  if (spectral_) {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    u_.resize(static_cast<size_t>(out_channels));
    float norm = 0.0f;
    for (auto& v : u_) {
      v = nd(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u_) v /= norm;
  }
}

Tensor Conv::forward(const Tensor& x, bool training) {
  Tensor w = spectral_ ? spectral_normalize(weight_, u_, training && grad_enabled()) : weight_;
  return spatial_dims_ == 1 ? conv1d(x, w, bias_) : conv3d(x, w, bias_);
}

void Conv::collect(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers) {
  params.push_back({name_ + ".weight", weight_});
  params.push_back({name_ + ".bias", bias_});
  if (spectral_) buffers.push_back({name_ + ".u", &u_});
}

Linear::Linear(std::string name, int64_t in_features, int64_t out_features, Rng& rng) : name_(std::move(name)) {
  weight_ = Tensor({out_features, in_features}, kaiming_uniform(out_features * in_features, in_features, rng,
                                                                std::sqrt(2.0f)));
  weight_.set_requires_grad(true);
  bias_ = Tensor({out_features}, 0.0f);
  bias_.set_requires_grad(true);
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight_, bias_); }

void Linear::collect(std::vector<NamedParam>& params) {
  params.push_back({name_ + ".weight", weight_});
  params.push_back({name_ + ".bias", bias_});
}

std::vector<TensorRecord> gather_state(const std::vector<NamedParam>& params, const std::vector<NamedBuffer>& bufs) {
  std::vector<TensorRecord> out;
  for (const auto& p : params) out.push_back({p.name, p.tensor.shape(), p.tensor.vec()});
  for (const auto& b : bufs) out.push_back({b.name, {static_cast<int64_t>(b.data->size())}, *b.data});
  return out;
}

void scatter_state(const std::vector<TensorRecord>& records, std::vector<NamedParam> params,
                   std::vector<NamedBuffer> bufs) {
  auto find = [&records](const std::string& name) -> const TensorRecord& {
    for (const auto& r : records) {
      if (r.name == name) return r;
    }
    throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
  };
  for (auto& p : params) {
    const auto& r = find(p.name);
    if (r.shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint tensor '" + p.name + "' has shape " + shape_str(r.shape) + ", model expects " +
                               shape_str(p.tensor.shape()));
    }
    std::copy(r.values.begin(), r.values.end(), p.tensor.mutable_values().begin());
  }
  for (auto& b : bufs) {
    const auto& r = find(b.name);
    if (r.values.size() != b.data->size()) throw std::runtime_error("checkpoint buffer '" + b.name + "' has wrong size");
    *b.data = r.values;
  }
}

}  // namespace vdls
