#pragma once

// Random small instances of every differentiable layer, shared by the unit
// tests and the acceptance gate.

#include <memory>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace vdls::testing {

struct LayerInstance {
  OpFn op;
  std::vector<Tensor> inputs;
};

struct LayerCase {
  std::string name;
  std::function<LayerInstance(std::mt19937_64&)> make;
};

inline std::vector<LayerCase> layer_cases() {
  std::vector<LayerCase> cases;
  cases.push_back({"conv1d", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return conv1d(in[0], in[1], in[2]); },
                                          {random_tensor({2, 2, 6}, rng), random_tensor({3, 2, 3}, rng),
                                           random_tensor({3}, rng)}};
                   }});
  cases.push_back({"conv3d", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return conv3d(in[0], in[1], in[2]); },
                                          {random_tensor({1, 2, 4, 4, 4}, rng), random_tensor({2, 2, 3, 3, 3}, rng),
                                           random_tensor({2}, rng)}};
                   }});
  cases.push_back({"avg_pool", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return avg_pool(in[0], 2, {2, 3}); },
                                          {random_tensor({1, 2, 4, 6}, rng)}};
                   }});
  cases.push_back({"nn_upsample", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return nn_upsample(in[0], 2, {2, 3, 4}); },
                                          {random_tensor({1, 2, 2, 3, 2}, rng)}};
                   }});
  cases.push_back({"instance_norm", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return instance_norm(in[0]); },
                                          {random_tensor({2, 3, 8}, rng)}};
                   }});
  cases.push_back({"linear", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
                                          {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng),
                                           random_tensor({5}, rng)}};
                   }});
  cases.push_back({"relu", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return relu(in[0]); },
                                          {away_from_zero(random_tensor({4, 5}, rng), 0.05f)}};
                   }});
  cases.push_back({"tanh", [](std::mt19937_64& rng) {
                     return LayerInstance{[](const std::vector<Tensor>& in) { return vdls::tanh(in[0]); },
                                          {random_tensor({4, 5}, rng, -2.0f, 2.0f)}};
                   }});
  cases.push_back({"spectral_normalize", [](std::mt19937_64& rng) {
                     // Converge u first: the backward treats u, v as the exact
                     // singular pair.
                     Tensor w = random_tensor({4, 2, 3}, rng);
                     auto u = std::make_shared<std::vector<float>>(random_values(4, rng));
                     power_iteration(w.values(), 4, 6, *u, 500);
                     return LayerInstance{[u](const std::vector<Tensor>& in) {
                                            auto copy = *u;
                                            return spectral_normalize(in[0], copy, false);
                                          },
                                          {w}};
                   }});
  return cases;
}

}  // namespace vdls::testing
