#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vdls/ensemble.hpp"
#include "vdls/nn.hpp"
#include "vdls/rae.hpp"
#include "vdls/view.hpp"

namespace vdls {

struct PredictorConfig {
  int64_t k_v = 4;          // network-size multiplier; the seed has 16*k_v channels
  int image_stages = 3;     // a: up-blocks, each doubling W and H
  int depth_stages = 1;     // b: the first b up-blocks also double the ray axis
  float learning_rate = 5e-5f;
  int epochs = 100;
  float final_lr_fraction = 1.0f;  // cosine decay target, see cosine_lr
  float beta1 = 0.0f;              // Adam first-moment decay
  float weight_decay = 0.0f;       // decoupled (AdamW)
  /// Std of Gaussian jitter added to the training parameters, as a fraction
  /// of each parameter's range. Penalizes the input Jacobian.
  float input_noise = 0.0f;
  /// Group-lasso strength on the lift weights, one group per input
  /// parameter; applied as a proximal shrink after each step. Inputs the data
  /// does not support are driven to exactly zero weight.
  float input_group_lasso = 0.0f;
  bool spectral_norm = true;
  uint64_t seed = 0;

  void validate() const;
};

/// Construction-time shape bookkeeping of the predictor for one view.
struct PredictorShapes {
  std::array<int64_t, 4> seed;    // w, h, l, channels
  std::array<int64_t, 4> output;  // W, H, L0/s_r, t
  std::vector<int64_t> block_channels;  // output channels of each up-block
};

/// Pure function of the configuration. Rejects extents not divisible by 2^a
/// (image) or 2^b (latent ray length).
PredictorShapes predictor_shapes(const PredictorConfig& config, int64_t width, int64_t height, int64_t latent_length,
                                 int64_t latent_channels);

/// Fully-connected lift to a coarse 3D seed, residual 3D up-blocks, channel
/// projection to t, tanh.
class VDLPredictor {
 public:
  VDLPredictor(const PredictorConfig& config, const ParameterSpace& space, int64_t width, int64_t height,
               int64_t latent_length, int64_t latent_channels);

  /// Raw (unnormalized) parameters [d] or [1, d] -> latents [1, t, W, H, Ls].
  /// The range normalization is part of the graph, so gradients flow back to
  /// the raw parameter values.
  Tensor forward(const Tensor& params, bool training = false);

  const PredictorConfig& config() const { return config_; }
  const PredictorShapes& shapes() const { return shapes_; }
  const ParameterSpace& space() const { return space_; }

  std::vector<NamedParam> parameters();
  std::vector<TensorRecord> state();
  void load_state(const std::vector<TensorRecord>& records);

  /// L2 norm of the lift weights reading each input parameter.
  std::vector<double> input_weight_norms() const;
  /// Group soft-threshold: scales each input's lift column by
  /// max(0, 1 - amount / norm).
  void shrink_input_groups(double amount);

 private:
  struct UpBlock {
    Conv first, second, skip;
    bool has_skip = false;
    bool depth = false;
  };
  void collect(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers);

  PredictorConfig config_;
  ParameterSpace space_;
  PredictorShapes shapes_;
  Linear lift_;
  std::vector<UpBlock> blocks_;
  Conv output_;
};

struct PredictorCheckpoint {
  PredictorConfig config;
  ViewConfig view;
  Normalization normalization;
  std::string rae_id;
  std::vector<float> loss_curve;
  std::string id;
  std::string config_hash;
  std::shared_ptr<VDLPredictor> model;
};

void save_predictor(const std::filesystem::path& stem, const PredictorCheckpoint& ckpt);
PredictorCheckpoint load_predictor(const std::filesystem::path& stem);

/// One training sample: raw parameters and the RAE-encoded latent field.
struct LatentSample {
  std::vector<double> params;
  RayLatentField latents;
};

/// Plain mean-L1 against encoded fields, batch size 1, Adam(beta1, beta2).
/// On a non-finite loss the weights of the last finite epoch are restored.
TrainReport train_predictor(VDLPredictor& model, const std::vector<LatentSample>& samples, float beta1 = 0.0f,
                            float beta2 = 0.999f, int log_every = 0);

/// Binds a predictor to an RAE and checks that the pair is consistent.
void check_binding(const PredictorCheckpoint& pred, const RAECheckpoint& rae);

struct Prediction {
  RayLatentField latents;
  bool extrapolated = false;  // some parameter lies outside its training range
};

Prediction predict_latent(const SimParams& params, const PredictorCheckpoint& ckpt);

struct ViewPrediction {
  ViewDependentVolume data;
  bool extrapolated = false;
};

ViewPrediction predict_view_data(const SimParams& params, const PredictorCheckpoint& pred, const RAECheckpoint& rae);

/// Differentiable predict -> decode path for one view: [1, t, W, H, Ls]
/// latents to decoded rays [W*H, 1, L0].
Tensor decode_predicted(const Tensor& latents, RayAutoEncoder& rae);

}  // namespace vdls
