#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vdls/checkpoint.hpp"
#include "vdls/nn.hpp"
#include "vdls/view.hpp"

namespace vdls {

struct RAEConfig {
  int64_t channels = 64;   // k_r, constant hidden width
  int64_t latent_channels = 3;  // t
  int stages = 4;          // n_r; length reduction 2^n_r
  int64_t batch_size = 1024;
  float learning_rate = 5e-5f;
  int epochs = 10;
  float final_lr_fraction = 1.0f;  // cosine decay target, see cosine_lr
  int histogram_bins = 32;
  float histogram_eps = 1e-3f;
  /// Histogram over the whole training set instead of per batch.
  bool global_histogram = false;
  bool instance_norm = true;
  bool spectral_norm = true;
  uint64_t seed = 0;

  int64_t reduction() const { return int64_t{1} << stages; }
  void validate() const;
};

/// Per-element weights for the information-driven weighted L1 loss: the
/// inverse of each target value's histogram frequency (fraction of the batch
/// in its bin, plus `eps`), rescaled to mean 1. A constant batch, or one whose
/// occupied bins all hold equally many values, gets weight 1 everywhere.
std::vector<float> histogram_weights(std::span<const float> target, int bins, float eps);

/// Same weights from a precomputed frequency table spanning [lo, hi].
struct ValueHistogram {
  float lo = 0.0f, hi = 0.0f;
  std::vector<double> fraction;
  static ValueHistogram build(std::span<const float> values, int bins);
  std::vector<float> weights(std::span<const float> values, float eps) const;
};

/// mean(w * |pred - target|) with histogram weights derived from `target`.
Tensor information_weighted_l1(const Tensor& pred, const Tensor& target, int bins, float eps);

/// Ray AutoEncoder: 1D convolutional residual encoder/decoder over single rays.
class RayAutoEncoder {
 public:
  RayAutoEncoder(const RAEConfig& config, int64_t ray_length);

  /// rays [N, 1, L0] -> latents [N, t, L0/s_r] in (-1, 1).
  Tensor encode(const Tensor& rays, bool training = false);
  /// latents [N, t, L0/s_r] -> rays [N, 1, L0] in (-1, 1).
  Tensor decode(const Tensor& latents, bool training = false);

  const RAEConfig& config() const { return config_; }
  int64_t ray_length() const { return ray_length_; }
  int64_t latent_length() const { return ray_length_ / config_.reduction(); }

  std::vector<NamedParam> parameters();
  std::vector<TensorRecord> state();
  void load_state(const std::vector<TensorRecord>& records);

 private:
  struct Block {
    Conv first, second;
  };
  Tensor block_forward(Block& b, const Tensor& x, bool down, bool training);
  std::vector<NamedBuffer> buffers();

  RAEConfig config_;
  int64_t ray_length_;
  Conv lift_, project_;
  std::vector<Block> encoder_;
  Conv unproject_, output_;
  std::vector<Block> decoder_;
};

/// Trained RAE bound to a view and a dataset normalization.
struct RAECheckpoint {
  RAEConfig config;
  ViewConfig view;
  Normalization normalization;
  std::vector<float> loss_curve;  // mean loss per epoch
  std::string id;                 // digest of the weights
  std::string config_hash;
  std::shared_ptr<RayAutoEncoder> model;
};

void save_rae(const std::filesystem::path& stem, const RAECheckpoint& ckpt);
/// Accepts the stem or either of `<stem>.vdls` / `<stem>.json`.
RAECheckpoint load_rae(const std::filesystem::path& stem);

struct TrainReport {
  std::vector<float> loss_curve;
  bool diverged = false;
  std::string message;
};

/// Trains on [N, 1, L0] rays with Adam(beta1, beta2) and the weighted L1
/// loss. On a non-finite loss the model is restored to the last finite epoch
/// and the report is flagged as diverged.
TrainReport train_rae(RayAutoEncoder& model, const Tensor& rays, float beta1 = 0.0f, float beta2 = 0.999f,
                      int log_every = 0);

/// W x H x (L0/s_r) x t latent grid for one view.
struct RayLatentField {
  ViewConfig view;
  int64_t latent_length = 0;
  int64_t latent_channels = 0;
  std::vector<float> values;  // index ((i*H + j)*latent_length + l)*t + c
  std::optional<SimParams> params;
  std::string rae_id;

  Shape shape() const { return {view.width, view.height, latent_length, latent_channels}; }
  /// [W*H, t, L/s_r] batch for the decoder.
  Tensor as_latent_batch() const;
  /// [1, t, W, H, L/s_r] for the predictor.
  Tensor as_predictor_target() const;
  static RayLatentField from_latent_batch(const Tensor& latents, const ViewConfig& view);
};

/// Encodes every ray of a view-dependent volume in batches. Rejects data whose
/// normalization or view differs from the checkpoint's.
RayLatentField encode_field(const ViewDependentVolume& vdv, const RAECheckpoint& ckpt, int64_t batch = 1024);
/// Decodes a latent field back to view-dependent data.
ViewDependentVolume decode_field(const RayLatentField& field, const RAECheckpoint& ckpt, int64_t batch = 1024);

void save_latent_field(const std::filesystem::path& stem, const RayLatentField& field);
RayLatentField load_latent_field(const std::filesystem::path& stem);

}  // namespace vdls
