#include "vdls/rae.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "vdls/ops.hpp"
#include "vdls/optim.hpp"
#include "vdls/serialize.hpp"

namespace vdls {

namespace fs = std::filesystem;

void RAEConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("rae.channels (k_r) must be >= 1");
  if (latent_channels < 1) throw std::invalid_argument("rae.latent_channels (t) must be >= 1");
  if (stages < 1 || stages > 16) throw std::invalid_argument("rae.stages must be in [1, 16]");
  if (batch_size < 1) throw std::invalid_argument("rae.batch_size must be >= 1");
  if (!(learning_rate > 0.0f)) throw std::invalid_argument("rae.learning_rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("rae.epochs must be >= 0");
  if (!(final_lr_fraction > 0.0f && final_lr_fraction <= 1.0f))
    throw std::invalid_argument("rae.final_lr_fraction must be in (0, 1]");
  if (histogram_bins < 1) throw std::invalid_argument("rae.histogram_bins must be >= 1");
  if (histogram_eps < 0.0f) throw std::invalid_argument("rae.histogram_eps must be >= 0");
}

// --- weighted loss -----------------------------------------------------------

ValueHistogram ValueHistogram::build(std::span<const float> values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  ValueHistogram h;
  h.fraction.assign(static_cast<size_t>(bins), 0.0);
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.lo = *lo;
  h.hi = *hi;
  std::vector<int64_t> counts(static_cast<size_t>(bins), 0);
  for (float v : values) {
    int b = 0;
    if (h.hi > h.lo) b = std::min(bins - 1, static_cast<int>((v - h.lo) / (h.hi - h.lo) * static_cast<float>(bins)));
    ++counts[static_cast<size_t>(std::max(0, b))];
  }
  for (size_t b = 0; b < counts.size(); ++b) h.fraction[b] = static_cast<double>(counts[b]) / values.size();
  return h;
}

std::vector<float> ValueHistogram::weights(std::span<const float> values, float eps) const {
  const int bins = static_cast<int>(fraction.size());
  std::vector<float> w(values.size(), 1.0f);
  if (values.empty() || !(hi > lo)) return w;
  std::vector<int> bin_of(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const float t = (values[i] - lo) / (hi - lo);
    bin_of[i] = std::clamp(static_cast<int>(t * static_cast<float>(bins)), 0, bins - 1);
  }
  // Equal occupancy (or a single occupied bin) means equal weights.
  double first = -1.0;
  bool uniform = true;
  for (int b : bin_of) {
    const double f = fraction[static_cast<size_t>(b)];
    if (first < 0.0) first = f;
    else if (f != first) {
      uniform = false;
      break;
    }
  }
  if (uniform) return w;
  std::vector<double> raw(values.size());
  double total = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    raw[i] = 1.0 / (fraction[static_cast<size_t>(bin_of[i])] + eps);
    total += raw[i];
  }
  const double mean_w = total / static_cast<double>(values.size());
  for (size_t i = 0; i < values.size(); ++i) w[i] = static_cast<float>(raw[i] / mean_w);
  return w;
}

std::vector<float> histogram_weights(std::span<const float> target, int bins, float eps) {
  return ValueHistogram::build(target, bins).weights(target, eps);
}

Tensor information_weighted_l1(const Tensor& pred, const Tensor& target, int bins, float eps) {
  return weighted_l1_loss(pred, target, histogram_weights(target.values(), bins, eps));
}

// --- model -------------------------------------------------------------------------

RayAutoEncoder::RayAutoEncoder(const RAEConfig& config, int64_t ray_length) : config_(config), ray_length_(ray_length) {
  config_.validate();
  if (ray_length < 1 || ray_length % config_.reduction() != 0) {
    throw std::invalid_argument("ray length " + std::to_string(ray_length) + " is not divisible by 2^" +
                                std::to_string(config_.stages) + " = " + std::to_string(config_.reduction()));
  }
  Rng rng(config_.seed);
  const int64_t k = config_.channels;
  const bool sn = config_.spectral_norm;
  lift_ = Conv("enc.lift", 1, 1, k, 3, sn, rng);
  for (int s = 0; s < config_.stages; ++s) {
    const std::string p = "enc.block" + std::to_string(s);
    encoder_.push_back({Conv(p + ".conv1", 1, k, k, 3, sn, rng), Conv(p + ".conv2", 1, k, k, 3, sn, rng)});
  }
  project_ = Conv("enc.project", 1, k, config_.latent_channels, 3, sn, rng);
  unproject_ = Conv("dec.lift", 1, config_.latent_channels, k, 3, sn, rng);
  for (int s = 0; s < config_.stages; ++s) {
    const std::string p = "dec.block" + std::to_string(s);
    decoder_.push_back({Conv(p + ".conv1", 1, k, k, 3, sn, rng), Conv(p + ".conv2", 1, k, k, 3, sn, rng)});
  }
  output_ = Conv("dec.output", 1, k, 1, 3, sn, rng, 0.1f);
}

// Encoder block: (conv-norm-relu) x2, then average-pool; the pooled input is
// added back. Decoder block: upsample first, then the same convolutions with
// the upsampled input added back.
Tensor RayAutoEncoder::block_forward(Block& b, const Tensor& x, bool down, bool training) {
  Tensor in = down ? x : nn_upsample(x, 2, {2});
  Tensor y = b.first.forward(in, training);
  if (config_.instance_norm) y = instance_norm(y);
  y = relu(y);
  y = b.second.forward(y, training);
  if (config_.instance_norm) y = instance_norm(y);
  y = relu(y);
  if (down) return add(avg_pool(y, 2, {2}), avg_pool(in, 2, {2}));
  return add(y, in);
}

Tensor RayAutoEncoder::encode(const Tensor& rays, bool training) {
  if (rays.rank() != 3 || rays.dim(1) != 1 || rays.dim(2) != ray_length_) {
    throw std::invalid_argument("encode: expected rays [N,1," + std::to_string(ray_length_) + "], got " +
                                shape_str(rays.shape()));
  }
  Tensor x = relu(lift_.forward(rays, training));
  for (auto& b : encoder_) x = block_forward(b, x, true, training);
  return tanh(project_.forward(x, training));
}

Tensor RayAutoEncoder::decode(const Tensor& latents, bool training) {
  if (latents.rank() != 3 || latents.dim(1) != config_.latent_channels || latents.dim(2) != latent_length()) {
    throw std::invalid_argument("decode: expected latents [N," + std::to_string(config_.latent_channels) + "," +
                                std::to_string(latent_length()) + "], got " + shape_str(latents.shape()));
  }
  Tensor x = relu(unproject_.forward(latents, training));
  for (auto& b : decoder_) x = block_forward(b, x, false, training);
  return tanh(output_.forward(x, training));
}

std::vector<NamedParam> RayAutoEncoder::parameters() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> bufs;
  lift_.collect(params, bufs);
  for (auto& b : encoder_) {
    b.first.collect(params, bufs);
    b.second.collect(params, bufs);
  }
  project_.collect(params, bufs);
  unproject_.collect(params, bufs);
  for (auto& b : decoder_) {
    b.first.collect(params, bufs);
    b.second.collect(params, bufs);
  }
  output_.collect(params, bufs);
  return params;
}

std::vector<NamedBuffer> RayAutoEncoder::buffers() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> bufs;
  lift_.collect(params, bufs);
  for (auto& b : encoder_) {
    b.first.collect(params, bufs);
    b.second.collect(params, bufs);
  }
  project_.collect(params, bufs);
  unproject_.collect(params, bufs);
  for (auto& b : decoder_) {
    b.first.collect(params, bufs);
    b.second.collect(params, bufs);
  }
  output_.collect(params, bufs);
  return bufs;
}

std::vector<TensorRecord> RayAutoEncoder::state() { return gather_state(parameters(), buffers()); }

void RayAutoEncoder::load_state(const std::vector<TensorRecord>& records) {
  scatter_state(records, parameters(), buffers());
}

// --- checkpoints ---------------------------------------------------------------

void save_rae(const fs::path& stem, const RAECheckpoint& ckpt) {
  auto records = ckpt.model->state();
  save_checkpoint(artifact_path(stem, ".vdls"), records);
  nlohmann::json j;
  j["format"] = "vdls-rae";
  j["version"] = 1;
  j["id"] = checkpoint_digest(records);
  j["config"] = ckpt.config;
  j["view"] = ckpt.view;
  j["ray_length"] = ckpt.model->ray_length();
  j["normalization"] = ckpt.normalization;
  j["loss_curve"] = ckpt.loss_curve;
  j["config_hash"] = ckpt.config_hash;
  j["weights"] = artifact_path(stem, ".vdls").filename().string();
  write_json_file(artifact_path(stem, ".json"), j);
}

RAECheckpoint load_rae(const fs::path& stem) {
  const auto header = artifact_path(stem, ".json");
  if (!fs::exists(header)) throw std::runtime_error("RAE checkpoint not found: " + header.string());
  const auto j = read_json_file(header);
  if (j.value("format", "") != "vdls-rae") throw std::runtime_error(header.string() + ": not an RAE checkpoint");
  RAECheckpoint c;
  c.config = j.at("config").get<RAEConfig>();
  c.view = j.at("view").get<ViewConfig>();
  c.normalization = j.at("normalization").get<Normalization>();
  c.loss_curve = j.at("loss_curve").get<std::vector<float>>();
  c.config_hash = j.value("config_hash", "");
  c.model = std::make_shared<RayAutoEncoder>(c.config, j.at("ray_length").get<int64_t>());
  const auto records = load_checkpoint(header.parent_path() / j.at("weights").get<std::string>());
  c.model->load_state(records);
  c.id = checkpoint_digest(records);
  if (c.id != j.at("id").get<std::string>()) {
    throw std::runtime_error(header.string() + ": weights digest does not match the recorded id");
  }
  return c;
}

// --- training ------------------------------------------------------------------

namespace {

bool all_finite(const std::vector<NamedParam>& params) {
  for (const auto& p : params) {
    for (float v : p.tensor.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

Tensor gather_rays(const Tensor& rays, std::span<const size_t> idx) {
  const int64_t L = rays.dim(2);
  std::vector<float> out(idx.size() * static_cast<size_t>(L));
  const float* src = rays.values().data();
  for (size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src + idx[i] * L, L, out.data() + i * L);
  }
  return Tensor({static_cast<int64_t>(idx.size()), 1, L}, std::move(out));
}

}  // namespace

TrainReport train_rae(RayAutoEncoder& model, const Tensor& rays, float beta1, float beta2, int log_every) {
  const auto& cfg = model.config();
  if (rays.rank() != 3 || rays.dim(0) < 1) throw std::invalid_argument("train_rae: need at least one ray");
  auto params = model.parameters();
  Adam adam(params, AdamOptions{cfg.learning_rate, beta1, beta2, 1e-8f});
  Rng rng(cfg.seed ^ 0x5eedULL);
  const size_t n = static_cast<size_t>(rays.dim(0));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::optional<ValueHistogram> global_hist;
  if (cfg.global_histogram) global_hist = ValueHistogram::build(rays.values(), cfg.histogram_bins);

  TrainReport report;
  auto snapshot = model.state();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_lr(cosine_lr(cfg.learning_rate, cfg.final_lr_fraction, epoch, cfg.epochs));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
      Tensor batch = gather_rays(rays, std::span<const size_t>(order).subspan(start, end - start));
      Tensor recon = model.decode(model.encode(batch, true), true);
      const auto weights = global_hist ? global_hist->weights(batch.values(), cfg.histogram_eps)
                                       : histogram_weights(batch.values(), cfg.histogram_bins, cfg.histogram_eps);
      Tensor loss = weighted_l1_loss(recon, batch, weights);
      const float lv = loss.item();
      if (!std::isfinite(lv)) {
        model.load_state(snapshot);
        report.diverged = true;
        report.message = "non-finite RAE loss at epoch " + std::to_string(epoch) + "; restored last finite epoch";
        return report;
      }
      loss.backward();
      adam.step();
      total += lv;
      ++batches;
    }
    if (!all_finite(params)) {
      model.load_state(snapshot);
      report.diverged = true;
      report.message = "non-finite RAE weights after epoch " + std::to_string(epoch) + "; restored last finite epoch";
      return report;
    }
    snapshot = model.state();
    report.loss_curve.push_back(static_cast<float>(total / std::max(1, batches)));
    if (log_every > 0 && (epoch % log_every == 0 || epoch + 1 == cfg.epochs)) {
      std::cerr << "  rae epoch " << epoch << " loss " << report.loss_curve.back() << '\n';
    }
  }
  return report;
}

// --- latent fields ---------------------------------------------------------------

Tensor RayLatentField::as_latent_batch() const {
  const int64_t rays = view.width * view.height;
  std::vector<float> out(values.size());
  for (int64_t r = 0; r < rays; ++r) {
    for (int64_t l = 0; l < latent_length; ++l) {
      for (int64_t c = 0; c < latent_channels; ++c) {
        out[static_cast<size_t>((r * latent_channels + c) * latent_length + l)] =
            values[static_cast<size_t>((r * latent_length + l) * latent_channels + c)];
      }
    }
  }
  return Tensor({rays, latent_channels, latent_length}, std::move(out));
}

Tensor RayLatentField::as_predictor_target() const {
  const int64_t W = view.width, H = view.height;
  std::vector<float> out(values.size());
  for (int64_t i = 0; i < W; ++i) {
    for (int64_t j = 0; j < H; ++j) {
      for (int64_t l = 0; l < latent_length; ++l) {
        for (int64_t c = 0; c < latent_channels; ++c) {
          out[static_cast<size_t>(((c * W + i) * H + j) * latent_length + l)] =
              values[static_cast<size_t>(((i * H + j) * latent_length + l) * latent_channels + c)];
        }
      }
    }
  }
  return Tensor({1, latent_channels, W, H, latent_length}, std::move(out));
}

RayLatentField RayLatentField::from_latent_batch(const Tensor& latents, const ViewConfig& view) {
  if (latents.rank() != 3 || latents.dim(0) != view.width * view.height) {
    throw std::invalid_argument("latent batch " + shape_str(latents.shape()) + " does not match the view");
  }
  RayLatentField f;
  f.view = view;
  f.latent_channels = latents.dim(1);
  f.latent_length = latents.dim(2);
  f.values.resize(static_cast<size_t>(latents.numel()));
  const auto v = latents.values();
  const int64_t rays = latents.dim(0);
  for (int64_t r = 0; r < rays; ++r) {
    for (int64_t c = 0; c < f.latent_channels; ++c) {
      for (int64_t l = 0; l < f.latent_length; ++l) {
        f.values[static_cast<size_t>((r * f.latent_length + l) * f.latent_channels + c)] =
            v[static_cast<size_t>((r * f.latent_channels + c) * f.latent_length + l)];
      }
    }
  }
  return f;
}

RayLatentField encode_field(const ViewDependentVolume& vdv, const RAECheckpoint& ckpt, int64_t batch) {
  if (!(vdv.normalization == ckpt.normalization)) {
    throw std::invalid_argument("encode_field: view data normalization [" + std::to_string(vdv.normalization.min) + ", " +
                                std::to_string(vdv.normalization.max) + "] differs from the RAE checkpoint's");
  }
  if (vdv.config.ray_length != ckpt.model->ray_length()) {
    throw std::invalid_argument("encode_field: ray length " + std::to_string(vdv.config.ray_length) +
                                " differs from the RAE's " + std::to_string(ckpt.model->ray_length()));
  }
  if (!(vdv.config == ckpt.view)) throw std::invalid_argument("encode_field: view configuration differs from the RAE's");
  NoGradGuard guard;
  const int64_t rays = vdv.ray_count();
  const int64_t L = vdv.config.ray_length;
  const int64_t t = ckpt.config.latent_channels;
  const int64_t Ls = ckpt.model->latent_length();
  std::vector<float> latents(static_cast<size_t>(rays * t * Ls));
  for (int64_t start = 0; start < rays; start += batch) {
    const int64_t count = std::min(batch, rays - start);
    std::vector<float> chunk(vdv.values.begin() + start * L, vdv.values.begin() + (start + count) * L);
    Tensor z = ckpt.model->encode(Tensor({count, 1, L}, std::move(chunk)));
    std::copy(z.values().begin(), z.values().end(), latents.begin() + start * t * Ls);
  }
  auto field = RayLatentField::from_latent_batch(Tensor({rays, t, Ls}, std::move(latents)), vdv.config);
  field.params = vdv.params;
  field.rae_id = ckpt.id;
  return field;
}

ViewDependentVolume decode_field(const RayLatentField& field, const RAECheckpoint& ckpt, int64_t batch) {
  if (field.latent_channels != ckpt.config.latent_channels || field.latent_length != ckpt.model->latent_length()) {
    throw std::invalid_argument("decode_field: latent extents do not match the RAE");
  }
  NoGradGuard guard;
  Tensor all = field.as_latent_batch();
  const int64_t rays = all.dim(0);
  const int64_t per = field.latent_channels * field.latent_length;
  const int64_t L = ckpt.model->ray_length();
  std::vector<float> out(static_cast<size_t>(rays * L));
  for (int64_t start = 0; start < rays; start += batch) {
    const int64_t count = std::min(batch, rays - start);
    std::vector<float> chunk(all.values().begin() + start * per, all.values().begin() + (start + count) * per);
    Tensor r = ckpt.model->decode(Tensor({count, field.latent_channels, field.latent_length}, std::move(chunk)));
    std::copy(r.values().begin(), r.values().end(), out.begin() + start * L);
  }
  ViewDependentVolume vdv;
  vdv.config = field.view;
  vdv.values = std::move(out);
  vdv.normalization = ckpt.normalization;
  vdv.params = field.params;
  return vdv;
}

void save_latent_field(const fs::path& stem, const RayLatentField& field) {
  save_checkpoint(artifact_path(stem, ".vdls"), {{"latent", field.shape(), field.values}});
  nlohmann::json j;
  j["format"] = "vdls-latent-field";
  j["version"] = 1;
  j["view"] = field.view;
  j["rae_id"] = field.rae_id;
  j["shape"] = field.shape();
  if (field.params) j["params"] = *field.params;
  j["values"] = artifact_path(stem, ".vdls").filename().string();
  write_json_file(artifact_path(stem, ".json"), j);
}

RayLatentField load_latent_field(const fs::path& stem) {
  const auto header = artifact_path(stem, ".json");
  const auto j = read_json_file(header);
  if (j.value("format", "") != "vdls-latent-field") throw std::runtime_error(header.string() + ": not a latent field");
  auto records = load_checkpoint(header.parent_path() / j.at("values").get<std::string>());
  if (records.size() != 1 || records[0].shape.size() != 4) throw std::runtime_error(header.string() + ": malformed payload");
  RayLatentField f;
  f.view = j.at("view").get<ViewConfig>();
  f.rae_id = j.value("rae_id", "");
  f.latent_length = records[0].shape[2];
  f.latent_channels = records[0].shape[3];
  f.values = std::move(records[0].values);
  if (j.contains("params")) f.params = j.at("params").get<SimParams>();
  return f;
}

}  // namespace vdls
