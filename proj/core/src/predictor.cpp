#include "vdls/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "vdls/ops.hpp"
#include "vdls/optim.hpp"
#include "vdls/serialize.hpp"

namespace vdls {

namespace fs = std::filesystem;

void PredictorConfig::validate() const {
  if (k_v < 1) throw std::invalid_argument("predictor.k_v must be >= 1");
  if (image_stages < 0 || image_stages > 12) throw std::invalid_argument("predictor.image_stages (a) must be in [0, 12]");
  if (depth_stages < 0 || depth_stages > image_stages) {
    throw std::invalid_argument("predictor.depth_stages (b) must be in [0, a]");
  }
  if (!(learning_rate > 0.0f)) throw std::invalid_argument("predictor.learning_rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("predictor.epochs must be >= 0");
  if (!(final_lr_fraction > 0.0f && final_lr_fraction <= 1.0f))
    throw std::invalid_argument("predictor.final_lr_fraction must be in (0, 1]");
  if (!(beta1 >= 0.0f && beta1 < 1.0f)) throw std::invalid_argument("predictor.beta1 must be in [0, 1)");
  if (!(weight_decay >= 0.0f)) throw std::invalid_argument("predictor.weight_decay must be >= 0");
  if (!(input_noise >= 0.0f)) throw std::invalid_argument("predictor.input_noise must be >= 0");
  if (!(input_group_lasso >= 0.0f)) throw std::invalid_argument("predictor.input_group_lasso must be >= 0");
}

PredictorShapes predictor_shapes(const PredictorConfig& config, int64_t width, int64_t height, int64_t latent_length,
                                 int64_t latent_channels) {
  config.validate();
  const int64_t fi = int64_t{1} << config.image_stages;
  const int64_t fd = int64_t{1} << config.depth_stages;
  if (width % fi != 0 || height % fi != 0) {
    throw std::invalid_argument("image extents " + std::to_string(width) + "x" + std::to_string(height) +
                                " are not divisible by 2^a = " + std::to_string(fi));
  }
  if (latent_length % fd != 0) {
    throw std::invalid_argument("latent ray length " + std::to_string(latent_length) + " is not divisible by 2^b = " +
                                std::to_string(fd));
  }
  PredictorShapes s;
  s.seed = {width / fi, height / fi, latent_length / fd, 16 * config.k_v};
  s.output = {width, height, latent_length, latent_channels};
  int64_t c = s.seed[3];
  for (int i = 0; i < config.image_stages; ++i) {
    c = std::max(config.k_v, c / 2);
    s.block_channels.push_back(c);
  }
  return s;
}

VDLPredictor::VDLPredictor(const PredictorConfig& config, const ParameterSpace& space, int64_t width, int64_t height,
                           int64_t latent_length, int64_t latent_channels)
    : config_(config), space_(space), shapes_(predictor_shapes(config, width, height, latent_length, latent_channels)) {
  space_.validate();
  Rng rng(config_.seed);
  const int64_t seed_numel = shapes_.seed[0] * shapes_.seed[1] * shapes_.seed[2] * shapes_.seed[3];
  lift_ = Linear("lift", static_cast<int64_t>(space_.size()), seed_numel, rng);
  const bool sn = config_.spectral_norm;
  int64_t c = shapes_.seed[3];
  for (int i = 0; i < config_.image_stages; ++i) {
    const int64_t co = shapes_.block_channels[static_cast<size_t>(i)];
    const std::string p = "block" + std::to_string(i);
    UpBlock b;
    b.first = Conv(p + ".conv1", 3, c, co, 3, sn, rng);
    b.second = Conv(p + ".conv2", 3, co, co, 3, sn, rng);
    b.has_skip = co != c;
    if (b.has_skip) b.skip = Conv(p + ".skip", 3, c, co, 1, sn, rng);
    b.depth = i < config_.depth_stages;
    blocks_.push_back(std::move(b));
    c = co;
  }
  output_ = Conv("output", 3, c, latent_channels, 3, sn, rng);
}

Tensor VDLPredictor::forward(const Tensor& params, bool training) {
  const auto d = static_cast<int64_t>(space_.size());
  if (params.numel() != d) {
    throw std::invalid_argument("predictor expects " + std::to_string(d) + " parameters, got " + shape_str(params.shape()));
  }
  // [min, max] -> [-1, 1] inside the graph.
  std::vector<float> sc(static_cast<size_t>(d)), sh(static_cast<size_t>(d));
  for (size_t i = 0; i < space_.size(); ++i) {
    const double lo = space_.ranges[i].min, hi = space_.ranges[i].max;
    sc[i] = static_cast<float>(2.0 / (hi - lo));
    sh[i] = static_cast<float>(-1.0 - 2.0 * lo / (hi - lo));
  }
  Tensor x = affine(reshape(params, {1, d}), sc, sh);
  x = relu(lift_.forward(x));
  x = reshape(x, {1, shapes_.seed[3], shapes_.seed[0], shapes_.seed[1], shapes_.seed[2]});
  for (auto& b : blocks_) {
    Tensor up = b.depth ? nn_upsample(x, 2, {2, 3, 4}) : nn_upsample(x, 2, {2, 3});
    Tensor y = relu(b.first.forward(up, training));
    y = relu(b.second.forward(y, training));
    x = add(y, b.has_skip ? b.skip.forward(up, training) : up);
  }
  return tanh(output_.forward(x, training));
}

void VDLPredictor::collect(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers) {
  lift_.collect(params);
  for (auto& b : blocks_) {
    b.first.collect(params, buffers);
    b.second.collect(params, buffers);
    if (b.has_skip) b.skip.collect(params, buffers);
  }
  output_.collect(params, buffers);
}

std::vector<double> VDLPredictor::input_weight_norms() const {
  const auto& w = lift_.weight();
  const int64_t rows = w.dim(0), cols = w.dim(1);
  std::vector<double> norms(static_cast<size_t>(cols), 0.0);
  const auto v = w.values();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      const double x = v[static_cast<size_t>(r * cols + c)];
      norms[static_cast<size_t>(c)] += x * x;
    }
  }
  for (auto& n : norms) n = std::sqrt(n);
  return norms;
}

void VDLPredictor::shrink_input_groups(double amount) {
  const auto norms = input_weight_norms();
  auto& w = lift_.weight();
  const int64_t rows = w.dim(0), cols = w.dim(1);
  auto v = w.mutable_values();
  for (int64_t c = 0; c < cols; ++c) {
    const double n = norms[static_cast<size_t>(c)];
    const auto f = static_cast<float>(n > amount ? 1.0 - amount / n : 0.0);
    for (int64_t r = 0; r < rows; ++r) v[static_cast<size_t>(r * cols + c)] *= f;
  }
}

std::vector<NamedParam> VDLPredictor::parameters() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> buffers;
  collect(params, buffers);
  return params;
}

std::vector<TensorRecord> VDLPredictor::state() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> buffers;
  collect(params, buffers);
  return gather_state(params, buffers);
}

void VDLPredictor::load_state(const std::vector<TensorRecord>& records) {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> buffers;
  collect(params, buffers);
  scatter_state(records, params, buffers);
}

// --- checkpoints ---------------------------------------------------------------

void save_predictor(const fs::path& stem, const PredictorCheckpoint& ckpt) {
  auto records = ckpt.model->state();
  save_checkpoint(artifact_path(stem, ".vdls"), records);
  const auto& s = ckpt.model->shapes();
  nlohmann::json j;
  j["format"] = "vdls-predictor";
  j["version"] = 1;
  j["id"] = checkpoint_digest(records);
  j["config"] = ckpt.config;
  j["view"] = ckpt.view;
  j["space"] = ckpt.model->space();
  j["latent_length"] = s.output[2];
  j["latent_channels"] = s.output[3];
  j["normalization"] = ckpt.normalization;
  j["rae_id"] = ckpt.rae_id;
  j["loss_curve"] = ckpt.loss_curve;
  j["config_hash"] = ckpt.config_hash;
  j["weights"] = artifact_path(stem, ".vdls").filename().string();
  write_json_file(artifact_path(stem, ".json"), j);
}

PredictorCheckpoint load_predictor(const fs::path& stem) {
  const auto header = artifact_path(stem, ".json");
  if (!fs::exists(header)) throw std::runtime_error("predictor checkpoint not found: " + header.string());
  const auto j = read_json_file(header);
  if (j.value("format", "") != "vdls-predictor") throw std::runtime_error(header.string() + ": not a predictor checkpoint");
  PredictorCheckpoint c;
  c.config = j.at("config").get<PredictorConfig>();
  c.view = j.at("view").get<ViewConfig>();
  c.normalization = j.at("normalization").get<Normalization>();
  c.rae_id = j.at("rae_id").get<std::string>();
  c.loss_curve = j.at("loss_curve").get<std::vector<float>>();
  c.config_hash = j.value("config_hash", "");
  c.model = std::make_shared<VDLPredictor>(c.config, j.at("space").get<ParameterSpace>(), c.view.width, c.view.height,
                                           j.at("latent_length").get<int64_t>(), j.at("latent_channels").get<int64_t>());
  const auto records = load_checkpoint(header.parent_path() / j.at("weights").get<std::string>());
  c.model->load_state(records);
  c.id = checkpoint_digest(records);
  if (c.id != j.at("id").get<std::string>()) {
    throw std::runtime_error(header.string() + ": weights digest does not match the recorded id");
  }
  return c;
}

// --- training ------------------------------------------------------------------

TrainReport train_predictor(VDLPredictor& model, const std::vector<LatentSample>& samples, float beta1, float beta2,
                            int log_every) {
  if (samples.empty()) throw std::invalid_argument("train_predictor: no training samples");
  const auto& cfg = model.config();
  const auto& out = model.shapes().output;
  std::vector<Tensor> inputs, targets;
  for (const auto& s : samples) {
    const auto shp = s.latents.shape();
    if (shp[0] != out[0] || shp[1] != out[1] || shp[2] != out[2] || shp[3] != out[3]) {
      throw std::invalid_argument("train_predictor: latent field " + shape_str(shp) + " does not match predictor output " +
                                  shape_str({out[0], out[1], out[2], out[3]}));
    }
    std::vector<float> p(s.params.begin(), s.params.end());
    const auto d = static_cast<int64_t>(p.size());
    inputs.emplace_back(Shape{d}, std::move(p));
    targets.push_back(s.latents.as_predictor_target());
  }
  auto params = model.parameters();
  Adam adam(params, AdamOptions{cfg.learning_rate, beta1, beta2, 1e-8f, cfg.weight_decay});
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, cfg.input_noise);
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  auto snapshot = model.state();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_lr(cosine_lr(cfg.learning_rate, cfg.final_lr_fraction, epoch, cfg.epochs));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (size_t i : order) {
      Tensor input = inputs[i];
      if (cfg.input_noise > 0.0f) {
        input = inputs[i].detach();
        auto v = input.mutable_values();
        const auto& ranges = model.space().ranges;
        for (size_t k = 0; k < v.size(); ++k) {
          v[k] += static_cast<float>(noise(rng) * (ranges[k].max - ranges[k].min));
        }
      }
      Tensor loss = l1_loss(model.forward(input, true), targets[i]);
      const float lv = loss.item();
      if (!std::isfinite(lv)) {
        model.load_state(snapshot);
        report.diverged = true;
        report.message = "non-finite predictor loss at epoch " + std::to_string(epoch) + "; restored last finite epoch";
        return report;
      }
      loss.backward();
      adam.step();
      if (cfg.input_group_lasso > 0.0f) model.shrink_input_groups(adam.options().lr * cfg.input_group_lasso);
      total += lv;
    }
    snapshot = model.state();
    report.loss_curve.push_back(static_cast<float>(total / static_cast<double>(samples.size())));
    if (log_every > 0 && (epoch % log_every == 0 || epoch + 1 == cfg.epochs)) {
      std::cerr << "  predictor epoch " << epoch << " loss " << report.loss_curve.back() << '\n';
    }
  }
  return report;
}

// --- inference -------------------------------------------------------------------

void check_binding(const PredictorCheckpoint& pred, const RAECheckpoint& rae) {
  if (pred.rae_id != rae.id) {
    throw std::invalid_argument("predictor was trained against RAE " + pred.rae_id + ", not " + rae.id);
  }
  if (!(pred.view == rae.view)) throw std::invalid_argument("predictor and RAE are bound to different views");
  const auto& out = pred.model->shapes().output;
  if (out[2] != rae.model->latent_length() || out[3] != rae.config.latent_channels) {
    throw std::invalid_argument("predictor latent extents do not match the RAE");
  }
}

namespace {
Tensor params_tensor(const SimParams& params) {
  std::vector<float> p(params.values.begin(), params.values.end());
  const auto d = static_cast<int64_t>(p.size());
  return Tensor({d}, std::move(p));
}
}  // namespace

Prediction predict_latent(const SimParams& params, const PredictorCheckpoint& ckpt) {
  const auto& space = ckpt.model->space();
  if (params.values.size() != space.size()) {
    throw std::invalid_argument("expected " + std::to_string(space.size()) + " parameters, got " +
                                std::to_string(params.values.size()));
  }
  NoGradGuard guard;
  Tensor z = ckpt.model->forward(params_tensor(params));
  // [1, t, W, H, Ls] -> [W*H, t, Ls]
  const auto& o = ckpt.model->shapes().output;
  Tensor batch = reshape(permute(z, {0, 2, 3, 1, 4}), {o[0] * o[1], o[3], o[2]});
  Prediction out;
  out.latents = RayLatentField::from_latent_batch(batch, ckpt.view);
  out.latents.params = SimParams{params.values, space};
  out.latents.rae_id = ckpt.rae_id;
  out.extrapolated = !space.contains(params.values);
  return out;
}

Tensor decode_predicted(const Tensor& latents, RayAutoEncoder& rae) {
  if (latents.rank() != 5 || latents.dim(0) != 1) {
    throw std::invalid_argument("decode_predicted: expected [1,t,W,H,Ls], got " + shape_str(latents.shape()));
  }
  const int64_t t = latents.dim(1), W = latents.dim(2), H = latents.dim(3), Ls = latents.dim(4);
  return rae.decode(reshape(permute(latents, {0, 2, 3, 1, 4}), {W * H, t, Ls}));
}

ViewPrediction predict_view_data(const SimParams& params, const PredictorCheckpoint& pred, const RAECheckpoint& rae) {
  check_binding(pred, rae);
  auto p = predict_latent(params, pred);
  ViewPrediction out;
  out.data = decode_field(p.latents, rae);
  out.extrapolated = p.extrapolated;
  return out;
}

}  // namespace vdls
