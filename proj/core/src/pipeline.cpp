#include "vdls/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "vdls/metrics.hpp"
#include "vdls/serialize.hpp"

namespace vdls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

uint64_t axis_seed(uint64_t base, uint64_t global, int axis) {
  return base + 1000003ULL * global + static_cast<uint64_t>(axis);
}

std::vector<float> normalized_view(const EnsembleManifest& m, size_t member, const ViewConfig& view) {
  return sample_view(normalize(m.load_member(member), m.normalization), view).values;
}

}  // namespace

// --- config --------------------------------------------------------------------------

std::vector<ViewConfig> PipelineConfig::views() const {
  std::vector<ViewConfig> out;
  for (int a = 0; a < 3; ++a) {
    ViewConfig v;
    v.axis = a;
    v.sign = 1;
    v.width = view_width;
    v.height = view_height;
    v.ray_length = ensemble.extents[static_cast<size_t>(a)];
    out.push_back(v);
  }
  return out;
}

void PipelineConfig::validate() const {
  if (ensemble.n_members < 3) throw std::invalid_argument("ensemble.members must be >= 3");
  for (auto e : ensemble.extents) {
    if (e < 1) throw std::invalid_argument("ensemble.extents must be positive");
  }
  ensemble.space.validate();
  const auto counts = split_counts(ensemble.n_members, ensemble.test_fraction, ensemble.rae_fraction);
  if (counts.rae_train < 1) throw std::invalid_argument("ensemble: the rae-train split is empty");
  rae.validate();
  predictor.validate();
  for (const auto& v : views()) {
    v.validate();
    if (v.ray_length % rae.reduction() != 0) {
      throw std::invalid_argument("rae.stages: ray length " + std::to_string(v.ray_length) + " along axis " +
                                  std::to_string(v.axis) + " is not divisible by " + std::to_string(rae.reduction()));
    }
    predictor_shapes(predictor, v.width, v.height, v.ray_length / rae.reduction(), rae.latent_channels);
  }
  if (evaluation.data_viewpoints < 1 || evaluation.image_viewpoints < 0) {
    throw std::invalid_argument("evaluation viewpoint counts must be positive");
  }
  if (evaluation.image_size < 11) throw std::invalid_argument("evaluation.image_size must be >= 11 (SSIM window)");
  for (int g : evaluation.idw_g) {
    if (g < 1) throw std::invalid_argument("evaluation.idw_g entries must be >= 1");
  }
  evaluation.tf.validate();
  if (sensitivity_samples < 2) throw std::invalid_argument("sensitivity_samples must be >= 2");
}

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.rae.channels = 8;
  c.rae.batch_size = 128;
  c.rae.learning_rate = 3e-3f;
  c.rae.final_lr_fraction = 0.02f;
  c.rae.epochs = 24;
  // Per-ray instance norm discards the ray's amplitude, which k_r=8 cannot
  // recover through the skips; about 7 dB held-out PSNR on the desk ensemble.
  c.rae.instance_norm = false;
  c.predictor.k_v = 4;
  c.predictor.image_stages = 3;
  c.predictor.depth_stages = 1;
  c.predictor.learning_rate = 3e-3f;
  c.predictor.final_lr_fraction = 0.02f;
  c.predictor.epochs = 100;
  // 16 members are easy to memorize; decay and the column shrink keep the net
  // from keying on parameters that do not move the field.
  c.predictor.weight_decay = 1.0f;
  c.predictor.input_group_lasso = 10.0f;
  return c;
}

void to_json(json& j, const PipelineConfig& c) {
  j = {{"run_dir", c.run_dir.string()},
       {"seed", c.seed},
       {"ensemble",
        {{"members", c.ensemble.n_members},
         {"seed", c.ensemble.seed},
         {"extents", c.ensemble.extents},
         {"test_fraction", c.ensemble.test_fraction},
         {"rae_fraction", c.ensemble.rae_fraction},
         {"space", c.ensemble.space}}},
       {"views", {{"width", c.view_width}, {"height", c.view_height}}},
       {"rae", c.rae},
       {"predictor", c.predictor},
       {"evaluation",
        {{"data_viewpoints", c.evaluation.data_viewpoints},
         {"image_viewpoints", c.evaluation.image_viewpoints},
         {"image_size", c.evaluation.image_size},
         {"camera_distance", c.evaluation.camera_distance},
         {"idw_g", c.evaluation.idw_g},
         {"tf", c.evaluation.tf}}},
       {"sensitivity_samples", c.sensitivity_samples}};
}

void from_json(const json& j, PipelineConfig& c) {
  reject_unknown_keys(j, {"run_dir", "seed", "ensemble", "views", "rae", "predictor", "evaluation", "sensitivity_samples"},
                      "config");
  auto field = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const json::exception& e) {
      throw std::runtime_error(std::string("config field '") + name + "': " + e.what());
    }
  };
  if (j.contains("run_dir")) field("run_dir", [&] { c.run_dir = j.at("run_dir").get<std::string>(); });
  field("seed", [&] { c.seed = j.value("seed", c.seed); });
  if (j.contains("ensemble")) {
    const auto& e = j.at("ensemble");
    reject_unknown_keys(e, {"members", "seed", "extents", "test_fraction", "rae_fraction", "space"}, "ensemble");
    field("ensemble.members", [&] { c.ensemble.n_members = e.value("members", c.ensemble.n_members); });
    field("ensemble.seed", [&] { c.ensemble.seed = e.value("seed", c.ensemble.seed); });
    field("ensemble.extents", [&] { c.ensemble.extents = e.value("extents", c.ensemble.extents); });
    field("ensemble.test_fraction", [&] { c.ensemble.test_fraction = e.value("test_fraction", c.ensemble.test_fraction); });
    field("ensemble.rae_fraction", [&] { c.ensemble.rae_fraction = e.value("rae_fraction", c.ensemble.rae_fraction); });
    if (e.contains("space")) field("ensemble.space", [&] { c.ensemble.space = e.at("space").get<ParameterSpace>(); });
  }
  if (j.contains("views")) {
    const auto& v = j.at("views");
    reject_unknown_keys(v, {"width", "height"}, "views");
    field("views.width", [&] { c.view_width = v.value("width", c.view_width); });
    field("views.height", [&] { c.view_height = v.value("height", c.view_height); });
  }
  if (j.contains("rae")) field("rae", [&] { from_json(j.at("rae"), c.rae); });
  if (j.contains("predictor")) field("predictor", [&] { from_json(j.at("predictor"), c.predictor); });
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    reject_unknown_keys(e, {"data_viewpoints", "image_viewpoints", "image_size", "camera_distance", "idw_g", "tf"},
                        "evaluation");
    auto& ev = c.evaluation;
    field("evaluation.data_viewpoints", [&] { ev.data_viewpoints = e.value("data_viewpoints", ev.data_viewpoints); });
    field("evaluation.image_viewpoints", [&] { ev.image_viewpoints = e.value("image_viewpoints", ev.image_viewpoints); });
    field("evaluation.image_size", [&] { ev.image_size = e.value("image_size", ev.image_size); });
    field("evaluation.camera_distance", [&] { ev.camera_distance = e.value("camera_distance", ev.camera_distance); });
    field("evaluation.idw_g", [&] { ev.idw_g = e.value("idw_g", ev.idw_g); });
    if (e.contains("tf")) field("evaluation.tf", [&] { ev.tf = e.at("tf").get<TransferFunction>(); });
  }
  field("sensitivity_samples", [&] { c.sensitivity_samples = j.value("sensitivity_samples", c.sensitivity_samples); });
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  PipelineConfig c = PipelineConfig::desk();
  from_json(read_json_file(path), c);
  c.validate();
  return c;
}

std::string config_hash(const PipelineConfig& c) {
  json j = c;
  j.erase("run_dir");
  j.erase("evaluation");
  j.erase("sensitivity_samples");
  return fnv1a_hex(j.dump());
}

void write_summary(const RunLayout& layout, const std::string& command, const PipelineConfig& cfg, json body) {
  body["command"] = command;
  body["config_hash"] = config_hash(cfg);
  write_json_file(layout.summary(command), body);
}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw std::runtime_error("missing " + path.string() + "; run `vdls " + producer + "` first");
  }
}

void check_hashes(const PipelineConfig& cfg, const std::vector<ViewModel>& models, bool force) {
  const auto h = config_hash(cfg);
  for (const auto& m : models) {
    for (const auto* recorded : {&m.rae.config_hash, &m.predictor.config_hash}) {
      if (*recorded != h) {
        const std::string msg = "checkpoint config hash " + *recorded + " differs from the current config (" + h + ")";
        if (!force) throw std::runtime_error(msg + "; pass --force to evaluate anyway");
        std::cerr << "warning: " << msg << '\n';
      }
    }
  }
}

// --- stages ----------------------------------------------------------------------------

void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

json run_gen_ensemble(const PipelineConfig& cfg) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = build_ensemble(cfg.ensemble, layout.ensemble_dir());
  json members = json::array();
  for (const auto& mem : m.members) members.push_back({{"name", mem.name}, {"split", to_string(mem.split)}});
  json body{{"members", members},
            {"normalization", m.normalization},
            {"manifest", layout.manifest().string()},
            {"seconds", seconds_since(t0)}};
  write_summary(layout, "gen-ensemble", cfg, body);
  return body;
}

json run_train_rae(const PipelineConfig& cfg, int axis) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  require_artifact(layout.manifest(), "gen-ensemble");
  const auto m = load_manifest(layout.manifest());
  const auto hash = config_hash(cfg);
  json body{{"axes", json::array()}};
  for (const auto& view : cfg.views()) {
    if (axis >= 0 && view.axis != axis) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<float> train;
    for (size_t i : m.indices(Split::RaeTrain)) {
      const auto v = normalized_view(m, i, view);
      train.insert(train.end(), v.begin(), v.end());
    }
    RAEConfig rc = cfg.rae;
    rc.seed = axis_seed(cfg.rae.seed, cfg.seed, view.axis);
    RAECheckpoint ckpt;
    ckpt.config = rc;
    ckpt.view = view;
    ckpt.normalization = m.normalization;
    ckpt.config_hash = hash;
    ckpt.model = std::make_shared<RayAutoEncoder>(rc, view.ray_length);
    const int64_t L = view.ray_length;
    const int64_t n_rays = static_cast<int64_t>(train.size()) / L;
    std::cerr << "train-rae: axis " << view.axis << ", " << n_rays << " rays\n";
    Tensor rays({n_rays, 1, L}, std::move(train));
    auto report = train_rae(*ckpt.model, rays, 0.0f, 0.999f, 1);
    ckpt.loss_curve = report.loss_curve;
    save_rae(layout.rae(view.axis), ckpt);
    ckpt = load_rae(layout.rae(view.axis));

    // Held-out reconstruction quality on the test members' rays.
    double se = 0.0;
    size_t count = 0;
    for (size_t i : m.indices(Split::Test)) {
      auto vdv = sample_view(normalize(m.load_member(i), m.normalization), view);
      const auto rec = decode_field(encode_field(vdv, ckpt), ckpt);
      for (size_t k = 0; k < vdv.values.size(); ++k) {
        const double d = static_cast<double>(rec.values[k]) - vdv.values[k];
        se += d * d;
      }
      count += vdv.values.size();
    }
    const double mse = se / static_cast<double>(std::max<size_t>(1, count));
    const double heldout = mse > 0.0 ? 10.0 * std::log10(4.0 / mse) : std::numeric_limits<double>::infinity();
    std::cerr << "train-rae: axis " << view.axis << " held-out PSNR " << heldout << " dB\n";
    body["axes"].push_back({{"axis", view.axis},
                            {"id", ckpt.id},
                            {"loss_curve", report.loss_curve},
                            {"diverged", report.diverged},
                            {"message", report.message},
                            {"heldout_psnr", heldout},
                            {"seconds", seconds_since(t0)}});
  }
  write_summary(layout, axis >= 0 ? "train-rae-axis" + std::to_string(axis) : "train-rae", cfg, body);
  return body;
}

json run_encode_latents(const PipelineConfig& cfg) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  require_artifact(layout.manifest(), "gen-ensemble");
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = load_manifest(layout.manifest());
  json body{{"fields", 0}};
  int fields = 0;
  for (const auto& view : cfg.views()) {
    require_artifact(artifact_path(layout.rae(view.axis), ".json"), "train-rae");
    const auto ckpt = load_rae(layout.rae(view.axis));
    for (size_t i = 0; i < m.members.size(); ++i) {
      auto vdv = sample_view(normalize(m.load_member(i), m.normalization), view);
      save_latent_field(layout.latent(view.axis, m.members[i].name), encode_field(vdv, ckpt));
      ++fields;
    }
  }
  body["fields"] = fields;
  body["seconds"] = seconds_since(t0);
  write_summary(layout, "encode-latents", cfg, body);
  return body;
}

json run_train_predictor(const PipelineConfig& cfg, int axis) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  require_artifact(layout.manifest(), "gen-ensemble");
  const auto m = load_manifest(layout.manifest());
  const auto hash = config_hash(cfg);
  json body{{"axes", json::array()}};
  for (const auto& view : cfg.views()) {
    if (axis >= 0 && view.axis != axis) continue;
    const auto t0 = std::chrono::steady_clock::now();
    require_artifact(artifact_path(layout.rae(view.axis), ".json"), "train-rae");
    const auto rae = load_rae(layout.rae(view.axis));
    std::vector<LatentSample> samples;
    for (size_t i : m.training_indices()) {
      const auto path = layout.latent(view.axis, m.members[i].name);
      require_artifact(artifact_path(path, ".json"), "encode-latents");
      auto field = load_latent_field(path);
      if (field.rae_id != rae.id) {
        throw std::runtime_error(path.string() + " was encoded by another RAE; rerun `vdls encode-latents`");
      }
      samples.push_back({m.members[i].params, std::move(field)});
    }
    PredictorConfig pc = cfg.predictor;
    pc.seed = axis_seed(cfg.predictor.seed, cfg.seed, view.axis);
    PredictorCheckpoint ckpt;
    ckpt.config = pc;
    ckpt.view = view;
    ckpt.normalization = m.normalization;
    ckpt.rae_id = rae.id;
    ckpt.config_hash = hash;
    ckpt.model = std::make_shared<VDLPredictor>(pc, m.space, view.width, view.height, rae.model->latent_length(),
                                                rae.config.latent_channels);
    std::cerr << "train-predictor: axis " << view.axis << ", " << samples.size() << " members\n";
    auto report = train_predictor(*ckpt.model, samples, pc.beta1, 0.999f, 10);
    ckpt.loss_curve = report.loss_curve;
    save_predictor(layout.predictor(view.axis), ckpt);

    // Held-out latent L1 on the test members, when their fields exist.
    double test_l1 = 0.0;
    int n_test = 0;
    for (size_t i : m.indices(Split::Test)) {
      const auto path = layout.latent(view.axis, m.members[i].name);
      if (!fs::exists(artifact_path(path, ".json"))) continue;
      const auto field = load_latent_field(path);
      const auto pred = predict_latent(SimParams{m.members[i].params, m.space}, ckpt).latents;
      double s = 0.0;
      for (size_t k = 0; k < field.values.size(); ++k) s += std::abs(pred.values[k] - field.values[k]);
      test_l1 += s / static_cast<double>(field.values.size());
      ++n_test;
    }
    body["axes"].push_back({{"axis", view.axis},
                            {"loss_curve", report.loss_curve},
                            {"diverged", report.diverged},
                            {"message", report.message},
                            {"test_latent_l1", n_test ? json(test_l1 / n_test) : json(nullptr)},
                            {"input_weight_norms", ckpt.model->input_weight_norms()},
                            {"seconds", seconds_since(t0)}});
  }
  write_summary(layout, axis >= 0 ? "train-predictor-axis" + std::to_string(axis) : "train-predictor", cfg, body);
  return body;
}

namespace {

struct ImageScores {
  double ssim = 0.0, emd = 0.0, flagged = 0.0;
};

json scores_json(const Psnr& p, double md, const ImageScores& im, int images) {
  json j{{"psnr", p}, {"md", md}};
  if (images > 0) {
    j["ssim"] = im.ssim;
    j["emd"] = im.emd;
    j["flagged_fraction"] = im.flagged;
  }
  return j;
}

}  // namespace

json run_evaluate(const PipelineConfig& cfg, bool force) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  require_artifact(layout.manifest(), "gen-ensemble");
  for (int a = 0; a < 3; ++a) {
    require_artifact(artifact_path(layout.rae(a), ".json"), "train-rae");
    require_artifact(artifact_path(layout.predictor(a), ".json"), "train-predictor");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = load_manifest(layout.manifest());
  const auto models = load_view_models(layout.models_dir());
  check_hashes(cfg, models, force);
  const auto& ev = cfg.evaluation;

  std::vector<Volume> train_volumes;
  BaselineSet set;
  set.space = m.space;
  for (size_t i : m.training_indices()) {
    train_volumes.push_back(m.load_member(i));
    set.params.push_back(m.members[i].params);
  }
  for (const auto& v : train_volumes) set.volumes.push_back(&v);
  for (int g : ev.idw_g) {
    if (static_cast<size_t>(g) > set.volumes.size()) throw std::invalid_argument("evaluation.idw_g exceeds training members");
  }
  const RbfBaseline rbf(set);

  const auto data_views = sphere_viewpoints(ev.data_viewpoints);
  const auto image_views = sphere_viewpoints(std::max(1, ev.image_viewpoints));
  auto camera_for = [&](const Vec3& v) {
    return Camera::orbit(v, ev.camera_distance, ev.image_size, ev.image_size);
  };
  std::vector<ImageRGB> truth_images;

  auto image_scores = [&](const Volume& vol, const std::vector<ImageRGB>& truth) {
    ImageScores s;
    if (ev.image_viewpoints == 0) return s;
    for (int k = 0; k < ev.image_viewpoints; ++k) {
      const auto img = render_volume(vol, camera_for(image_views[static_cast<size_t>(k)]), ev.tf);
      s.ssim += ssim(img, truth[static_cast<size_t>(k)]);
      s.emd += emd_color_hist(img, truth[static_cast<size_t>(k)]);
      s.flagged += difference_image(truth[static_cast<size_t>(k)], img).flagged_fraction;
    }
    s.ssim /= ev.image_viewpoints;
    s.emd /= ev.image_viewpoints;
    s.flagged /= ev.image_viewpoints;
    return s;
  };

  json members = json::array();
  int wins = 0;
  const size_t g3 = 3;
  for (size_t i : m.indices(Split::Test)) {
    const auto& mem = m.members[i];
    const Volume truth = m.load_member(i);
    const SimParams params{mem.params, m.space};
    truth_images.clear();
    for (int k = 0; k < ev.image_viewpoints; ++k) {
      truth_images.push_back(render_volume(truth, camera_for(image_views[static_cast<size_t>(k)]), ev.tf));
    }

    // Surrogate: data metrics averaged over sphere viewpoints, image metrics
    // with the fusion viewpoint following the camera.
    std::vector<ViewDependentVolume> views;
    bool extrapolated = false;
    for (const auto& vm : models) {
      auto p = predict_view_data(params, vm.predictor, vm.rae);
      extrapolated = extrapolated || p.extrapolated;
      views.push_back(std::move(p.data));
    }
    std::vector<const ViewDependentVolume*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    double psnr_sum = 0.0, md_sum = 0.0, psnr_min = std::numeric_limits<double>::infinity();
    for (const auto& v : data_views) {
      const auto fused = denormalize(fuse_to_grid(ptrs, v, m.extents), m.normalization);
      const auto p = psnr(fused, truth, m.normalization);
      psnr_sum += p.db;
      psnr_min = std::min(psnr_min, p.db);
      md_sum += max_difference(fused, truth, m.normalization);
    }
    ImageScores sur;
    for (int k = 0; k < ev.image_viewpoints; ++k) {
      const auto& v = image_views[static_cast<size_t>(k)];
      const auto fused = denormalize(fuse_to_grid(ptrs, v, m.extents), m.normalization);
      const auto img = render_volume(fused, camera_for(v), ev.tf);
      const auto& ref = truth_images[static_cast<size_t>(k)];
      sur.ssim += ssim(img, ref) / ev.image_viewpoints;
      sur.emd += emd_color_hist(img, ref) / ev.image_viewpoints;
      const auto diff = difference_image(ref, img);
      sur.flagged += diff.flagged_fraction / ev.image_viewpoints;
      if (k == 0) {
        write_png(layout.root / "evaluation" / (mem.name + "_truth.png"), ref);
        write_png(layout.root / "evaluation" / (mem.name + "_surrogate.png"), img);
        write_png(layout.root / "evaluation" / (mem.name + "_difference.png"), diff.image);
      }
    }
    const Psnr sur_psnr{psnr_sum / static_cast<double>(data_views.size()), false};
    json entry{{"name", mem.name},
               {"params", mem.params},
               {"extrapolated", extrapolated},
               {"surrogate", scores_json(sur_psnr, md_sum / static_cast<double>(data_views.size()), sur,
                                         ev.image_viewpoints)}};
    entry["surrogate"]["psnr_min_viewpoint"] = psnr_min;

    json idw = json::object();
    double idw3 = std::numeric_limits<double>::quiet_NaN();
    for (int g : ev.idw_g) {
      const auto vol = idw_baseline(mem.params, set, g);
      const auto p = psnr(vol, truth, m.normalization);
      if (static_cast<size_t>(g) == g3) idw3 = p.db;
      idw["g" + std::to_string(g)] =
          scores_json(p, max_difference(vol, truth, m.normalization), image_scores(vol, truth_images), ev.image_viewpoints);
    }
    if (std::isnan(idw3)) idw3 = psnr(idw_baseline(mem.params, set, 3), truth, m.normalization).db;
    entry["idw"] = idw;
    {
      const auto vol = rbf.predict(mem.params);
      entry["rbf"] = scores_json(psnr(vol, truth, m.normalization), max_difference(vol, truth, m.normalization),
                                 image_scores(vol, truth_images), ev.image_viewpoints);
      entry["rbf"]["width"] = rbf.width();
    }
    const bool win = sur_psnr.db > idw3;
    wins += win ? 1 : 0;
    entry["beats_idw3"] = win;
    std::cerr << "evaluate: " << mem.name << " surrogate " << sur_psnr.db << " dB, IDW(g=3) " << idw3 << " dB\n";
    members.push_back(entry);
  }
  json body{{"members", members},
            {"wins_vs_idw3", wins},
            {"test_members", members.size()},
            {"data_viewpoints", ev.data_viewpoints},
            {"image_viewpoints", ev.image_viewpoints},
            {"seconds", seconds_since(t0)}};
  write_json_file(layout.root / "evaluation" / "evaluation.json", body);
  write_summary(layout, "evaluate", cfg, body);
  return body;
}

json run_sensitivity(const PipelineConfig& cfg, std::vector<double> params, int index) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  for (int a = 0; a < 3; ++a) {
    require_artifact(artifact_path(layout.rae(a), ".json"), "train-rae");
    require_artifact(artifact_path(layout.predictor(a), ".json"), "train-predictor");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto models = load_view_models(layout.models_dir());
  const auto& space = models[0].predictor.model->space();
  if (params.empty()) {
    for (const auto& r : space.ranges) params.push_back(0.5 * (r.min + r.max));
  }
  const SimParams base{params, space};
  json curves = json::array();
  double min_mean = std::numeric_limits<double>::infinity();
  int argmin = -1;
  for (size_t k = 0; k < space.size(); ++k) {
    if (index >= 0 && static_cast<size_t>(index) != k) continue;
    const auto curve = sensitivity(base, k, cfg.sensitivity_samples, models);
    const auto path = layout.root / "sensitivity" / ("param_" + curve.name + ".csv");
    fs::create_directories(path.parent_path());
    std::ofstream(path) << curve.to_csv();
    double mean = 0.0;
    for (double s : curve.sensitivity) mean += s;
    mean /= static_cast<double>(curve.sensitivity.size());
    if (mean < min_mean) {
      min_mean = mean;
      argmin = static_cast<int>(k);
    }
    curves.push_back({{"index", k},
                      {"name", curve.name},
                      {"values", curve.values},
                      {"sensitivity", curve.sensitivity},
                      {"mean", mean},
                      {"csv", path.string()}});
  }
  json body{{"params", params}, {"curves", curves}, {"least_sensitive", argmin}, {"seconds", seconds_since(t0)}};
  write_summary(layout, "sensitivity", cfg, body);
  return body;
}

}  // namespace vdls
