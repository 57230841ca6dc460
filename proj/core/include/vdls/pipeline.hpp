#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vdls/compositor.hpp"
#include "vdls/ensemble.hpp"
#include "vdls/predictor.hpp"
#include "vdls/rae.hpp"
#include "vdls/render.hpp"

namespace vdls {

struct EvaluationConfig {
  int data_viewpoints = 110;   // sphere viewpoints averaged for data-level metrics
  int image_viewpoints = 6;    // rendered viewpoints for SSIM/EMD/difference images
  int image_size = 96;
  double camera_distance = 2.2;
  std::vector<int> idw_g{1, 2, 3, 4, 5};
  TransferFunction tf = TransferFunction::high_opacity();
};

struct PipelineConfig {
  std::filesystem::path run_dir = "run";
  EnsembleOptions ensemble;
  int64_t view_width = 64;   // image extents of all three views
  int64_t view_height = 64;
  RAEConfig rae;
  PredictorConfig predictor;
  EvaluationConfig evaluation;
  int sensitivity_samples = 5;
  uint64_t seed = 0;

  /// The three axis views; the ray length is the volume extent along each axis.
  std::vector<ViewConfig> views() const;
  /// Checks ranges and every divisibility constraint of the three views.
  void validate() const;

  /// Desk-scale defaults: 64^3, 20 members, k_r = 8, k_v = 4.
  static PipelineConfig desk();
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Unknown keys and invalid values are rejected with the offending field.
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Loads a config file on top of the desk defaults.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Hash of everything that determines the artifacts (run_dir excluded).
std::string config_hash(const PipelineConfig& c);

/// Fixed artifact layout under run_dir.
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path ensemble_dir() const { return root / "ensemble"; }
  std::filesystem::path manifest() const { return ensemble_dir() / "manifest.json"; }
  std::filesystem::path models_dir() const { return root / "models"; }
  std::filesystem::path rae(int axis) const { return models_dir() / ("rae_axis" + std::to_string(axis)); }
  std::filesystem::path predictor(int axis) const {
    return models_dir() / ("predictor_axis" + std::to_string(axis));
  }
  std::filesystem::path latent(int axis, const std::string& member) const {
    return root / "latents" / ("axis" + std::to_string(axis)) / member;
  }
  std::filesystem::path summary(const std::string& command) const { return root / (command + ".summary.json"); }
};

/// Writes `<command>.summary.json` with the config hash and `body`.
void write_summary(const RunLayout& layout, const std::string& command, const PipelineConfig& cfg, nlohmann::json body);

/// Throws unless `path` exists, naming the command that produces it.
void require_artifact(const std::filesystem::path& path, const std::string& producer);

// Pipeline stages; each returns its summary body.
/// Keeps freed tensor buffers on the heap instead of unmapping them (glibc).
/// Training reallocates the same large buffers every step; the page faults
/// cost about a third of the run time. Process-wide, so executables opt in.
void retain_freed_memory();

nlohmann::json run_gen_ensemble(const PipelineConfig& cfg);
/// Trains one RAE per axis (or only `axis` when >= 0) on the rae-train rays
/// and reports reconstruction PSNR on the rays of the test members.
nlohmann::json run_train_rae(const PipelineConfig& cfg, int axis = -1);
nlohmann::json run_encode_latents(const PipelineConfig& cfg);
nlohmann::json run_train_predictor(const PipelineConfig& cfg, int axis = -1);
/// Surrogate vs IDW/RBF on the test split. Refuses checkpoints produced by a
/// different config hash unless `force`.
nlohmann::json run_evaluate(const PipelineConfig& cfg, bool force = false);
/// Sensitivity curves of every parameter around `params` (range centers when
/// empty).
nlohmann::json run_sensitivity(const PipelineConfig& cfg, std::vector<double> params = {}, int index = -1);

/// Checks that every model artifact carries the config's hash.
void check_hashes(const PipelineConfig& cfg, const std::vector<ViewModel>& models, bool force);

}  // namespace vdls
