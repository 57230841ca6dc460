#pragma once

// A complete, quickly trained run on a 16^3 ensemble, shared by the tests
// that need checkpoints on disk.

#include <filesystem>
#include <string>

#include "tmpdir.hpp"
#include "vdls/pipeline.hpp"

#ifndef VDLS_TEST_DATA
#error "VDLS_TEST_DATA must point at tests/data"
#endif

namespace vdls::testing {

inline PipelineConfig tiny_config(const std::filesystem::path& run_dir) {
  auto cfg = load_pipeline_config(std::filesystem::path(VDLS_TEST_DATA) / "tiny.json");
  cfg.run_dir = run_dir;
  return cfg;
}

/// Trains the tiny run into a fresh directory named `name`.
inline PipelineConfig tiny_run(const std::string& name) {
  auto cfg = tiny_config(fresh_dir(name));
  run_gen_ensemble(cfg);
  run_train_rae(cfg);
  run_encode_latents(cfg);
  run_train_predictor(cfg);
  return cfg;
}

}  // namespace vdls::testing
