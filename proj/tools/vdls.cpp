// vdls: pipeline driver and exploration server.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <thread>

#include "service.hpp"
#include "vdls/metrics.hpp"
#include "vdls/pipeline.hpp"
#include "vdls/render.hpp"
#include "vdls/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vdls;

namespace {

struct Globals {
  std::string config_path;
  std::string run_dir;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig::desk() : load_pipeline_config(g.config_path);
  if (!g.run_dir.empty()) cfg.run_dir = g.run_dir;
  // Relative run directories live under VDLS_RUN_ROOT when it is set.
  if (const char* root = std::getenv("VDLS_RUN_ROOT"); root && *root && cfg.run_dir.is_relative()) {
    cfg.run_dir = fs::path(root) / cfg.run_dir;
  }
  cfg.validate();
  return cfg;
}

SimParams parse_params(const std::vector<double>& values, const ParameterSpace& space) {
  if (values.size() != space.size()) {
    throw std::invalid_argument("--params needs " + std::to_string(space.size()) + " values");
  }
  SimParams p{values, space};
  if (!space.contains(values)) std::cerr << "warning: parameters lie outside the training ranges\n";
  return p;
}

Vec3 to_unit(const std::vector<double>& v) {
  if (v.size() != 3) throw std::invalid_argument("viewpoint needs three components");
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0)) throw std::invalid_argument("viewpoint must be non-zero");
  return {v[0] / n, v[1] / n, v[2] / n};
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  vdls::retain_freed_memory();
  CLI::App app{"View-dependent latent surrogate: train, infer, render, evaluate and serve"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "pipeline config JSON (defaults: desk scale)")->check(CLI::ExistingFile);
  app.add_option("-r,--run-dir", g.run_dir, "run directory (relative paths resolve under $VDLS_RUN_ROOT)");

  auto* gen = app.add_subcommand("gen-ensemble", "simulate the synthetic ensemble and assign splits");

  int axis = -1;
  auto* train_rae = app.add_subcommand("train-rae", "train one ray autoencoder per view axis");
  train_rae->add_option("--axis", axis, "train only this axis")->check(CLI::Range(0, 2));

  auto* encode = app.add_subcommand("encode-latents", "encode every member's view data with the trained RAEs");

  auto* train_pred = app.add_subcommand("train-predictor", "train one latent predictor per view axis");
  train_pred->add_option("--axis", axis, "train only this axis")->check(CLI::Range(0, 2));

  std::vector<double> params, viewpoint{1.0, 1.0, 1.0};
  std::string out;
  auto* infer = app.add_subcommand("infer", "predict and fuse a data-space volume");
  infer->add_option("-p,--params", params, "parameter values")->required()->delimiter(',');
  infer->add_option("--viewpoint", viewpoint, "fusion viewpoint x,y,z")->delimiter(',');
  infer->add_option("-o,--out", out, "output volume stem")->required();

  std::string camera_path, tf_path;
  int member = -1;
  auto* render = app.add_subcommand("render", "render a predicted (or ground-truth) volume to PNG");
  render->add_option("-p,--params", params, "parameter values")->delimiter(',');
  render->add_option("--member", member, "render ensemble member instead of a prediction");
  render->add_option("--camera", camera_path, "camera JSON")->check(CLI::ExistingFile);
  render->add_option("--tf", tf_path, "transfer function JSON")->check(CLI::ExistingFile);
  render->add_option("-o,--out", out, "output PNG")->required();

  bool force = false;
  auto* evaluate = app.add_subcommand("evaluate", "compare surrogate, IDW and RBF on the test split");
  evaluate->add_flag("--force", force, "accept checkpoints produced by a different config");

  int index = -1, samples = 0;
  auto* sens = app.add_subcommand("sensitivity", "parameter sensitivity curves");
  sens->add_option("-p,--params", params, "base parameter values (default: range centers)")->delimiter(',');
  sens->add_option("--index", index, "only this parameter");
  sens->add_option("-n,--samples", samples, "samples per curve")->check(CLI::Range(2, 1000));

  std::string host = "127.0.0.1", web_dir;
  int port = 8080, threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* serve_cmd = app.add_subcommand("serve", "HTTP exploration service");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--web", web_dir, "static UI directory");
  serve_cmd->add_option("--threads", threads, "request worker count")->check(CLI::Range(1, 256));

  auto* all = app.add_subcommand("run-all", "gen-ensemble, train-rae, encode-latents, train-predictor, evaluate");

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig cfg = resolve_config(g);
    const RunLayout layout{cfg.run_dir};
    if (*gen) print(run_gen_ensemble(cfg));
    else if (*train_rae) print(run_train_rae(cfg, axis));
    else if (*encode) print(run_encode_latents(cfg));
    else if (*train_pred) print(run_train_predictor(cfg, axis));
    else if (*infer) {
      const auto models = load_view_models(layout.models_dir());
      const auto m = load_manifest(layout.manifest());
      const auto p = parse_params(params, m.space);
      const auto f = predict_fused(p, models, to_unit(viewpoint), m.extents);
      save_volume(out, f.volume);
      json body{{"out", out}, {"params", params}, {"extrapolated", f.extrapolated}};
      write_summary(layout, "infer", cfg, body);
      print(body);
    } else if (*render) {
      require_artifact(layout.manifest(), "gen-ensemble");
      const auto m = load_manifest(layout.manifest());
      Camera camera = Camera::orbit(to_unit({1.0, 0.8, 0.6}), 2.2, 256, 256);
      TransferFunction tf = cfg.evaluation.tf;
      if (!camera_path.empty()) camera = read_json_file(camera_path).get<Camera>();
      if (!tf_path.empty()) tf = read_json_file(tf_path).get<TransferFunction>();
      Volume volume;
      json body{{"out", out}};
      if (member >= 0) {
        if (static_cast<size_t>(member) >= m.members.size()) throw std::invalid_argument("--member out of range");
        volume = m.load_member(static_cast<size_t>(member));
        body["member"] = m.members[static_cast<size_t>(member)].name;
      } else {
        if (params.empty()) throw std::invalid_argument("render needs --params or --member");
        const auto models = load_view_models(layout.models_dir());
        const auto p = parse_params(params, m.space);
        const Vec3 v = to_unit({camera.eye[0] - camera.look_at[0], camera.eye[1] - camera.look_at[1],
                                camera.eye[2] - camera.look_at[2]});
        auto f = predict_fused(p, models, v, m.extents);
        volume = std::move(f.volume);
        body["params"] = params;
        body["extrapolated"] = f.extrapolated;
      }
      write_png(out, render_volume(volume, camera, tf));
      write_summary(layout, "render", cfg, body);
      print(body);
    } else if (*evaluate) {
      print(run_evaluate(cfg, force));
    } else if (*sens) {
      PipelineConfig c = cfg;
      if (samples > 0) c.sensitivity_samples = samples;
      print(run_sensitivity(c, params, index));
    } else if (*serve_cmd) {
      auto session = std::make_shared<const SessionState>(load_session(cfg));
      return serve(session, host, port, web_dir, threads);
    } else if (*all) {
      run_gen_ensemble(cfg);
      run_train_rae(cfg);
      run_encode_latents(cfg);
      run_train_predictor(cfg);
      print(run_evaluate(cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
