#include "service.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>

#include "vdls/checkpoint.hpp"
#include "vdls/render.hpp"
#include "vdls/serialize.hpp"

namespace vdls {

using nlohmann::json;

namespace {

constexpr size_t kCacheEntries = 16;

Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw BadRequest(std::string(what) + " must be an array of three numbers");
  Vec3 v;
  for (size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw BadRequest(std::string(what) + " must be an array of three numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

Vec3 unit_or_throw(Vec3 v, const char* what) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0.0)) throw BadRequest(std::string(what) + " must be non-zero");
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

SessionState load_session(const PipelineConfig& config) {
  const RunLayout layout{config.run_dir};
  SessionState s;
  s.config = config;
  require_artifact(layout.manifest(), "gen-ensemble");
  s.manifest = load_manifest(layout.manifest());
  s.models = load_view_models(layout.models_dir());
  return s;
}

ExplorerService::ExplorerService(std::shared_ptr<const SessionState> session) : session_(std::move(session)) {}

json ExplorerService::meta() const {
  const auto& m = session_->manifest;
  json params = json::array();
  for (size_t i = 0; i < m.space.size(); ++i) {
    params.push_back({{"name", m.space.names[i]}, {"min", m.space.ranges[i].min}, {"max", m.space.ranges[i].max}});
  }
  json checkpoints = json::array();
  for (const auto& vm : session_->models) {
    checkpoints.push_back({{"axis", vm.rae.view.axis}, {"rae", vm.rae.id}, {"predictor", vm.predictor.id}});
  }
  const auto& v = session_->models.front().rae.view;
  return {{"parameters", params},
          {"volume_extents", m.extents},
          {"view_extents", {v.width, v.height}},
          {"normalization", m.normalization},
          {"checkpoints", checkpoints},
          {"default_tf", TransferFunction::high_opacity()},
          {"default_camera", Camera::orbit(unit_or_throw({1.0, 0.8, 0.6}, "view"), 2.2, 256, 256)}};
}

SimParams ExplorerService::parse_params(const json& body) const {
  const auto& space = session_->manifest.space;
  if (!body.is_object() || !body.contains("params")) throw BadRequest("body must be an object with a 'params' field");
  const auto& p = body.at("params");
  std::vector<double> values;
  if (p.is_array()) {
    for (const auto& x : p) {
      if (!x.is_number()) throw BadRequest("'params' entries must be numbers");
      values.push_back(x.get<double>());
    }
  } else if (p.is_object()) {
    for (const auto& name : space.names) {
      if (!p.contains(name) || !p.at(name).is_number()) throw BadRequest("'params' is missing numeric '" + name + "'");
      values.push_back(p.at(name).get<double>());
    }
  } else {
    throw BadRequest("'params' must be an array or an object");
  }
  if (values.size() != space.size()) {
    throw BadRequest("expected " + std::to_string(space.size()) + " parameters, got " + std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw BadRequest("parameters must be finite");
  }
  return {values, space};
}

json ExplorerService::provenance(const SimParams& params, bool extrapolated) const {
  json ids = json::array();
  for (const auto& vm : session_->models) ids.push_back({{"rae", vm.rae.id}, {"predictor", vm.predictor.id}});
  return {{"params", params.values}, {"out_of_range", extrapolated}, {"checkpoints", ids}};
}

std::shared_ptr<const FusedPrediction> ExplorerService::fused(const SimParams& params, const Vec3& v, std::string& handle) {
  handle = fnv1a_hex(json{{"p", params.values}, {"v", v}}.dump());
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(handle); it != cache_.end()) return it->second;
  }
  auto f = std::make_shared<const FusedPrediction>(predict_fused(params, session_->models, v, session_->manifest.extents));
  std::lock_guard lock(cache_mutex_);
  if (cache_.size() >= kCacheEntries) cache_.erase(cache_.begin());
  cache_.emplace(handle, f);
  return f;
}

json ExplorerService::infer(const json& body) {
  const auto params = parse_params(body);
  Vec3 v = unit_or_throw({1.0, 1.0, 1.0}, "viewpoint");
  if (body.contains("viewpoint")) v = unit_or_throw(parse_vec3(body.at("viewpoint"), "viewpoint"), "viewpoint");
  std::string handle;
  const auto f = fused(params, v, handle);
  const auto [lo, hi] = std::minmax_element(f->volume.values.begin(), f->volume.values.end());
  return {{"handle", handle},
          {"extents", f->volume.extents},
          {"viewpoint", v},
          {"min", *lo},
          {"max", *hi},
          {"provenance", provenance(params, f->extrapolated)}};
}

std::string ExplorerService::render(const json& body, json& prov) {
  const auto params = parse_params(body);
  Camera camera = Camera::orbit(unit_or_throw({1.0, 0.8, 0.6}, "view"), 2.2, 256, 256);
  TransferFunction tf = TransferFunction::high_opacity();
  try {
    if (body.contains("camera")) camera = body.at("camera").get<Camera>();
    if (body.contains("tf")) tf = body.at("tf").get<TransferFunction>();
  } catch (const std::exception& e) {
    throw BadRequest(e.what());
  }
  if (camera.width > 2048 || camera.height > 2048) throw BadRequest("image extents are limited to 2048");
  // The fusion viewpoint follows the camera.
  const Vec3 v = unit_or_throw({camera.eye[0] - camera.look_at[0], camera.eye[1] - camera.look_at[1],
                                camera.eye[2] - camera.look_at[2]},
                               "camera direction");
  std::string handle;
  const auto f = fused(params, v, handle);
  const auto image = render_volume(f->volume, camera, tf);
  prov = provenance(params, f->extrapolated);
  prov["handle"] = handle;
  const auto bytes = encode_png(image);
  return {bytes.begin(), bytes.end()};
}

json ExplorerService::sensitivity(const json& body) const {
  const auto params = parse_params(body);
  if (!body.contains("index") || !body.at("index").is_number_integer()) throw BadRequest("'index' must be an integer");
  const int index = body.at("index").get<int>();
  const int n = body.value("n", session_->config.sensitivity_samples);
  if (index < 0 || static_cast<size_t>(index) >= params.values.size()) throw BadRequest("'index' out of range");
  if (n < 2 || n > 256) throw BadRequest("'n' must lie in [2, 256]");
  const auto curve = vdls::sensitivity(params, static_cast<size_t>(index), n, session_->models);
  return {{"index", index},
          {"name", curve.name},
          {"values", curve.values},
          {"sensitivity", curve.sensitivity},
          {"csv", curve.to_csv()},
          {"provenance", provenance(params, !params.space.contains(params.values))}};
}

void ExplorerService::install(httplib::Server& server, const std::filesystem::path& web_dir) {
  static std::atomic<uint64_t> diagnostics{0};
  auto guarded = [](auto&& fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        json body;
        if (!req.body.empty()) {
          try {
            body = json::parse(req.body);
          } catch (const json::exception& e) {
            throw BadRequest(std::string("malformed JSON: ") + e.what());
          }
        }
        fn(body, req, res);
      } catch (const BadRequest& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      } catch (const std::exception& e) {
        const auto id = "diag-" + std::to_string(++diagnostics);
        std::cerr << id << ": " << e.what() << '\n';
        res.status = 500;
        res.set_content(json{{"error", e.what()}, {"diagnostic_id", id}}.dump(), "application/json");
      }
    };
  };
  server.Get("/meta", guarded([this](const json&, const httplib::Request&, httplib::Response& res) {
               res.set_content(meta().dump(), "application/json");
             }));
  server.Post("/infer", guarded([this](const json& body, const httplib::Request&, httplib::Response& res) {
                res.set_content(infer(body).dump(), "application/json");
              }));
  server.Post("/render", guarded([this](const json& body, const httplib::Request&, httplib::Response& res) {
                json prov;
                auto png = render(body, prov);
                res.set_header("X-VDLS-Provenance", prov.dump());
                res.set_content(std::move(png), "image/png");
              }));
  server.Post("/sensitivity", guarded([this](const json& body, const httplib::Request& req, httplib::Response& res) {
                auto out = sensitivity(body);
                if (req.get_header_value("Accept").find("text/csv") != std::string::npos) {
                  res.set_content(out.at("csv").get<std::string>(), "text/csv");
                } else {
                  res.set_content(out.dump(), "application/json");
                }
              }));
  if (!web_dir.empty() && std::filesystem::is_directory(web_dir)) server.set_mount_point("/", web_dir.string());
}

int serve(std::shared_ptr<const SessionState> session, const std::string& host, int port,
          const std::filesystem::path& web_dir, int threads) {
  httplib::Server server;
  const auto n = static_cast<size_t>(std::max(1, threads));
  server.new_task_queue = [n] { return new httplib::ThreadPool(n); };
  ExplorerService service(std::move(session));
  service.install(server, web_dir);
  std::cerr << "serving on http://" << host << ':' << port << '\n';
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ':' << port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace vdls
