#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "vdls/compositor.hpp"
#include "vdls/pipeline.hpp"

namespace httplib {
class Server;
}

namespace vdls {

/// Everything the service reads; immutable after load.
struct SessionState {
  PipelineConfig config;
  EnsembleManifest manifest;
  std::vector<ViewModel> models;
};

/// Loads the manifest and the three checkpoint pairs of a run. Throws with the
/// missing file's path when something is absent.
SessionState load_session(const PipelineConfig& config);

/// Request handlers, usable without a socket.
class ExplorerService {
 public:
  explicit ExplorerService(std::shared_ptr<const SessionState> session);

  nlohmann::json meta() const;
  /// {params, viewpoint?} -> handle of a cached fused volume plus provenance.
  nlohmann::json infer(const nlohmann::json& body);
  /// {params, camera?, tf?} -> PNG bytes; `provenance` receives the metadata.
  std::string render(const nlohmann::json& body, nlohmann::json& provenance);
  /// {params, index, n} -> curve.
  nlohmann::json sensitivity(const nlohmann::json& body) const;

  /// Registers the HTTP routes (and a static mount for `web_dir` if it exists).
  void install(httplib::Server& server, const std::filesystem::path& web_dir = {});

 private:
  SimParams parse_params(const nlohmann::json& body) const;
  std::shared_ptr<const FusedPrediction> fused(const SimParams& params, const Vec3& v, std::string& handle);
  nlohmann::json provenance(const SimParams& params, bool extrapolated) const;

  std::shared_ptr<const SessionState> session_;
  std::mutex cache_mutex_;
  std::map<std::string, std::shared_ptr<const FusedPrediction>> cache_;
};

/// Error raised for malformed request bodies (mapped to HTTP 400).
struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runs the blocking HTTP server; the worker pool is bounded by `threads`.
int serve(std::shared_ptr<const SessionState> session, const std::string& host, int port,
          const std::filesystem::path& web_dir, int threads);

}  // namespace vdls
