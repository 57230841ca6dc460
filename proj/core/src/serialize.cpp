#include "vdls/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace vdls {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void to_json(nlohmann::json& j, const ParamRange& r) { j = nlohmann::json::array({r.min, r.max}); }

void from_json(const nlohmann::json& j, ParamRange& r) {
  r.min = j.at(0).get<double>();
  r.max = j.at(1).get<double>();
}

void to_json(nlohmann::json& j, const ParameterSpace& s) { j = {{"names", s.names}, {"ranges", s.ranges}}; }

void from_json(const nlohmann::json& j, ParameterSpace& s) {
  s.names = j.at("names").get<std::vector<std::string>>();
  s.ranges = j.at("ranges").get<std::vector<ParamRange>>();
}

void to_json(nlohmann::json& j, const SimParams& p) {
  j = {{"names", p.space.names}, {"values", p.values}, {"ranges", p.space.ranges}};
}

void from_json(const nlohmann::json& j, SimParams& p) {
  p.space.names = j.at("names").get<std::vector<std::string>>();
  p.space.ranges = j.at("ranges").get<std::vector<ParamRange>>();
  p.values = j.at("values").get<std::vector<double>>();
}

void to_json(nlohmann::json& j, const Normalization& n) { j = {{"min", n.min}, {"max", n.max}}; }

void from_json(const nlohmann::json& j, Normalization& n) {
  n.min = j.at("min").get<double>();
  n.max = j.at("max").get<double>();
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw std::runtime_error(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::runtime_error(std::string(where) + ": unknown key '" + key + "'");
  }
}

void to_json(nlohmann::json& j, const ViewConfig& v) {
  j = {{"axis", v.axis}, {"sign", v.sign}, {"width", v.width}, {"height", v.height}, {"ray_length", v.ray_length}};
}

void from_json(const nlohmann::json& j, ViewConfig& v) {
  reject_unknown_keys(j, {"axis", "sign", "width", "height", "ray_length"}, "view");
  v.axis = j.value("axis", v.axis);
  v.sign = j.value("sign", v.sign);
  v.width = j.value("width", v.width);
  v.height = j.value("height", v.height);
  v.ray_length = j.value("ray_length", v.ray_length);
}

void to_json(nlohmann::json& j, const RAEConfig& c) {
  j = {{"channels", c.channels},
       {"latent_channels", c.latent_channels},
       {"stages", c.stages},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"final_lr_fraction", c.final_lr_fraction},
       {"histogram_bins", c.histogram_bins},
       {"histogram_eps", c.histogram_eps},
       {"global_histogram", c.global_histogram},
       {"instance_norm", c.instance_norm},
       {"spectral_norm", c.spectral_norm},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RAEConfig& c) {
  reject_unknown_keys(j,
                      {"channels", "latent_channels", "stages", "batch_size", "learning_rate", "epochs", "final_lr_fraction",
                       "histogram_bins", "histogram_eps", "global_histogram", "instance_norm", "spectral_norm", "seed"},
                      "rae");
  c.channels = j.value("channels", c.channels);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.stages = j.value("stages", c.stages);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  c.histogram_eps = j.value("histogram_eps", c.histogram_eps);
  c.global_histogram = j.value("global_histogram", c.global_histogram);
  c.instance_norm = j.value("instance_norm", c.instance_norm);
  c.spectral_norm = j.value("spectral_norm", c.spectral_norm);
  c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const PredictorConfig& c) {
  j = {{"k_v", c.k_v},
       {"image_stages", c.image_stages},
       {"depth_stages", c.depth_stages},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"final_lr_fraction", c.final_lr_fraction},
       {"beta1", c.beta1},
       {"weight_decay", c.weight_decay},
       {"input_noise", c.input_noise},
       {"input_group_lasso", c.input_group_lasso},
       {"spectral_norm", c.spectral_norm},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PredictorConfig& c) {
  reject_unknown_keys(j,
                      {"k_v", "image_stages", "depth_stages", "learning_rate", "epochs", "final_lr_fraction", "beta1",
                       "weight_decay", "input_noise", "input_group_lasso", "spectral_norm", "seed"},
                      "predictor");
  c.k_v = j.value("k_v", c.k_v);
  c.image_stages = j.value("image_stages", c.image_stages);
  c.depth_stages = j.value("depth_stages", c.depth_stages);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
  c.beta1 = j.value("beta1", c.beta1);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.input_noise = j.value("input_noise", c.input_noise);
  c.input_group_lasso = j.value("input_group_lasso", c.input_group_lasso);
  c.spectral_norm = j.value("spectral_norm", c.spectral_norm);
  c.seed = j.value("seed", c.seed);
}

}  // namespace vdls
