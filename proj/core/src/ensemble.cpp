#include "vdls/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "vdls/serialize.hpp"

namespace vdls {

namespace fs = std::filesystem;

void ParameterSpace::validate() const {
  if (names.empty()) throw std::invalid_argument("parameter space must have at least one dimension");
  if (names.size() != ranges.size()) throw std::invalid_argument("parameter names and ranges differ in length");
  for (size_t i = 0; i < ranges.size(); ++i) {
    if (!(ranges[i].min < ranges[i].max)) {
      throw std::invalid_argument("parameter '" + names[i] + "' range must satisfy min < max");
    }
  }
}

bool ParameterSpace::contains(const std::vector<double>& values) const {
  if (values.size() != ranges.size()) return false;
  for (size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= ranges[i].min && values[i] <= ranges[i].max)) return false;
  }
  return true;
}

std::vector<double> ParameterSpace::to_unit(const std::vector<double>& values) const {
  if (values.size() != ranges.size()) throw std::invalid_argument("parameter vector has wrong dimension");
  std::vector<double> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = (values[i] - ranges[i].min) / (ranges[i].max - ranges[i].min);
  }
  return out;
}

ParameterSpace ParameterSpace::synthetic_default() {
  return ParameterSpace{{"amplitude", "separation", "width", "null"},
                        {{0.5, 2.0}, {-1.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}};
}

void SimParams::validate() const {
  space.validate();
  if (values.size() != space.size()) {
    throw std::invalid_argument("expected " + std::to_string(space.size()) + " parameter values, got " +
                                std::to_string(values.size()));
  }
  for (size_t i = 0; i < values.size(); ++i) {
    const auto& r = space.ranges[i];
    if (!(values[i] >= r.min && values[i] <= r.max)) {
      throw std::invalid_argument("parameter '" + space.names[i] + "' = " + std::to_string(values[i]) +
                                  " outside [" + std::to_string(r.min) + ", " + std::to_string(r.max) + "]");
    }
  }
}

void Volume::validate() const {
  for (auto e : extents) {
    if (e <= 0) throw std::invalid_argument("volume extents must be positive");
  }
  if (static_cast<int64_t>(values.size()) != size()) throw std::invalid_argument("volume value count mismatch");
  if (!(value_range.min <= value_range.max)) throw std::invalid_argument("volume value range has min > max");
  for (float v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("volume contains non-finite values");
  }
}

// --- synthetic field ---------------------------------------------------------

std::array<double, 3> amplitude_blob_center(double separation) { return {0.5 + 0.25 * separation, 0.5, 0.5}; }
std::array<double, 3> width_blob_center(double separation) { return {0.5 - 0.25 * separation, 0.35, 0.6}; }

FieldTerms synthetic_field_terms(const std::array<double, 3>& x, const std::vector<double>& p) {
  if (p.size() < 3) throw std::invalid_argument("synthetic field needs at least 3 parameters");
  auto dist2 = [&x](const std::array<double, 3>& c) {
    double d = 0.0;
    for (int i = 0; i < 3; ++i) d += (x[i] - c[i]) * (x[i] - c[i]);
    return d;
  };
  constexpr double kPi = std::numbers::pi;
  const double amp_sigma = 0.15;
  const double width_sigma = 0.1 * (1.0 + p[2]);
  FieldTerms t;
  t.amplitude_blob = p[0] * std::exp(-dist2(amplitude_blob_center(p[1])) / (2.0 * amp_sigma * amp_sigma));
  t.width_blob = 0.5 * std::exp(-dist2(width_blob_center(p[1])) / (2.0 * width_sigma * width_sigma));
  t.ripple = 0.05 * std::sin(8.0 * kPi * x[0]) * std::sin(8.0 * kPi * x[1]);
  return t;
}

Volume simulate(const SimParams& params, const Extents3& extents) {
  params.validate();
  if (params.values.size() < 3) throw std::invalid_argument("simulate needs at least 3 parameters");
  Volume v;
  v.extents = extents;
  v.values.resize(static_cast<size_t>(v.size()));
  for (auto e : extents) {
    if (e <= 0) throw std::invalid_argument("volume extents must be positive");
  }
  size_t idx = 0;
  float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
  for (int64_t i = 0; i < extents[0]; ++i) {
    for (int64_t j = 0; j < extents[1]; ++j) {
      for (int64_t k = 0; k < extents[2]; ++k) {
        const std::array<double, 3> x{(i + 0.5) / extents[0], (j + 0.5) / extents[1], (k + 0.5) / extents[2]};
        const float f = static_cast<float>(synthetic_field_terms(x, params.values).total());
        v.values[idx++] = f;
        lo = std::min(lo, f);
        hi = std::max(hi, f);
      }
    }
  }
  v.value_range = {lo, hi};
  v.params = params;
  return v;
}

// --- normalization -------------------------------------------------------------

namespace {
void check_norm(const Normalization& n) {
  if (!(n.max > n.min)) throw std::invalid_argument("degenerate dataset: normalization min equals max");
}
}  // namespace

float normalize_value(double v, const Normalization& n) {
  return static_cast<float>(2.0 * (v - n.min) / (n.max - n.min) - 1.0);
}

float denormalize_value(double v, const Normalization& n) {
  return static_cast<float>((v + 1.0) * 0.5 * (n.max - n.min) + n.min);
}

Volume normalize(const Volume& volume, const Normalization& norm) {
  check_norm(norm);
  Volume out = volume;
  for (auto& v : out.values) v = normalize_value(v, norm);
  out.value_range = norm;
  return out;
}

Volume denormalize(const Volume& volume, const Normalization& norm) {
  check_norm(norm);
  Volume out = volume;
  for (auto& v : out.values) v = denormalize_value(v, norm);
  out.value_range = norm;
  return out;
}

// --- persistence -----------------------------------------------------------------

namespace {

fs::path header_path(const fs::path& p) {
  if (p.extension() == ".json") return p;
  if (p.extension() == ".raw") return fs::path(p).replace_extension(".json");
  return fs::path(p.string() + ".json");
}

}  // namespace

void save_volume(const fs::path& stem, const Volume& volume) {
  volume.validate();
  const fs::path header = header_path(stem);
  const fs::path raw = fs::path(header).replace_extension(".raw");
  if (!header.parent_path().empty()) fs::create_directories(header.parent_path());
  nlohmann::json j;
  j["format"] = "vdls-volume";
  j["version"] = 1;
  j["extents"] = volume.extents;
  j["dtype"] = "float32-le";
  j["min"] = volume.value_range.min;
  j["max"] = volume.value_range.max;
  j["raw"] = raw.filename().string();
  if (volume.params) j["params"] = *volume.params;
  write_json_file(header, j);
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write volume payload: " + raw.string());
  out.write(reinterpret_cast<const char*>(volume.values.data()),
            static_cast<std::streamsize>(volume.values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing volume payload: " + raw.string());
}

Volume load_volume(const fs::path& path) {
  const fs::path header = header_path(path);
  const auto j = read_json_file(header);
  if (j.value("format", "") != "vdls-volume") throw std::runtime_error(header.string() + ": not a vdls volume header");
  Volume v;
  v.extents = j.at("extents").get<Extents3>();
  v.value_range = {j.at("min").get<double>(), j.at("max").get<double>()};
  if (j.contains("params")) v.params = j.at("params").get<SimParams>();
  const fs::path raw = header.parent_path() / j.at("raw").get<std::string>();
  v.values.resize(static_cast<size_t>(v.size()));
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume payload: " + raw.string());
  in.read(reinterpret_cast<char*>(v.values.data()), static_cast<std::streamsize>(v.values.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != v.values.size() * sizeof(float)) {
    throw std::runtime_error("volume payload truncated: " + raw.string());
  }
  return v;
}

// --- ensemble -------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::RaeTrain: return "rae-train";
    case Split::PredictorTrain: return "predictor-train";
    case Split::Test: return "test";
  }
  return "unknown";
}

Split split_from_string(const std::string& s) {
  if (s == "rae-train") return Split::RaeTrain;
  if (s == "predictor-train") return Split::PredictorTrain;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<size_t> EnsembleManifest::indices(Split s) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < members.size(); ++i) {
    if (members[i].split == s) out.push_back(i);
  }
  return out;
}

std::vector<size_t> EnsembleManifest::training_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < members.size(); ++i) {
    if (members[i].split != Split::Test) out.push_back(i);
  }
  return out;
}

fs::path EnsembleManifest::volume_path(size_t member) const { return directory / members.at(member).volume; }

Volume EnsembleManifest::load_member(size_t member) const {
  Volume v = load_volume(volume_path(member));
  v.value_range = normalization;
  return v;
}

void EnsembleManifest::validate() const {
  space.validate();
  if (!(normalization.min <= normalization.max)) throw std::invalid_argument("manifest normalization has min > max");
  for (const auto& m : members) {
    if (m.params.size() != space.size()) throw std::invalid_argument("member " + m.name + " has wrong parameter count");
  }
}

SplitCounts split_counts(int n, double test_fraction, double rae_fraction) {
  if (n < 3) throw std::invalid_argument("an ensemble needs at least 3 members");
  SplitCounts c;
  c.test = std::clamp(static_cast<int>(std::lround(n * test_fraction)), 1, n - 2);
  const int training = n - c.test;
  c.rae_train = std::clamp(static_cast<int>(std::ceil(training * rae_fraction - 1e-9)), 1, training - 1);
  c.predictor_train = training - c.rae_train;
  return c;
}

EnsembleManifest build_ensemble(const EnsembleOptions& options, const fs::path& directory) {
  options.space.validate();
  const auto counts = split_counts(options.n_members, options.test_fraction, options.rae_fraction);
  std::mt19937_64 rng(options.seed);
  std::vector<std::vector<double>> params(static_cast<size_t>(options.n_members));
  for (auto& p : params) {
    for (const auto& r : options.space.ranges) {
      std::uniform_real_distribution<double> dist(r.min, r.max);
      p.push_back(dist(rng));
    }
  }
  std::vector<size_t> order(params.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  EnsembleManifest m;
  m.seed = options.seed;
  m.extents = options.extents;
  m.space = options.space;
  m.directory = directory;
  m.members.resize(params.size());
  for (size_t rank = 0; rank < order.size(); ++rank) {
    auto& member = m.members[order[rank]];
    if (rank < static_cast<size_t>(counts.test)) member.split = Split::Test;
    else if (rank < static_cast<size_t>(counts.test + counts.rae_train)) member.split = Split::RaeTrain;
    else member.split = Split::PredictorTrain;
  }

  fs::create_directories(directory / "volumes");
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  std::vector<Volume> volumes;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& member = m.members[i];
    char name[32];
    std::snprintf(name, sizeof(name), "member_%03zu", i);
    member.name = name;
    member.params = params[i];
    member.volume = "volumes/" + member.name + ".json";
    Volume v = simulate(SimParams{params[i], options.space}, options.extents);
    lo = std::min(lo, v.value_range.min);
    hi = std::max(hi, v.value_range.max);
    volumes.push_back(std::move(v));
  }
  m.normalization = {lo, hi};
  for (size_t i = 0; i < volumes.size(); ++i) {
    volumes[i].value_range = m.normalization;
    save_volume(directory / m.members[i].volume, volumes[i]);
  }
  save_manifest(directory / "manifest.json", m);
  return m;
}

void save_manifest(const fs::path& path, const EnsembleManifest& manifest) {
  nlohmann::json j;
  j["format"] = "vdls-manifest";
  j["version"] = 1;
  j["seed"] = manifest.seed;
  j["extents"] = manifest.extents;
  j["parameter_space"] = manifest.space;
  j["normalization"] = manifest.normalization;
  auto& members = j["members"] = nlohmann::json::array();
  for (const auto& m : manifest.members) {
    members.push_back({{"name", m.name}, {"params", m.params}, {"volume", m.volume}, {"split", to_string(m.split)}});
  }
  write_json_file(path, j);
}

EnsembleManifest load_manifest(const fs::path& path) {
  const auto j = read_json_file(path);
  if (j.value("format", "") != "vdls-manifest") throw std::runtime_error(path.string() + ": not a vdls manifest");
  EnsembleManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.extents = j.at("extents").get<Extents3>();
  m.space = j.at("parameter_space").get<ParameterSpace>();
  m.normalization = j.at("normalization").get<Normalization>();
  for (const auto& e : j.at("members")) {
    EnsembleMember mem;
    mem.name = e.at("name").get<std::string>();
    mem.params = e.at("params").get<std::vector<double>>();
    mem.volume = e.at("volume").get<std::string>();
    mem.split = split_from_string(e.at("split").get<std::string>());
    m.members.push_back(std::move(mem));
  }
  m.directory = path.parent_path();
  m.validate();
  return m;
}

}  // namespace vdls
