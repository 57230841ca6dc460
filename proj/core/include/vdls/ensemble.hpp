#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vdls {

using Extents3 = std::array<int64_t, 3>;

struct ParamRange {
  double min = 0.0;
  double max = 1.0;
};

/// Names and ranges of the simulation input parameters.
struct ParameterSpace {
  std::vector<std::string> names;
  std::vector<ParamRange> ranges;

  size_t size() const { return names.size(); }
  void validate() const;
  bool contains(const std::vector<double>& values) const;
  /// Per-dimension map of [min,max] onto [0,1].
  std::vector<double> to_unit(const std::vector<double>& values) const;

  /// amplitude [0.5,2], separation [-1,1], width [0,1], null [0,1]
  static ParameterSpace synthetic_default();
};

struct SimParams {
  std::vector<double> values;
  ParameterSpace space;

  void validate() const;
};

/// Dataset-wide value range shared by every member and by every model
/// trained on the ensemble.
struct Normalization {
  double min = 0.0;
  double max = 1.0;

  double range() const { return max - min; }
  bool operator==(const Normalization&) const = default;
};

/// Dense scalar field on a W0 x H0 x L0 grid, index (i, j, k) with k fastest.
struct Volume {
  Extents3 extents{1, 1, 1};
  std::vector<float> values;
  Normalization value_range;  // dataset-global min/max
  std::optional<SimParams> params;

  int64_t size() const { return extents[0] * extents[1] * extents[2]; }
  float at(int64_t i, int64_t j, int64_t k) const { return values[static_cast<size_t>((i * extents[1] + j) * extents[2] + k)]; }
  void validate() const;
};

/// Contributions of the synthetic field at a point x in [0,1]^3. The total
/// field value is their sum.
struct FieldTerms {
  double amplitude_blob = 0.0;
  double width_blob = 0.0;
  double ripple = 0.0;
  double total() const { return amplitude_blob + width_blob + ripple; }
};

FieldTerms synthetic_field_terms(const std::array<double, 3>& x, const std::vector<double>& p);

/// Centers of the two blobs for a given separation parameter.
std::array<double, 3> amplitude_blob_center(double separation);
std::array<double, 3> width_blob_center(double separation);

/// Deterministic analytic stand-in for one ensemble member. Samples the field
/// at cell centers ((i+0.5)/W0, ...). Rejects out-of-range parameters.
Volume simulate(const SimParams& params, const Extents3& extents);

// --- normalization ---------------------------------------------------------

/// Affine map of [min,max] onto [-1,1]. Rejects a degenerate range.
Volume normalize(const Volume& volume, const Normalization& norm);
Volume denormalize(const Volume& volume, const Normalization& norm);
float normalize_value(double v, const Normalization& norm);
float denormalize_value(double v, const Normalization& norm);

// --- persistence -------------------------------------------------------------

/// Writes `<stem>.json` (header) and `<stem>.raw` (little-endian float32).
void save_volume(const std::filesystem::path& stem, const Volume& volume);
/// Accepts the stem, the `.json` header path, or the `.raw` path.
Volume load_volume(const std::filesystem::path& path);

// --- ensemble ----------------------------------------------------------------

enum class Split { RaeTrain, PredictorTrain, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct EnsembleMember {
  std::string name;
  std::vector<double> params;
  std::string volume;  // header path relative to the manifest directory
  Split split = Split::PredictorTrain;
};

struct EnsembleManifest {
  uint64_t seed = 0;
  Extents3 extents{64, 64, 64};
  ParameterSpace space;
  Normalization normalization;
  std::vector<EnsembleMember> members;
  std::filesystem::path directory;  // where the manifest lives (not serialized)

  std::vector<size_t> indices(Split s) const;
  /// Members the predictor and the interpolation baselines learn from: the
  /// union of the RAE and predictor training splits.
  std::vector<size_t> training_indices() const;
  std::filesystem::path volume_path(size_t member) const;
  Volume load_member(size_t member) const;
  void validate() const;
};

struct EnsembleOptions {
  int n_members = 20;
  uint64_t seed = 0;
  Extents3 extents{64, 64, 64};
  double test_fraction = 0.2;
  /// Fraction of the training members that go to the RAE split (rounded up).
  double rae_fraction = 0.2;
  ParameterSpace space = ParameterSpace::synthetic_default();
};

struct SplitCounts {
  int rae_train = 0, predictor_train = 0, test = 0;
};
SplitCounts split_counts(int n_members, double test_fraction, double rae_fraction);

/// Samples parameters uniformly, simulates every member, writes volumes under
/// `directory/volumes/`, and writes `directory/manifest.json`.
EnsembleManifest build_ensemble(const EnsembleOptions& options, const std::filesystem::path& directory);

void save_manifest(const std::filesystem::path& path, const EnsembleManifest& manifest);
EnsembleManifest load_manifest(const std::filesystem::path& path);

}  // namespace vdls
