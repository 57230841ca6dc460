#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "vdls/ensemble.hpp"
#include "vdls/predictor.hpp"
#include "vdls/rae.hpp"
#include "vdls/view.hpp"

namespace vdls {

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

void to_json(nlohmann::json& j, const ParamRange& r);
void from_json(const nlohmann::json& j, ParamRange& r);
void to_json(nlohmann::json& j, const ParameterSpace& s);
void from_json(const nlohmann::json& j, ParameterSpace& s);
void to_json(nlohmann::json& j, const SimParams& p);
void from_json(const nlohmann::json& j, SimParams& p);
void to_json(nlohmann::json& j, const Normalization& n);
void from_json(const nlohmann::json& j, Normalization& n);
void to_json(nlohmann::json& j, const ViewConfig& v);
void from_json(const nlohmann::json& j, ViewConfig& v);
// Missing keys keep their defaults; unknown keys are rejected.
void to_json(nlohmann::json& j, const RAEConfig& c);
void from_json(const nlohmann::json& j, RAEConfig& c);
void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);

/// Throws if `j` has a key outside `known`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where);

}  // namespace vdls
