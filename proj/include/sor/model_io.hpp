#pragma once

#include <filesystem>
#include <string>

#include "sor/model.hpp"

namespace sor::nn {

/// JSON model container version written by save_model.
inline constexpr int kModelFormatVersion = 1;

/// Serializes the full architecture, parameter values, frozen flags, and
/// metadata. Doubles are written in shortest-round-trip form, so load_model
/// restores bit-identical values. Key order is deterministic; saving the
/// same model twice yields byte-identical files.
std::string model_to_json(const Model& model);
void save_model(const Model& model, const std::filesystem::path& path);

/// Throws ParseError on malformed input, VersionError on an unsupported
/// container version, ValidationError on inconsistent shapes.
Model model_from_json(const std::string& text);
Model load_model(const std::filesystem::path& path);

}  // namespace sor::nn
