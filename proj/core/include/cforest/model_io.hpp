#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cforest/cascade.hpp"
#include "cforest/mart.hpp"

namespace cforest {

inline constexpr int kModelFormatVersion = 1;

/// Self-contained versioned JSON for a full cascade: configuration snapshot,
/// selected columns, every layer's fold models, score history, best layer.
/// Serialization round-trips bit for bit: save(load(path)) rewrites the same
/// bytes, and loaded models predict identically.
std::string model_to_json(const CascadeModel& model);
CascadeModel model_from_json(const std::string& text);  // DataError on bad content
void save_model(const CascadeModel& model, const std::filesystem::path& path);
CascadeModel load_model(const std::filesystem::path& path);

/// Single boosted model payloads (checkpointed job outputs).
std::string mart_to_json(const MartModel& model);
MartModel mart_from_json(const std::string& text);
void save_mart(const MartModel& model, const std::filesystem::path& path);
MartModel load_mart(const std::filesystem::path& path);

}  // namespace cforest
