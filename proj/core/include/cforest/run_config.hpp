#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cforest/cascade.hpp"

namespace cforest {

/// End-to-end run settings parsed from a JSON config file. Parsing is strict:
/// unknown keys are rejected by name, and every value is range-checked.
struct RunConfig {
  CascadeConfig cascade;

  /// "balanced" (inverse class frequency), "uniform", or "column" (read the
  /// weight from weight_column).
  std::string weight_mode = "balanced";
  std::optional<std::string> weight_column;
  std::string label_column = "label";
  bool has_header = true;
  std::vector<double> eval_rates = {0.0001, 0.001, 0.01};
  int pool_size = 0;  // 0: one worker per hardware thread

  void validate() const;  // throws ConfigError
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

}  // namespace cforest
