#pragma once

#include <stdexcept>
#include <string>

namespace cforest {

/// Invalid parameters, malformed configuration, or bad pipeline wiring.
/// The command line tool maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent data content (bad labels, ragged rows, width
/// mismatches). The command line tool maps this to exit code 1.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failures. The command line tool maps this to exit code 1.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cforest
