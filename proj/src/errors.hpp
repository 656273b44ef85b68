#pragma once

#include <stdexcept>
#include <string>

namespace advgrad {

// Malformed or truncated on-disk data (model files, IDX datasets).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace advgrad
