#pragma once

#include <stdexcept>
#include <string>

namespace latentflow {

// Invalid or inconsistent experiment configuration; maps to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values during training or integration; maps to exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace latentflow
