#pragma once

#include <stdexcept>
#include <string>

namespace softquad {

/// Invalid model, config, or argument shape.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite state after a physics step. `joint` is -1 for the floating base.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, int joint)
      : std::runtime_error(what + " (joint " + std::to_string(joint) + ")"), joint_(joint) {}
  int joint() const noexcept { return joint_; }

 private:
  int joint_;
};

/// Training diverged or produced non-finite values.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace softquad
