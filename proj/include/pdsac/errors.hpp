#pragma once

#include <stdexcept>
#include <string>

namespace pdsac {

// Invalid world/run configuration or layout file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse, e.g. stepping a finished episode.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tensor / network shape disagreement.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { corrupt, shape_mismatch, io };

  CheckpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Non-finite loss or parameter during a learner update.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed metrics / trajectory CSV input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pdsac
