#pragma once

#include <stdexcept>
#include <string>

namespace swarmlearn {

/// Operand shapes do not fit the operation.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite or otherwise unusable number showed up mid-computation.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration, checkpoint, or instance record.
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace swarmlearn
