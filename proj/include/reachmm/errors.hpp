#pragma once

#include <stdexcept>
#include <string>

namespace reachmm {

/// An embedding state left the ordered cone, or a computation produced NaN.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query box is not contained in the domain a set of network bounds is valid on.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reachmm
