#pragma once

#include <stdexcept>
#include <string>

namespace clademap {

/// Malformed or inconsistent user input (files, flags). Maps to CLI exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model could not be evaluated on otherwise valid input
/// (degenerate covariate, non-convergence, unattainable quota).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clademap
