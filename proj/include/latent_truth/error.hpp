#pragma once

#include <stdexcept>
#include <string>

namespace latent_truth {

// Failure classes map onto CLI exit codes (2, 3, 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input: bad CSV, invalid parameters, bad options.
class InputError : public Error {
 public:
  using Error::Error;
};

// Arithmetic that cannot proceed, e.g. an image with zero probability under
// every mixture component.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// The fitted model collapsed (all images in one component, rank-zero
// covariance, ...).
class DegenerateModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace latent_truth
