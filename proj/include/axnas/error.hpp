#pragma once

#include <stdexcept>
#include <string>

namespace axnas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (LUT tables, IDX/CIFAR batches, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration or template definition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor geometry mismatch at execution time.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Corrupted genotype (dangling or forward edge, unreachable input).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training diverged; callers map this to worst-case fitness.
class TrainError : public Error {
 public:
  using Error::Error;
};

// Operation on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace axnas
