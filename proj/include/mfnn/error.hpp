#pragma once

#include <stdexcept>
#include <string>

namespace mfnn {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes incompatible with the requested operation.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value (bad groups, zero throughput, start >= stop, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite loss or parameter detected during training.
struct DivergenceError : Error {
  DivergenceError(const std::string& msg, std::string layer)
      : Error(msg + " (layer: " + layer + ")"), layer_id(std::move(layer)) {}
  std::string layer_id;
};

// Integer accumulator left its safe range on the shift eval path.
struct OverflowError : Error {
  OverflowError(const std::string& msg, std::string layer)
      : Error(msg + " (layer: " + layer + ")"), layer_id(std::move(layer)) {}
  std::string layer_id;
};

// Sample statistics cannot be fitted (constant tensor, too few elements).
struct DegenerateDistributionError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
struct DomainError : Error {
  using Error::Error;
};

// Mismatched paired layers handed to the remapper pretrainer.
struct PairingError : Error {
  using Error::Error;
};

// Frozen-state contract of the remap net violated.
struct ContractError : Error {
  using Error::Error;
};

// Channel bookkeeping between producer and consumer layers went out of sync.
struct AlignmentError : Error {
  using Error::Error;
};

// Malformed file content; offset is the byte position of the first bad field.
struct FormatError : Error {
  FormatError(const std::string& msg, std::size_t offset)
      : Error(msg + " at byte " + std::to_string(offset)), byte_offset(offset) {}
  explicit FormatError(const std::string& msg) : Error(msg), byte_offset(0) {}
  std::size_t byte_offset;
};

// Search could not produce a feasible candidate.
struct ExhaustionError : Error {
  using Error::Error;
};

}  // namespace mfnn
