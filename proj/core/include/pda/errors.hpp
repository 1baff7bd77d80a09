#pragma once

#include <stdexcept>
#include <string>

namespace pda {

// Base class for all library errors.
class PdaError : public std::runtime_error {
 public:
  explicit PdaError(const std::string& what) : std::runtime_error(what) {}
};

// Vector with L2 norm below the degenerate threshold (1e-12).
class DegenerateVector : public PdaError {
 public:
  explicit DegenerateVector(const std::string& what) : PdaError(what) {}
};

// Operands whose dimensions do not agree.
class DimensionMismatch : public PdaError {
 public:
  explicit DimensionMismatch(const std::string& what) : PdaError(what) {}
};

// Mutation attempted on a frozen prototype memory.
class MemoryFrozen : public PdaError {
 public:
  explicit MemoryFrozen(const std::string& what) : PdaError(what) {}
};

// Inference attempted on a memory that is still trainable.
class MemoryNotFrozen : public PdaError {
 public:
  explicit MemoryNotFrozen(const std::string& what) : PdaError(what) {}
};

// A class required by the protocol has no support entries.
class EmptyClass : public PdaError {
 public:
  explicit EmptyClass(const std::string& what) : PdaError(what) {}
};

class NonPositiveTemperature : public PdaError {
 public:
  explicit NonPositiveTemperature(const std::string& what) : PdaError(what) {}
};

class EmptyBatch : public PdaError {
 public:
  explicit EmptyBatch(const std::string& what) : PdaError(what) {}
};

class EmptyQuery : public PdaError {
 public:
  explicit EmptyQuery(const std::string& what) : PdaError(what) {}
};

class ConfigInvalid : public PdaError {
 public:
  explicit ConfigInvalid(const std::string& what) : PdaError(what) {}
};

// Malformed or unreadable on-disk artifact.
class IoError : public PdaError {
 public:
  explicit IoError(const std::string& what) : PdaError(what) {}
};

}  // namespace pda
