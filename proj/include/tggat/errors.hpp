#pragma once

#include <stdexcept>
#include <string>

namespace tggat {

// Invalid geometric or numeric domain (zero-area polygon, non-positive altitude, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API used out of contract (non-scalar backward root, empty buffer, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParaphraseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or similar numeric breakdown during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint / config / dataset disagree.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tggat
