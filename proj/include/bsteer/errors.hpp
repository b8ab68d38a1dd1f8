#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsteer {

// Error taxonomy, grouped by how the CLI maps failures to exit codes:
//   IoError                       -> exit 1 (missing files, unwritable paths)
//   FormatError / CorruptionError -> exit 2 (violated data contracts)
//   DataError / TrainingError     -> exit 2 (semantic misuse, numeric aborts)
// Verification failures are reported through VerificationReport values, not
// exceptions; the CLI turns them into exit 3.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure: the file could not be opened, read, or written.
struct IoError : Error {
  using Error::Error;
};

// The bytes were readable but do not form a valid document of the expected
// format (wrong magic, unsupported version, unknown config key, bad schema).
struct FormatError : Error {
  using Error::Error;
};

// The document started out well-formed and then broke mid-stream. Carries the
// byte offset at which the reader gave up.
struct CorruptionError : FormatError {
  CorruptionError(const std::string& what, std::size_t offset)
      : FormatError(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

// Structurally valid input that violates a semantic precondition (dimension
// mismatch, single-class dataset, unsafe start where a safe one is required).
struct DataError : Error {
  using Error::Error;
};

// Training aborted because the loss or a parameter became non-finite.
struct TrainingError : Error {
  using Error::Error;
};

// A rollout produced a non-finite state or control.
struct RolloutError : Error {
  RolloutError(const std::string& what, int step)
      : Error(what + " (step " + std::to_string(step) + ")"), step(step) {}
  int step;
};

}  // namespace bsteer
