#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace driftlab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A class or rotation label outside its valid range.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in a loss, gradient or parameter update.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or JSON input. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }
  /// The description without the offset suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint content digest does not match.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an unsupported format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Input ends before all declared content was read.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Glyph prototypes that would make the rotation task ill-posed.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// No usable candidate came out of a hyperparameter sweep.
class AdaptationError : public Error {
 public:
  using Error::Error;
};

}  // namespace driftlab
