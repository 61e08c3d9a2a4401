#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dyndta {

enum class ErrorCode {
  // tensor core
  ShapeMismatch,
  SequenceTooShort,
  IndexOutOfRange,
  EmptyInput,
  LengthMismatch,
  NotScalar,
  DetachedTensor,
  InvalidArgument,
  // SMILES
  LexError,
  Unsupported,
  UnclosedBranch,
  UnmatchedRingClosure,
  EmptyMolecule,
  // data / protein
  DegenerateRange,
  NonPositiveValue,
  DuplicatePdbId,
  TooFewRecords,
  MalformedInput,
  NoRecords,
  // model / training
  UnknownVariant,
  MissingGradient,
  ZeroVariance,
  InvalidValue,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the SMILES tokenizer and parser; offset is the byte position in
// the input text that triggered the failure.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t offset, const std::string& message)
      : Error(code, message + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace dyndta
