#pragma once

#include <stdexcept>
#include <string>

namespace irisseg {

/// Root of every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input supplied by the caller (flags, paths, shapes). The CLI maps
/// these to exit code 1; everything else is a runtime failure (exit 2).
class UserError : public Error {
 public:
  using Error::Error;
};

class EmptyMask : public Error {
 public:
  EmptyMask() : Error("mask has no foreground pixel") {}
  explicit EmptyMask(const std::string& what) : Error(what) {}
};

class ShapeMismatch : public UserError {
 public:
  using UserError::UserError;
};

class EmptyBatch : public UserError {
 public:
  EmptyBatch() : UserError("empty pixel batch") {}
};

class InsufficientPixels : public Error {
 public:
  using Error::Error;
};

class UnreadableImage : public Error {
 public:
  using Error::Error;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

class NoPairsFound : public UserError {
 public:
  using UserError::UserError;
};

class DuplicateRecord : public UserError {
 public:
  using UserError::UserError;
};

class MissingCheckpoint : public UserError {
 public:
  using UserError::UserError;
};

class EmptyTrainSplit : public UserError {
 public:
  using UserError::UserError;
};

class DivergedLoss : public Error {
 public:
  using Error::Error;
};

class MalformedCsv : public UserError {
 public:
  using UserError::UserError;
};

}  // namespace irisseg
