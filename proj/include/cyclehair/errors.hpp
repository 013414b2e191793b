#pragma once

#include <stdexcept>
#include <string>

namespace cyclehair {

/// Base of every error raised by the library. Each subtype maps to one
/// failure class so callers (and the CLI) can branch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CYCLEHAIR_DEFINE_ERROR(Name)       \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

// corpus
CYCLEHAIR_DEFINE_ERROR(MalformedManifest);
CYCLEHAIR_DEFINE_ERROR(InvalidFlag);
CYCLEHAIR_DEFINE_ERROR(DuplicateEntry);
CYCLEHAIR_DEFINE_ERROR(UnknownAttribute);
CYCLEHAIR_DEFINE_ERROR(InsufficientRecords);
CYCLEHAIR_DEFINE_ERROR(ImageDecodeError);

// tensors and networks
CYCLEHAIR_DEFINE_ERROR(ShapeError);
CYCLEHAIR_DEFINE_ERROR(SpecError);
CYCLEHAIR_DEFINE_ERROR(NumericError);

// configuration and training
CYCLEHAIR_DEFINE_ERROR(ConfigError);
CYCLEHAIR_DEFINE_ERROR(UnknownPreset);
CYCLEHAIR_DEFINE_ERROR(CheckpointError);
CYCLEHAIR_DEFINE_ERROR(ConditionError);

#undef CYCLEHAIR_DEFINE_ERROR

/// Raised when a training step produces a non-finite loss or parameter.
/// Carries the last checkpoint that was written before the failure (empty
/// if none was written yet).
class NumericAbort : public NumericError {
 public:
  NumericAbort(const std::string& what, std::string last_good_checkpoint)
      : NumericError(what), last_good_checkpoint_(std::move(last_good_checkpoint)) {}

  const std::string& last_good_checkpoint() const noexcept { return last_good_checkpoint_; }

 private:
  std::string last_good_checkpoint_;
};

}  // namespace cyclehair
