#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmg {

// Base of every error thrown by the library. category() is a stable,
// machine-parsable name used by the CLI on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string_view category, const std::string& message);

  std::string_view category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define CMG_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

CMG_DEFINE_ERROR(DatasetEmpty);
CMG_DEFINE_ERROR(DecodeError);
CMG_DEFINE_ERROR(ChannelError);
CMG_DEFINE_ERROR(BatchTooLarge);
CMG_DEFINE_ERROR(PairingMismatch);
CMG_DEFINE_ERROR(ShapeError);
CMG_DEFINE_ERROR(RangeError);
CMG_DEFINE_ERROR(FrozenViolation);
CMG_DEFINE_ERROR(NumericalError);
CMG_DEFINE_ERROR(WindowError);
CMG_DEFINE_ERROR(ScaleError);
CMG_DEFINE_ERROR(IncompatibleCheckpoint);
CMG_DEFINE_ERROR(CheckpointError);
CMG_DEFINE_ERROR(ConfigError);
CMG_DEFINE_ERROR(IoError);

#undef CMG_DEFINE_ERROR

}  // namespace cmg

#include <optional>

#include "cmg/breakdown.hpp"

namespace cmg {

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& message,
                            std::optional<LossBreakdown> last = std::nullopt)
      : Error("TrainingDiverged", message), last_(last) {}

  const std::optional<LossBreakdown>& last_breakdown() const noexcept { return last_; }

 private:
  std::optional<LossBreakdown> last_;
};

}  // namespace cmg
