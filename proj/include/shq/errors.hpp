#pragma once

#include <stdexcept>
#include <string>

namespace shq {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Stable machine-readable tag, used by the CLI error records.
  virtual const char* kind() const noexcept { return "Error"; }
};

#define SHQ_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                      \
   public:                                                         \
    using Error::Error;                                            \
    const char* kind() const noexcept override { return #Name; }   \
  }

SHQ_DEFINE_ERROR(InvalidArgument);
SHQ_DEFINE_ERROR(InvalidRectangle);
SHQ_DEFINE_ERROR(EmptyCell);
SHQ_DEFINE_ERROR(IntegrationFailure);
SHQ_DEFINE_ERROR(NodeComputationFailure);
SHQ_DEFINE_ERROR(OutOfBounds);
SHQ_DEFINE_ERROR(FellerViolation);
SHQ_DEFINE_ERROR(DateMismatch);
SHQ_DEFINE_ERROR(ModelPriceFailure);
SHQ_DEFINE_ERROR(ConfigError);
SHQ_DEFINE_ERROR(IoError);

#undef SHQ_DEFINE_ERROR

/// Lloyd (or any fixed point) iteration ran out of budget.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  const char* kind() const noexcept override { return "NoConvergence"; }
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

}  // namespace shq
