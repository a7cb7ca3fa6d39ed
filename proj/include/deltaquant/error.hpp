#pragma once

#include <stdexcept>
#include <string>

namespace dq {

/// Base class for every error raised by the library. `kind()` is the short
/// error name printed by the command-line front end.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define DQ_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

DQ_DEFINE_ERROR(InvalidValue)
DQ_DEFINE_ERROR(InvalidConfig)
DQ_DEFINE_ERROR(ShapeError)
DQ_DEFINE_ERROR(FormatError)
DQ_DEFINE_ERROR(PairingError)
DQ_DEFINE_ERROR(ManifestError)
DQ_DEFINE_ERROR(IoError)

#undef DQ_DEFINE_ERROR

}  // namespace dq
