#pragma once

#include <stdexcept>
#include <string>

namespace m2pt {

enum class ErrorKind {
  Dimension,
  Numeric,
  Capacity,
  Layout,
  Registry,
  Format,
  Config,
  Split,
  State,
  Io,
  Usage,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define M2PT_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

M2PT_DEFINE_ERROR(DimensionError, ErrorKind::Dimension)
M2PT_DEFINE_ERROR(NumericError, ErrorKind::Numeric)
M2PT_DEFINE_ERROR(CapacityError, ErrorKind::Capacity)
M2PT_DEFINE_ERROR(LayoutError, ErrorKind::Layout)
M2PT_DEFINE_ERROR(RegistryError, ErrorKind::Registry)
M2PT_DEFINE_ERROR(FormatError, ErrorKind::Format)
M2PT_DEFINE_ERROR(ConfigError, ErrorKind::Config)
M2PT_DEFINE_ERROR(SplitError, ErrorKind::Split)
M2PT_DEFINE_ERROR(StateError, ErrorKind::State)
M2PT_DEFINE_ERROR(IoError, ErrorKind::Io)
M2PT_DEFINE_ERROR(UsageError, ErrorKind::Usage)

#undef M2PT_DEFINE_ERROR

}  // namespace m2pt
