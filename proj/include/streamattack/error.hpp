#pragma once

#include <stdexcept>
#include <string>

namespace streamattack {

enum class ErrorKind {
  Config,
  Usage,
  Io,
  Format,
  EmptyData,
  DataSize,
  Training,
  Attack,
};

const char* to_string(ErrorKind kind);

/// Base for every error the library raises. `kind()` drives the CLI's
/// categorized error line and exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define STREAMATTACK_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& message) : Error(Kind, message) {}      \
  };

STREAMATTACK_DEFINE_ERROR(ConfigError, ErrorKind::Config)
STREAMATTACK_DEFINE_ERROR(UsageError, ErrorKind::Usage)
STREAMATTACK_DEFINE_ERROR(IoError, ErrorKind::Io)
STREAMATTACK_DEFINE_ERROR(FormatError, ErrorKind::Format)
STREAMATTACK_DEFINE_ERROR(EmptyDataError, ErrorKind::EmptyData)
STREAMATTACK_DEFINE_ERROR(DataSizeError, ErrorKind::DataSize)
STREAMATTACK_DEFINE_ERROR(AttackError, ErrorKind::Attack)

#undef STREAMATTACK_DEFINE_ERROR

class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, int epoch)
      : Error(ErrorKind::Training, message), epoch_(epoch) {}

  /// Epoch index at which training failed, or -1 when not epoch-specific.
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace streamattack
