#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpgen {

enum class ErrorCode {
  Io,
  NonGrayscaleInput,
  ImageTooSmall,
  NoForeground,
  ForegroundTouchesAllBorders,
  ForegroundFractionOutOfRange,
  ShapeMismatch,
  InvalidConfig,
  EmptyBatch,
  DatasetTooSmall,
  NonFiniteLoss,
  IncompatibleCheckpoints,
  UnknownClass,
  TooFewSubjects,
  MissingSubject,
  Format,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports carries one of the codes above so that
// callers (the CLI in particular) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised for configuration problems; `key` is the dotted path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, std::string what)
      : Error(ErrorCode::InvalidConfig, key + ": " + what), key_(std::move(key)), message_(std::move(what)) {}

  const std::string& key() const noexcept { return key_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string key_;
  std::string message_;
};

}  // namespace fpgen
