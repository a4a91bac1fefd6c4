#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace carguard {

enum class ErrorCode {
  validation,
  not_found,
  duplicate,
  conflict,
  layout_mismatch,
  decode,
  empty_roi,
  config,
  missing_embedding,
  io,
  corrupt,
  payload_too_large,
  internal,
};

std::string_view to_string(ErrorCode code);

/// Every domain failure in the library is raised as an Error. `field()` names
/// the offending input (request field, block name, file path) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string field = {})
      : std::runtime_error(std::move(message)), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace carguard
