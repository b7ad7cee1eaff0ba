#pragma once

#include <stdexcept>
#include <string>

namespace cnnselect {

enum class ErrorCode {
  parse,
  duplicate_name,
  not_found,
  domain,
  no_models,
  estimation_unavailable,
  config,
  insufficient_policies,
  validation,
  conflict,
  io,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the core carries a code so the C layer can map it
// onto a status value without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cnnselect
