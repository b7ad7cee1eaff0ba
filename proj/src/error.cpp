#include "error.hpp"

namespace cnnselect {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::duplicate_name: return "duplicate_name";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::domain: return "domain";
    case ErrorCode::no_models: return "no_models";
    case ErrorCode::estimation_unavailable: return "estimation_unavailable";
    case ErrorCode::config: return "config";
    case ErrorCode::insufficient_policies: return "insufficient_policies";
    case ErrorCode::validation: return "validation";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace cnnselect
