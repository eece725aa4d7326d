#pragma once

#include <stdexcept>
#include <string>

namespace lbss {

enum class ErrorCode {
  invalid_config,
  cap_exceeded,
  inconsistent_law,
  reducible,
  not_converged,
  degenerate_load,
  invalid_spec,
  too_few_batches,
  nonpositive_gamma,
  unsupported_policy,
  schema_mismatch,
  parse_error,
  io_error,
  domain_error,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// C layer can map it onto a status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lbss
