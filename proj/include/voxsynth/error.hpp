#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxsynth {

enum class ErrorCode {
    invalid_argument,
    dimension_mismatch,
    empty_input,
    precondition,
    io_error,
    malformed_header,
    unsupported_dtype,
    too_many_dims,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; `code()` is what the CLI reports.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &what) { throw Error(code, what); }

}  // namespace voxsynth
