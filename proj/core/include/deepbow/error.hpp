#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deepbow {

enum class ErrorCode {
    build,
    config,
    input,
    internal,
    contract,
    undefined_metric,
    not_found,
    integrity,
    version,
    protocol,
    io,
    numeric,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` tells callers which
/// failure class they are looking at without string matching.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), m_code(code)
    {}

    [[nodiscard]] ErrorCode code() const noexcept { return m_code; }

  private:
    ErrorCode m_code;
};

}  // namespace deepbow
