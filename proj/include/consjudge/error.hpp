#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace consjudge {

enum class ErrorCode {
    kRange,
    kDuplicateLabel,
    kCardinality,
    kPrecondition,
    kInvalidInput,
    kTemplate,
    kTransport,
    kHttpStatus,
    kRateLimited,
    kMalformedResponse,
    kDegenerateEmbedding,
    kDimensionMismatch,
    kIntegrity,
    kParse,
    kIo,
    kConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` tells callers which rule failed.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace consjudge
