#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zsar {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-parseable class name used by the CLI's one-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string_view kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    std::string_view kind() const noexcept { return kind_; }

private:
    std::string_view kind_;
};

#define ZSAR_DEFINE_ERROR(Name)                                          \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(#Name, what) {}   \
    }

ZSAR_DEFINE_ERROR(DomainError);
ZSAR_DEFINE_ERROR(ConfigError);
ZSAR_DEFINE_ERROR(IoError);
ZSAR_DEFINE_ERROR(FormatError);
ZSAR_DEFINE_ERROR(BackendError);
ZSAR_DEFINE_ERROR(TokenizationError);
ZSAR_DEFINE_ERROR(ShapeError);
ZSAR_DEFINE_ERROR(DecodeError);
ZSAR_DEFINE_ERROR(EmptyVideoError);
ZSAR_DEFINE_ERROR(DegenerateEmbeddingError);
ZSAR_DEFINE_ERROR(MissingDescriptorsError);
ZSAR_DEFINE_ERROR(EvaluationAborted);

#undef ZSAR_DEFINE_ERROR

/// Errors that carry the raw LLM response text for diagnostics.
class LlmError : public Error {
public:
    LlmError(std::string_view kind, const std::string& what, std::string raw)
        : Error(kind, what), raw_response_(std::move(raw)) {}

    const std::string& raw_response() const noexcept { return raw_response_; }

private:
    std::string raw_response_;
};

class ParseError : public LlmError {
public:
    explicit ParseError(const std::string& what, std::string raw = {})
        : LlmError("ParseError", what, std::move(raw)) {}
};

class TransportError : public LlmError {
public:
    TransportError(const std::string& what, std::string raw = {}, int status = 0,
                   bool retryable = false)
        : LlmError("TransportError", what, std::move(raw)),
          status_(status),
          retryable_(retryable) {}

    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return retryable_; }

private:
    int status_;
    bool retryable_;
};

/// Missing model files, missing API key and similar environment problems.
class EnvironmentError : public Error {
public:
    explicit EnvironmentError(const std::string& what) : Error("EnvironmentError", what) {}
};

}  // namespace zsar
