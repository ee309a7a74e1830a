#pragma once

#include <stdexcept>
#include <string>

namespace waterscreen {

// Error categories map 1:1 onto CLI exit codes. Anything escaping as a bare
// std::exception is an internal error (exit 10).
enum class ErrorKind {
    Config = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Numeric = 6,
    Dependency = 7,
    Internal = 10,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

    const char* kind_name() const noexcept {
        switch (kind_) {
            case ErrorKind::Config: return "config";
            case ErrorKind::Io: return "io";
            case ErrorKind::Parse: return "parse";
            case ErrorKind::Validation: return "validation";
            case ErrorKind::Numeric: return "numeric";
            case ErrorKind::Dependency: return "dependency";
            case ErrorKind::Internal: return "internal";
        }
        return "internal";
    }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(std::string m) : Error(ErrorKind::Config, std::move(m)) {}
};
struct IoError : Error {
    explicit IoError(std::string m) : Error(ErrorKind::Io, std::move(m)) {}
};
struct ParseError : Error {
    explicit ParseError(std::string m) : Error(ErrorKind::Parse, std::move(m)) {}
};
struct ValidationError : Error {
    explicit ValidationError(std::string m) : Error(ErrorKind::Validation, std::move(m)) {}
};
struct NumericError : Error {
    explicit NumericError(std::string m) : Error(ErrorKind::Numeric, std::move(m)) {}
};
struct DependencyError : Error {
    explicit DependencyError(std::string m) : Error(ErrorKind::Dependency, std::move(m)) {}
};
struct InternalError : Error {
    explicit InternalError(std::string m) : Error(ErrorKind::Internal, std::move(m)) {}
};

} // namespace waterscreen
