#pragma once

#include <stdexcept>
#include <string>

namespace pathlens {

/// Failure categories; the CLI maps them onto exit statuses.
enum class ErrorKind { usage, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed input: bad model document, missing column, unknown level, zero variance.
class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

/// Estimation failure: non-convergence, singular regression, diverged training.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& message) : Error(ErrorKind::numerical, message) {}
};

/// Rethrows `e` with `prefix` prepended, keeping its category.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& prefix) {
    const std::string message = prefix + e.what();
    switch (e.kind()) {
        case ErrorKind::data: throw DataError(message);
        case ErrorKind::numerical: throw NumericalError(message);
        case ErrorKind::usage: break;
    }
    throw Error(e.kind(), message);
}

}  // namespace pathlens
