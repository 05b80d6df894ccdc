#pragma once

#include <stdexcept>
#include <string>

namespace dph {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { usage = 1, numeric = 2, io = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Invalid argument, precondition violation or malformed input.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::usage, what) {}
};

// NaN/Inf encountered in a loss, gradient or parameter update.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace dph
