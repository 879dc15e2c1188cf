// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace forgetlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data or configuration breaks a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Matrix operands disagree in shape.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Filesystem or container-format failure.
class IoError : public Error {
public:
    using Error::Error;
};

enum class RewriterFailure { Unavailable, ContractViolation, Timeout };

class RewriterError : public Error {
public:
    RewriterError(RewriterFailure kind, const std::string& what)
        : Error(what), kind_(kind) {}

    [[nodiscard]] RewriterFailure kind() const noexcept { return kind_; }

private:
    RewriterFailure kind_;
};

}  // namespace forgetlab
