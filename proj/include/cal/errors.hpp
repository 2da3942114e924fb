#pragma once

#include <stdexcept>
#include <string>

namespace cal {

/// Tensor shapes do not conform to an operation's rule.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Argument outside an operation's mathematical domain (e.g. log of a negative value).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// A precondition of an API call was violated by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the offending line number when known.
struct FormatError : std::runtime_error {
    FormatError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Bad command-line or configuration input.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace cal
