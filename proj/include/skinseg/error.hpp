#pragma once

#include <stdexcept>
#include <string>

namespace skinseg {

/// Base class for failures caused by bad input (malformed files, violated
/// preconditions, unreadable paths). The CLI maps these to exit status 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ParseErrorKind { MalformedHeader, Truncated, UnsupportedMaxval, BadMagic, BadFormat };

class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    ParseErrorKind kind() const noexcept { return kind_; }

private:
    ParseErrorKind kind_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A documented precondition or invariant of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace skinseg
