#pragma once

#include <stdexcept>
#include <string>

namespace sor {

/// Bad user input: shapes, hyperparameters, config files, malformed data.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File could not be parsed (truncated, wrong magic, bad JSON, ...).
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};

/// File has a valid container but an unsupported format version.
class VersionError : public ParseError {
public:
    explicit VersionError(const std::string& msg) : ParseError(msg) {}
};

}  // namespace sor
