#pragma once

#include <stdexcept>
#include <string>

namespace resicap {

// Invalid arguments passed by the caller (shape mismatches, bad option values,
// malformed user input). Recoverable at the call site.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// API misuse: calling things in an order or state that can never be correct
// (backward on a non-scalar, stepping an optimizer with missing grads).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Errors while reading serialized artifacts (bitstreams, checkpoints,
// manifests). Subtypes let tests distinguish what went wrong.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public ParseError {
 public:
  explicit FormatError(const std::string& msg) : ParseError(msg) {}
};

class TruncationError : public ParseError {
 public:
  explicit TruncationError(const std::string& msg) : ParseError(msg) {}
};

class VersionError : public ParseError {
 public:
  explicit VersionError(const std::string& msg) : ParseError(msg) {}
};

class CorruptStreamError : public ParseError {
 public:
  explicit CorruptStreamError(const std::string& msg) : ParseError(msg) {}
};

}  // namespace resicap
