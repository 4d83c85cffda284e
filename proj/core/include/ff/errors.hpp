#pragma once

#include <stdexcept>
#include <string>

namespace ff {

/// Bad flags, bad config values, nonsensical parameters. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Transport failures, codec failures, out-of-contract peer behavior.
/// CLI exit code 3.
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// Equivalence check between federated and centralized models failed.
/// CLI exit code 4.
class VerificationError : public std::runtime_error {
 public:
  explicit VerificationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ff
