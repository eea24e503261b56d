#pragma once

#include <stdexcept>
#include <string>

namespace pmuek {

// Violated precondition, malformed configuration, schema mismatch.
// The CLI maps these to exit code 2.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Missing files, unreadable input, malformed file content.
// The CLI maps these to exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pmuek
