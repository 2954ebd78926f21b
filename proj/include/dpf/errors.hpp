#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dpf {

/// Violated precondition or malformed input (bad shape, bad label, schema error).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values surfaced during forward or backward computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failures: missing files, unwritable paths, short reads.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content. Carries the byte offset at which parsing stopped.
class ParseError : public ContractError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : ContractError(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace dpf
