// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace agemap {

/// Error categories. The numeric values of config/missing_dependency/numerical
/// double as CLI exit codes.
enum class Errc : int {
  invalid_argument = 1,
  config = 2,
  missing_dependency = 3,
  numerical = 4,
  io = 5,
  decode = 6,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(Errc::invalid_argument, what);
}

}  // namespace agemap
