// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maodb {

enum class ErrorCode {
  Ok = 0,
  InvalidArgument,
  OutOfBounds,
  DegenerateInput,
  InvalidShardCount,
  KernelStopped,
  VersionGap,
  SnapshotUnstable,
  DuplicateFlush,
  StaleRound,
  InvalidGraph,
  IncompleteTrace,
  EmptySamples,
  Io,
  Timeout,
  Internal,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace maodb
