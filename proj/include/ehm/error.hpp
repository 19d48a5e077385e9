#pragma once

#include <stdexcept>
#include <string>

namespace ehm {

enum class ErrorCode {
  InfeasiblePartition = 1,
  OutOfRangeTemperature,
  SingularSystem,
  NonPhysicalDensity,
  NoConvergence,
  NoPairs,
  InfeasibleBounds,
  InvalidInput,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

// Single exception type for the library; the code is what the C API reports.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ehm
