#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtopo {

enum class ErrorCode {
  Parse,
  NonTriangular,
  IndexOutOfRange,
  InvalidMesh,
  DegenerateFace,
  OpenMesh,
  Io,
  InvalidArgument,
  PlaneThroughVertex,
  DegenerateSplit,
  ShapeCheckFailed,
  SamplingExhausted,
  ShapeMismatch,
  EmptyInput,
  Config,
  ArchitectureMismatch,
  Numeric,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code; every fallible operation in
/// the library throws this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mtopo
