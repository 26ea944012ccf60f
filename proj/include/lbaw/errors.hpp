#pragma once

#include <stdexcept>
#include <string>

namespace lbaw {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Text input could not be parsed; carries the 1-based line number when known.
struct ParseError : Error {
  explicit ParseError(const std::string& msg, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  int line_number;
};

struct ValidationError : Error {
  using Error::Error;
};

struct InvalidMaterial : Error {
  using Error::Error;
};

struct DegenerateGeometry : Error {
  using Error::Error;
};

struct ResolutionTooCoarse : Error {
  using Error::Error;
};

struct MissingMaterial : Error {
  using Error::Error;
};

struct SingularElement : Error {
  using Error::Error;
};

struct EigSolverFailure : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

struct NoResonanceFound : Error {
  using Error::Error;
};

struct FitDiverged : Error {
  using Error::Error;
};

struct NonMonotoneFrequency : Error {
  using Error::Error;
};

}  // namespace lbaw
