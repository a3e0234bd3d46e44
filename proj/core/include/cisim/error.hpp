#pragma once

#include <stdexcept>
#include <string>

namespace cisim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CISIM_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

CISIM_DEFINE_ERROR(NearPiRotation);
CISIM_DEFINE_ERROR(InvalidArgument);
CISIM_DEFINE_ERROR(ParseError);
CISIM_DEFINE_ERROR(EmptyMesh);
CISIM_DEFINE_ERROR(DegeneratePolyline);
CISIM_DEFINE_ERROR(NoIntersection);
CISIM_DEFINE_ERROR(DegenerateContour);
CISIM_DEFINE_ERROR(ParallelAxes);
CISIM_DEFINE_ERROR(OutOfRange);
CISIM_DEFINE_ERROR(DegenerateTangents);
CISIM_DEFINE_ERROR(DimensionMismatch);
CISIM_DEFINE_ERROR(SingularA);
CISIM_DEFINE_ERROR(EmptyPlans);
CISIM_DEFINE_ERROR(NoOverlap);
CISIM_DEFINE_ERROR(AxisUndefined);
CISIM_DEFINE_ERROR(ConfigError);

#undef CISIM_DEFINE_ERROR

/// Newton failed to reach the residual tolerance. Callers treat this as a
/// stall indicator rather than a hard failure.
class NonConvergence : public Error {
 public:
  NonConvergence(int iterations, double residual)
      : Error("Newton did not converge after " + std::to_string(iterations) +
              " iterations (residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

}  // namespace cisim
