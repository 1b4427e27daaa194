#ifndef HESSFIT_ERRORS_HPP
#define HESSFIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hessfit {

// Base for all library errors. CLI maps ValidationError/ParseError to exit
// code 2 and everything else to 3.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define HESSFIT_DEFINE_ERROR(Name)                          \
  class Name : public Error {                               \
  public:                                                   \
    explicit Name(const std::string& msg = #Name)           \
        : Error(std::string(#Name) + ": " + msg) {}         \
  }

HESSFIT_DEFINE_ERROR(OutOfChart);
HESSFIT_DEFINE_ERROR(NotOnManifold);
HESSFIT_DEFINE_ERROR(FrameNotTangent);
HESSFIT_DEFINE_ERROR(RejectionStall);
HESSFIT_DEFINE_ERROR(RankDeficient);
HESSFIT_DEFINE_ERROR(TooFewNeighbors);
HESSFIT_DEFINE_ERROR(IllConditioned);
HESSFIT_DEFINE_ERROR(BadLength);
HESSFIT_DEFINE_ERROR(DegenerateOverlap);
HESSFIT_DEFINE_ERROR(EmptyNeighborhood);
HESSFIT_DEFINE_ERROR(UnsupportedPattern);
HESSFIT_DEFINE_ERROR(QuadratureNotConverged);
HESSFIT_DEFINE_ERROR(NotSymmetric);
HESSFIT_DEFINE_ERROR(MissingCurvatureData);
HESSFIT_DEFINE_ERROR(DimensionMismatch);
HESSFIT_DEFINE_ERROR(ParseError);
HESSFIT_DEFINE_ERROR(ValidationError);
HESSFIT_DEFINE_ERROR(IoError);

#undef HESSFIT_DEFINE_ERROR

}  // namespace hessfit

#endif
