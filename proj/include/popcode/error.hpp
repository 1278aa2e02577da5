#pragma once

#include <stdexcept>
#include <string>

namespace popcode {

// Base class for every error raised by the library. Each subclass names one
// failure condition so callers can catch exactly what they can handle.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define POPCODE_DEFINE_ERROR(Name)      \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

POPCODE_DEFINE_ERROR(DegenerateInput);
POPCODE_DEFINE_ERROR(ContinuousSymmetry);
POPCODE_DEFINE_ERROR(InvalidCount);
POPCODE_DEFINE_ERROR(AllZero);
POPCODE_DEFINE_ERROR(TooFewVertices);
POPCODE_DEFINE_ERROR(BehindCamera);
POPCODE_DEFINE_ERROR(DimensionMismatch);
POPCODE_DEFINE_ERROR(EmptyInput);
POPCODE_DEFINE_ERROR(InvalidSplit);
POPCODE_DEFINE_ERROR(ShapeMismatch);
POPCODE_DEFINE_ERROR(Divergence);
POPCODE_DEFINE_ERROR(InvalidEpsilon);
POPCODE_DEFINE_ERROR(InvalidArgument);
POPCODE_DEFINE_ERROR(FormatError);
POPCODE_DEFINE_ERROR(FileNotFound);

#undef POPCODE_DEFINE_ERROR

}  // namespace popcode
