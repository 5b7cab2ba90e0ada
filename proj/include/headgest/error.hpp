#pragma once

#include <stdexcept>
#include <string>

namespace headgest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HEADGEST_DEFINE_ERROR(Name)      \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

HEADGEST_DEFINE_ERROR(UnsupportedCharacter);
HEADGEST_DEFINE_ERROR(EmptyText);
HEADGEST_DEFINE_ERROR(InvalidCluster);
HEADGEST_DEFINE_ERROR(InvalidProfile);
HEADGEST_DEFINE_ERROR(AngleOutOfRange);
HEADGEST_DEFINE_ERROR(NotAProbabilityBlock);
HEADGEST_DEFINE_ERROR(InfeasibleTarget);
HEADGEST_DEFINE_ERROR(ShapeMismatch);
HEADGEST_DEFINE_ERROR(NonFiniteActivation);
HEADGEST_DEFINE_ERROR(LengthMismatch);
HEADGEST_DEFINE_ERROR(EmptyLexicon);
HEADGEST_DEFINE_ERROR(InvalidConfig);
HEADGEST_DEFINE_ERROR(ParseError);
HEADGEST_DEFINE_ERROR(ModelFormatError);
HEADGEST_DEFINE_ERROR(SplitError);

#undef HEADGEST_DEFINE_ERROR

}  // namespace headgest
