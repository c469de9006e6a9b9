#pragma once

#include <stdexcept>
#include <string>

namespace sinet {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SINET_DEFINE_ERROR(Name)        \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

SINET_DEFINE_ERROR(ShapeError)
SINET_DEFINE_ERROR(NumericError)
SINET_DEFINE_ERROR(EmptyInputError)
SINET_DEFINE_ERROR(GraphError)
SINET_DEFINE_ERROR(BatchTooSmallError)
SINET_DEFINE_ERROR(ConfigError)
SINET_DEFINE_ERROR(VocabError)
SINET_DEFINE_ERROR(FrameSkippedError)
SINET_DEFINE_ERROR(LabelError)
SINET_DEFINE_ERROR(SequenceError)
SINET_DEFINE_ERROR(FormatError)
SINET_DEFINE_ERROR(IoError)
SINET_DEFINE_ERROR(CheckpointError)

#undef SINET_DEFINE_ERROR

}  // namespace sinet
