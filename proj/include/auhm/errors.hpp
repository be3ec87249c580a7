#pragma once

#include <stdexcept>
#include <string>

namespace auhm {

/// Root of every error the library raises. The CLI turns any of these into a
/// one-line message and exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AUHM_DEFINE_ERROR(Name)               \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(#Name ": " + what) {}         \
  }

AUHM_DEFINE_ERROR(DimensionError);
AUHM_DEFINE_ERROR(ShapeError);
AUHM_DEFINE_ERROR(RankError);
AUHM_DEFINE_ERROR(NumericError);
AUHM_DEFINE_ERROR(ConfigError);
AUHM_DEFINE_ERROR(GeometryError);
AUHM_DEFINE_ERROR(LabelError);
AUHM_DEFINE_ERROR(MetricError);
AUHM_DEFINE_ERROR(FormatError);
AUHM_DEFINE_ERROR(IoError);
AUHM_DEFINE_ERROR(InternalError);

#undef AUHM_DEFINE_ERROR

}  // namespace auhm
