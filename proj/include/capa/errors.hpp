#pragma once

#include <stdexcept>
#include <string>

namespace capa {

// Library error codes. Degenerate kappa denominators are NOT errors: those
// come back as a flagged MetricReport (see metrics.hpp).
enum class errc {
  empty_intersection,
  inconsistent_categories,
  constant_vector,
  rank_deficient,
  too_few_observations,
  schema_error,
  too_many_rejects,
  range_error,
  duplicate_key,
  missing_cell,
  too_few_models,
  bucket_too_small,
  io_error,
  invalid_argument,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::empty_intersection:      return "EmptyIntersection";
    case errc::inconsistent_categories: return "InconsistentCategories";
    case errc::constant_vector:         return "ConstantVector";
    case errc::rank_deficient:          return "RankDeficient";
    case errc::too_few_observations:    return "TooFewObservations";
    case errc::schema_error:            return "SchemaError";
    case errc::too_many_rejects:        return "TooManyRejects";
    case errc::range_error:             return "RangeError";
    case errc::duplicate_key:           return "DuplicateKey";
    case errc::missing_cell:            return "MissingCell";
    case errc::too_few_models:          return "TooFewModels";
    case errc::bucket_too_small:        return "BucketTooSmall";
    case errc::io_error:                return "IoError";
    case errc::invalid_argument:        return "InvalidArgument";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

}  // namespace capa
