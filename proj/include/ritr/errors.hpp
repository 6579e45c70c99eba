#pragma once

#include <stdexcept>
#include <string>

namespace ritr {

/// Malformed input data, schema, or specification.
class schema_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Design matrix is rank deficient beyond what the ridge floor remediates.
class singular_design_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Objective became non-finite during optimization.
class divergence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value estimator is undefined on the given inputs (e.g. no observation
/// agrees with the rule).
class undefined_estimate_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested population quantity does not exist (e.g. mean under Cauchy).
class undefined_value_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ritr
