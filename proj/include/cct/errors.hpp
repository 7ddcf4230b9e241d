#pragma once

#include <stdexcept>
#include <string>

namespace cct {

/// Precondition violated by a caller-supplied argument.
class argument_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every kernel weight in a p-value denominator vanished (box kernel only).
class degenerate_weights_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A score model could not be fitted to the supplied training data.
class fit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The calibration set required by a procedure is empty.
class calibration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The U-statistic variance estimate is not strictly positive.
class degenerate_variance_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An evaluation metric is undefined, e.g. its conditioning event is empty.
class metric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (CSV parsing, missing columns).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration; the message names the key and line.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A report does not satisfy its output schema, e.g. it has no metrics.
class report_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cct
