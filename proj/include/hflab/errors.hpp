#pragma once

#include <stdexcept>
#include <string>

namespace hflab {

/// Precondition or argument violation (bad sizes, out-of-range exponents, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A set of orbitals failed the orthonormality or independence test.
class OrthonormalityError : public std::runtime_error {
 public:
  OrthonormalityError(const std::string& what, int row = -1, int col = -1, double entry = 0.0)
      : std::runtime_error(what), row_(row), col_(col), entry_(entry) {}
  int row() const noexcept { return row_; }
  int col() const noexcept { return col_; }
  /// Offending Gram-matrix entry.
  double entry() const noexcept { return entry_; }

 private:
  int row_;
  int col_;
  double entry_;
};

/// The propagator lost orthonormality beyond the abort threshold (time step too large).
class DriftAlarm : public std::runtime_error {
 public:
  DriftAlarm(const std::string& what, double drift) : std::runtime_error(what), drift_(drift) {}
  double drift() const noexcept { return drift_; }

 private:
  double drift_;
};

/// Density leaked out of the central half box; position commutators are not meaningful.
class LocalizationError : public std::runtime_error {
 public:
  LocalizationError(const std::string& what, double inner_mass)
      : std::runtime_error(what), inner_mass_(inner_mass) {}
  double inner_mass() const noexcept { return inner_mass_; }

 private:
  double inner_mass_;
};

/// Two independent computation routes disagree: an implementation bug, not a user error.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Snapshot or config file could not be read or is malformed.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hflab
