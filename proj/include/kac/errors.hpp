#ifndef KAC_ERRORS_HPP
#define KAC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kac {

/// A computation exceeded a configured size or attempt cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data (an event log, a path file) is internally inconsistent.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical scheme left its domain of validity (negative masses, insufficient cutoff).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kac

#endif  // KAC_ERRORS_HPP
