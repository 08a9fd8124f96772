// Lets Eigen matrices hold exact rationals.

#ifndef KAC_RATIONAL_EIGEN_HPP
#define KAC_RATIONAL_EIGEN_HPP

#include <limits>

#include <Eigen/Core>
#include <boost/rational.hpp>

namespace Eigen {

template <typename I>
struct NumTraits<boost::rational<I>> : GenericNumTraits<boost::rational<I>> {
  using Real = boost::rational<I>;
  using NonInteger = boost::rational<I>;
  using Literal = boost::rational<I>;
  using Nested = boost::rational<I>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 20,
    MulCost = 20
  };
  static Real epsilon() { return Real(0); }
  static Real dummy_precision() { return Real(0); }
  static Real highest() { return Real(std::numeric_limits<I>::max()); }
  static Real lowest() { return Real(std::numeric_limits<I>::lowest() + 1); }
  static int digits10() { return 0; }
};

}  // namespace Eigen

#endif  // KAC_RATIONAL_EIGEN_HPP
