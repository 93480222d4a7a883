#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace varex {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Deterministic pairwise (cascade) summation.  Order of the input fixes the
// result bit-for-bit; error grows like log(n) rather than n.
double pairwise_sum(std::span<const double> xs);

// L^q aggregation of weighted magnitudes: (sum w * |v|^q)^(1/q), with q = inf
// meaning the (weighted-support) supremum of |v|.  Terms are accumulated in
// insertion order and reduced pairwise.
class LqAccumulator {
 public:
  explicit LqAccumulator(double q);
  void add(double weight, double magnitude);
  double value() const;
  double q() const { return q_; }

 private:
  double q_;
  double sup_ = 0.0;
  std::vector<double> terms_;
};

// Shortest decimal that round-trips a double exactly (17 significant digits).
std::string g17(double x);

}  // namespace varex
