#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sollab {

// Degree-d circle map with an indifferent fixed point at 0.
//
// The circle is parameterized as [-1/2, 1/2) with 0 at the chart center.
// The map is defined through the odd lift
//   L(x) = x * (1 + (d-1) * (2|x|)^gamma),   L : [-1/2,1/2] -> [-d/2,d/2],
// and f = L mod 1. For the default degree d=2 this is
//   f(x) = x * (1 + (2x)^gamma)  on [0,1/2],  mirrored on [-1/2,0].
// f(0)=0, f'(0)=1 and f'>1 elsewhere; each fundamental domain is mapped
// monotonically onto the full circle.
struct CircleMapParams {
  double gamma = 0.5;
  int degree = 2;
};

struct OutOfBranchImage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Boundary sequences x_n in I_1 and x'_n in I_d with f(x_{n+1}) = x_n,
// f(x'_{n+1}) = x'_n. xs[0] is the nonzero endpoint of I_1; xs_prime
// holds the (negative) mirror values.
struct BoundarySequences {
  std::vector<double> xs;
  std::vector<double> xs_prime;
};

class CircleMap {
 public:
  explicit CircleMap(CircleMapParams params);

  const CircleMapParams& params() const { return params_; }
  double gamma() const { return params_.gamma; }
  int degree() const { return params_.degree; }

  // f(x) for x in [-1/2, 1/2); total function, exact fixed point at 0.
  double eval(double x) const;
  // f'(x) = 1 + (d-1)(1+gamma)(2|x|)^gamma.
  double deriv(double x) const;
  // long double evaluation, used by high-amplification forward checks.
  long double eval_ld(long double x) const;

  // Monotone lift and its derivative.
  double lift(double x) const;
  double lift_deriv(double x) const;

  // Unique preimage of y in the fundamental domain of `branch`
  // (branches indexed 0..d-1 in circular order starting at 0+).
  // Bisection to the last representable bracket.
  double inverse_branch(int branch, double y) const;

  // Branch-0 preimage accepting any real representative of the circle
  // point (in particular the seam value 1/2 used as an I_1 endpoint).
  double preimage_in_base(double y) const;

  // Fundamental domain of a branch as (start, end) in forward circular
  // order. For odd d the middle branch crosses the seam (start > end).
  std::pair<double, double> branch_interval(int branch) const;
  bool branch_straddles_seam(int branch) const;

  // Nonzero endpoint of I_1 (equals 1/2 for d=2).
  double x0() const { return q_[1]; }

  BoundarySequences boundary_sequences(int n_max) const;

  static double wrap(double t) { return t - std::floor(t + 0.5); }

 private:
  double pow_gamma(double u) const;
  long double pow_gamma_ld(long double u) const;
  // Solve lift(x) = target on [lo, hi] (lift increasing).
  double solve_lift(double target, double lo, double hi) const;

  CircleMapParams params_;
  double dm1_;  // degree - 1
  // Positive branch boundaries q_[0]=0 < q_[1] < ... (lift values 0,1,2,...).
  std::vector<double> q_;
  enum class Pow { Sqrt, Linear, General } pow_kind_;
};

}  // namespace sollab
