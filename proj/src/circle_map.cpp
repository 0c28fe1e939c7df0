#include "sollab/circle_map.hpp"

#include <cmath>

namespace sollab {

CircleMap::CircleMap(CircleMapParams params) : params_(params) {
  if (!(params_.gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
  if (params_.degree < 2) throw std::invalid_argument("degree must be >= 2");
  dm1_ = static_cast<double>(params_.degree - 1);
  if (params_.gamma == 0.5)
    pow_kind_ = Pow::Sqrt;
  else if (params_.gamma == 1.0)
    pow_kind_ = Pow::Linear;
  else
    pow_kind_ = Pow::General;

  const int d = params_.degree;
  const int kmax = d / 2;  // number of positive lift boundaries beyond 0
  q_.resize(kmax + 1);
  q_[0] = 0.0;
  for (int k = 1; k <= kmax; ++k)
    q_[k] = solve_lift(static_cast<double>(k), q_[k - 1], 0.5);
  if (d % 2 == 0) q_[kmax] = 0.5;  // lift(1/2) = d/2 exactly
}

double CircleMap::pow_gamma(double u) const {
  switch (pow_kind_) {
    case Pow::Sqrt:
      return std::sqrt(u);
    case Pow::Linear:
      return u;
    default:
      return std::pow(u, params_.gamma);
  }
}

long double CircleMap::pow_gamma_ld(long double u) const {
  switch (pow_kind_) {
    case Pow::Sqrt:
      return sqrtl(u);
    case Pow::Linear:
      return u;
    default:
      return powl(u, static_cast<long double>(params_.gamma));
  }
}

double CircleMap::lift(double x) const {
  const double ax = std::fabs(x);
  return x * (1.0 + dm1_ * pow_gamma(2.0 * ax));
}

double CircleMap::lift_deriv(double x) const {
  const double ax = std::fabs(x);
  return 1.0 + dm1_ * (1.0 + params_.gamma) * pow_gamma(2.0 * ax);
}

double CircleMap::eval(double x) const { return wrap(lift(x)); }

double CircleMap::deriv(double x) const { return lift_deriv(x); }

long double CircleMap::eval_ld(long double x) const {
  const long double ax = fabsl(x);
  const long double t =
      x * (1.0L + static_cast<long double>(dm1_) * pow_gamma_ld(2.0L * ax));
  return t - floorl(t + 0.5L);
}

double CircleMap::solve_lift(double target, double lo, double hi) const {
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (lift(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return (std::fabs(lift(lo) - target) <= std::fabs(lift(hi) - target)) ? lo
                                                                        : hi;
}

bool CircleMap::branch_straddles_seam(int branch) const {
  const int d = params_.degree;
  return (d % 2 == 1) && branch == (d - 1) / 2;
}

std::pair<double, double> CircleMap::branch_interval(int branch) const {
  const int d = params_.degree;
  if (branch < 0 || branch >= d) throw std::invalid_argument("bad branch id");
  const int npos = (d % 2 == 0) ? d / 2 : (d - 1) / 2;
  if (branch < npos) return {q_[branch], q_[branch + 1]};
  if (branch_straddles_seam(branch)) {
    const int k = (d - 1) / 2;
    return {q_[k], -q_[k]};  // crosses the seam
  }
  const int i = d - 1 - branch;
  return {-q_[i + 1], -q_[i]};
}

double CircleMap::inverse_branch(int branch, double y) const {
  const int d = params_.degree;
  if (branch < 0 || branch >= d) throw OutOfBranchImage("bad branch id");
  if (!(y >= -0.5 && y < 0.5))
    throw OutOfBranchImage("point not on the circle chart [-1/2,1/2)");
  const double u = y - std::floor(y);  // in [0,1)
  const int npos = (d % 2 == 0) ? d / 2 : (d - 1) / 2;
  if (branch < npos) {
    const double t = static_cast<double>(branch) + u;
    return solve_lift(t, q_[branch], q_[branch + 1]);
  }
  if (branch_straddles_seam(branch)) {
    const int k = (d - 1) / 2;
    if (u < 0.5) return solve_lift(static_cast<double>(k) + u, q_[k], 0.5);
    return solve_lift(u - static_cast<double>(k + 1), -0.5, -q_[k]);
  }
  const int i = d - 1 - branch;
  const double t = u - static_cast<double>(i + 1);
  return solve_lift(t, -q_[i + 1], -q_[i]);
}

double CircleMap::preimage_in_base(double y) const {
  const double u = y - std::floor(y);
  return solve_lift(u, 0.0, q_[1]);
}

BoundarySequences CircleMap::boundary_sequences(int n_max) const {
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  BoundarySequences b;
  b.xs.resize(n_max + 1);
  b.xs_prime.resize(n_max + 1);
  b.xs[0] = q_[1];
  b.xs_prime[0] = -q_[1];
  // x_{n+1} solves lift(x) = x_n inside I_1 (x_0 may sit on the seam for
  // d=2, where inverse_branch's chart check would reject it).
  for (int n = 0; n < n_max; ++n) {
    b.xs[n + 1] = solve_lift(b.xs[n], 0.0, q_[1]);
    b.xs_prime[n + 1] = solve_lift(b.xs_prime[n], -q_[1], 0.0);
  }
  return b;
}

}  // namespace sollab
