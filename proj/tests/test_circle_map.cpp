#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sollab/circle_map.hpp"
#include "sollab/rng.hpp"

using namespace sollab;

namespace {
// Independent oracle: plain bisection on the closed-form default branch
// x (1 + (2x)^g) = y, kept separate from the lift machinery it checks.
double default_branch_root(double g, double y) {
  double lo = 0.0, hi = 0.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid * (1.0 + std::pow(2.0 * mid, g)) < y)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}
}  // namespace

TEST_CASE("eval: indifferent fixed point and default formula") {
  CircleMap f({0.5, 2});
  CHECK(f.eval(0.0) == 0.0);
  CHECK(f.eval(0.25) == doctest::Approx(0.25 * (1.0 + std::sqrt(0.5)))
                            .epsilon(1e-15));
  // branch endpoint maps to ~0 on the circle
  CHECK(std::fabs(f.eval(0.5 - 1e-9)) < 1e-8);
  // oddness of the default family
  CHECK(f.eval(-0.25) == doctest::Approx(-f.eval(0.25)).epsilon(1e-15));
}

TEST_CASE("deriv: value at 0, closed form, finite differences") {
  CircleMap f({0.5, 2});
  CHECK(f.deriv(0.0) == 1.0);
  CHECK(f.deriv(0.25) ==
        doctest::Approx(1.0 + 1.5 * std::sqrt(0.5)).epsilon(1e-15));
  Rng rng(11);
  const double h = 1e-7;
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-0.45, 0.45);
    const double fd =
        (f.lift(x + h) - f.lift(x - h)) / (2.0 * h);  // lift avoids the wrap
    CHECK(std::fabs(fd - f.deriv(x)) < 1e-6);
  }
  // f' > 1 off zero and continuous across the seam
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-0.5, 0.5);
    if (x != 0.0) CHECK(f.deriv(x) > 1.0);
  }
  CHECK(std::fabs(f.deriv(0.5 - 1e-12) - f.deriv(-0.5 + 1e-12)) < 1e-5);
}

TEST_CASE("inverse_branch: fixed point, round trips, x1 value") {
  CircleMap f({0.5, 2});
  CHECK(f.inverse_branch(0, 0.0) == 0.0);
  Rng rng(7);
  for (int d : {2, 3, 4}) {
    CircleMap g({0.5, d});
    for (int i = 0; i < 1000 / d; ++i) {
      const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
      const double y = rng.uniform(-0.5, 0.5);
      const double x = g.inverse_branch(b, y);
      CHECK(std::fabs(CircleMap::wrap(g.eval(x) - y)) < 1e-12);
      // preimage lies in the branch domain
      auto iv = g.branch_interval(b);
      if (!g.branch_straddles_seam(b)) {
        CHECK(x >= iv.first - 1e-15);
        CHECK(x <= iv.second + 1e-15);
      }
    }
  }
  // x1 = inverse on I_1 of x0 = 1/2 for gamma = 1/2
  const double x1 = f.preimage_in_base(0.5);
  const double oracle = default_branch_root(0.5, 0.5);
  CHECK(std::fabs(x1 - oracle) < 1e-11);
  CHECK(x1 == doctest::Approx(0.2849).epsilon(2e-4));
  CHECK_THROWS_AS(f.inverse_branch(0, 0.75), OutOfBranchImage);
  CHECK_THROWS_AS(f.inverse_branch(5, 0.0), OutOfBranchImage);
}

TEST_CASE("eval is monotone on each fundamental domain") {
  Rng rng(3);
  for (int d : {2, 3, 5}) {
    CircleMap g({0.6, d});
    for (int b = 0; b < d; ++b) {
      auto iv = g.branch_interval(b);
      const double len = g.branch_straddles_seam(b)
                             ? (0.5 - iv.first) + (iv.second + 0.5)
                             : iv.second - iv.first;
      double prev_lift = -1e300;
      for (int i = 0; i < 1000; ++i) {
        double x = iv.first + len * (static_cast<double>(i) / 1000.0);
        if (x >= 0.5) x -= 1.0;
        // compare in lift coordinates, which are monotone by design
        const double lx = g.lift(x);
        const double adj =
            (g.branch_straddles_seam(b) && x < 0.0) ? lx + d : lx;
        CHECK(adj >= prev_lift - 1e-14);
        prev_lift = adj;
      }
    }
  }
}

TEST_CASE("boundary sequences: recursion, monotonicity, masses") {
  CircleMap f({0.5, 2});
  const int n_max = 2000;
  const BoundarySequences b = f.boundary_sequences(n_max);
  CHECK(b.xs[0] == 0.5);
  CHECK(b.xs_prime[0] == -0.5);
  for (int n = 0; n < n_max; ++n) {
    CHECK(b.xs[n + 1] < b.xs[n]);
    CHECK(std::fabs(CircleMap::wrap(f.eval(b.xs[n + 1]) - b.xs[n])) < 1e-12);
    CHECK(std::fabs(CircleMap::wrap(f.eval(b.xs_prime[n + 1]) -
                                    b.xs_prime[n])) < 1e-12);
    // symmetric family: x'_n = -x_n
    CHECK(b.xs_prime[n] == doctest::Approx(-b.xs[n]).epsilon(1e-12));
    CHECK(b.xs[n] - b.xs[n + 1] > 0.0);
  }
  // telescoping mass of the J_n
  double total = 0.0;
  for (int n = 0; n < n_max; ++n) total += b.xs[n] - b.xs[n + 1];
  CHECK(total == doctest::Approx(b.xs[0] - b.xs[n_max]).epsilon(1e-13));
}

TEST_CASE("boundary asymptotics x_{2n}/x_n -> 2^{-1/gamma}") {
  for (double g : {0.4, 0.5, 0.6}) {
    CircleMap f({g, 2});
    const BoundarySequences b = f.boundary_sequences(2000);
    const double target = std::pow(2.0, -1.0 / g);
    for (int n : {1000, 600}) {
      const double ratio = b.xs[2 * n] / b.xs[n];
      CHECK(std::fabs(ratio - target) < 0.1 * target);
    }
  }
}
