#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sollab/circle_map.hpp"
#include "sollab/rng.hpp"

namespace sollab {

// Skew product g on the solid torus S^1 x D^2:
//   g(x,y,z) = (f(x), c*y + a*cos(angle_scale*x), c*z + a*sin(angle_scale*x))
// with c = 1/10, a = 1/2 by default. The circle chart is [-1/2,1/2), so
// angle_scale = 2*pi keeps g continuous across the seam.
struct SolenoidParams {
  CircleMapParams circle;
  double contraction = 0.1;
  double amplitude = 0.5;
  double angle_scale = 6.283185307179586476925286766559;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct OrbitSample {
  std::vector<Point3> points;
  std::uint64_t seed = 0;
  long burn_in = 0;
};

struct DepthTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Solenoid {
 public:
  explicit Solenoid(SolenoidParams params);

  const SolenoidParams& params() const { return params_; }
  const CircleMap& circle() const { return map_; }

  Point3 step(Point3 p) const;
  // Fixed point over x=0: (0, a/(1-c), 0) for the default angle origin.
  Point3 fixed_point() const;

  // Lebesgue-random point of S^1 x D^2.
  Point3 random_point(Rng& rng) const;

  OrbitSample orbit(Point3 p0, long n, long burn_in) const;

  double birkhoff_average(const std::function<double(Point3)>& observable,
                          Point3 p0, long n, long burn_in) const;

  // Push a tangent slope vector (vy,vz over dx=1) forward one step at x.
  void push_slope(double x, double& vy, double& vz) const;
  // Norm expansion factor along direction (1, vy, vz) at the point with
  // circle coordinate x.
  double unstable_expansion(double x, double vy, double vz) const;

  // Truncated u-hat product of the natural-measure construction:
  //   u(x) = prod_i det Dg^u(g^i p) / det Dg^u(g^i p_ref)
  // where p and p_ref lie on the same vertical (stable) fiber but on
  // unstable leaves identified by backward branch itineraries. The
  // unstable direction is obtained by pulling x back `depth` steps along
  // the itinerary and pushing a horizontal tangent vector forward.
  // Throws DepthTooSmall if truncations at depth and depth+5 differ by
  // more than 1e-6.
  double u_hat_truncated(double x, std::span<const int> leaf_branches,
                         std::span<const int> ref_branches, int depth) const;

  // Unstable slope at x for the leaf given by a backward itinerary.
  void leaf_slope(double x, std::span<const int> backward_branches,
                  double& vy, double& vz) const;

 private:
  SolenoidParams params_;
  CircleMap map_;
};

// Named observables for the statistics layer. eta is the Holder tag;
// x_only marks observables measurable on the circle factor alone
// (eligible for the quotient estimator).
struct Observable {
  std::string name;
  double eta = 1.0;
  bool x_only = false;
  std::function<double(const Solenoid&, Point3)> f3;
  std::function<double(double)> fx;  // set when x_only
};

// Known names: dist_fixed, cos2pix, indicator_halfcircle, lipschitz_xy.
Observable observable_by_name(const std::string& name);

}  // namespace sollab
