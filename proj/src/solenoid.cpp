#include "sollab/solenoid.hpp"

#include <cmath>

namespace sollab {

Solenoid::Solenoid(SolenoidParams params)
    : params_(params), map_(params.circle) {
  if (!(params_.contraction > 0.0 && params_.contraction < 1.0))
    throw std::invalid_argument("contraction must be in (0,1)");
  if (params_.contraction + params_.amplitude > 1.0)
    throw std::invalid_argument(
        "contraction + amplitude must be <= 1 (image must stay in D^2)");
}

Point3 Solenoid::step(Point3 p) const {
  const double c = params_.contraction;
  const double a = params_.amplitude;
  const double ang = params_.angle_scale * p.x;
  return {map_.eval(p.x), c * p.y + a * std::cos(ang),
          c * p.z + a * std::sin(ang)};
}

Point3 Solenoid::fixed_point() const {
  const double c = params_.contraction;
  const double a = params_.amplitude;
  return {0.0, a / (1.0 - c), 0.0};
}

Point3 Solenoid::random_point(Rng& rng) const {
  Point3 p;
  p.x = rng.uniform(-0.5, 0.5);
  do {
    p.y = rng.uniform(-1.0, 1.0);
    p.z = rng.uniform(-1.0, 1.0);
  } while (p.y * p.y + p.z * p.z > 1.0);
  return p;
}

OrbitSample Solenoid::orbit(Point3 p0, long n, long burn_in) const {
  OrbitSample s;
  s.burn_in = burn_in;
  for (long j = 0; j < burn_in; ++j) p0 = step(p0);
  s.points.reserve(static_cast<size_t>(n));
  for (long j = 0; j < n; ++j) {
    s.points.push_back(p0);
    p0 = step(p0);
  }
  return s;
}

double Solenoid::birkhoff_average(
    const std::function<double(Point3)>& observable, Point3 p0, long n,
    long burn_in) const {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  for (long j = 0; j < burn_in; ++j) p0 = step(p0);
  double sum = 0.0;
  for (long j = 0; j < n; ++j) {
    sum += observable(p0);
    p0 = step(p0);
  }
  return sum / static_cast<double>(n);
}

void Solenoid::push_slope(double x, double& vy, double& vz) const {
  const double c = params_.contraction;
  const double a = params_.amplitude;
  const double w = params_.angle_scale;
  const double ang = w * x;
  const double fp = map_.deriv(x);
  const double ny = (c * vy - a * w * std::sin(ang)) / fp;
  const double nz = (c * vz + a * w * std::cos(ang)) / fp;
  vy = ny;
  vz = nz;
}

double Solenoid::unstable_expansion(double x, double vy, double vz) const {
  const double c = params_.contraction;
  const double a = params_.amplitude;
  const double w = params_.angle_scale;
  const double ang = w * x;
  const double fp = map_.deriv(x);
  const double iy = c * vy - a * w * std::sin(ang);
  const double iz = c * vz + a * w * std::cos(ang);
  return std::sqrt((fp * fp + iy * iy + iz * iz) /
                   (1.0 + vy * vy + vz * vz));
}

void Solenoid::leaf_slope(double x, std::span<const int> backward_branches,
                          double& vy, double& vz) const {
  // Pull x back along the itinerary, then push a horizontal vector
  // forward; the unstable cone attracts at rate contraction/f' per step.
  std::vector<double> back(backward_branches.size());
  double cur = x;
  for (size_t i = 0; i < backward_branches.size(); ++i) {
    cur = map_.inverse_branch(backward_branches[i], cur);
    back[i] = cur;
  }
  vy = 0.0;
  vz = 0.0;
  for (size_t i = back.size(); i-- > 0;) push_slope(back[i], vy, vz);
}

double Solenoid::u_hat_truncated(double x,
                                 std::span<const int> leaf_branches,
                                 std::span<const int> ref_branches,
                                 int depth) const {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  const int warm = depth + 5;
  if (static_cast<int>(leaf_branches.size()) < warm ||
      static_cast<int>(ref_branches.size()) < warm)
    throw std::invalid_argument("itineraries shorter than depth+5");

  double vy = 0.0, vz = 0.0, ry = 0.0, rz = 0.0;
  leaf_slope(x, leaf_branches.first(static_cast<size_t>(warm)), vy, vz);
  leaf_slope(x, ref_branches.first(static_cast<size_t>(warm)), ry, rz);

  double prod = 1.0;
  double prod_short = 1.0;
  double cur = x;
  for (int i = 0; i < warm; ++i) {
    const double num = unstable_expansion(cur, vy, vz);
    const double den = unstable_expansion(cur, ry, rz);
    prod *= num / den;
    if (i == depth - 1) prod_short = prod;
    push_slope(cur, vy, vz);
    push_slope(cur, ry, rz);
    cur = map_.eval(cur);
  }
  if (std::fabs(prod - prod_short) > 1e-6)
    throw DepthTooSmall("u_hat truncation not Cauchy at requested depth");
  return prod_short;
}

Observable observable_by_name(const std::string& name) {
  Observable o;
  o.name = name;
  if (name == "dist_fixed") {
    o.eta = 1.0;
    o.x_only = false;
    o.f3 = [](const Solenoid& s, Point3 p) {
      const Point3 q = s.fixed_point();
      const double dx = CircleMap::wrap(p.x - q.x);
      const double dy = p.y - q.y;
      const double dz = p.z - q.z;
      return std::sqrt(dx * dx + dy * dy + dz * dz);
    };
    return o;
  }
  if (name == "cos2pix") {
    o.eta = 1.0;
    o.x_only = true;
    o.fx = [](double x) {
      return std::cos(6.283185307179586476925286766559 * x);
    };
    o.f3 = [](const Solenoid&, Point3 p) {
      return std::cos(6.283185307179586476925286766559 * p.x);
    };
    return o;
  }
  if (name == "sin2pix") {
    // odd observable: the symmetric family has sin-mean 0, matching its
    // value at the neutral point, so trap sojourns do not skew sums
    o.eta = 1.0;
    o.x_only = true;
    o.fx = [](double x) {
      return std::sin(6.283185307179586476925286766559 * x);
    };
    o.f3 = [](const Solenoid&, Point3 p) {
      return std::sin(6.283185307179586476925286766559 * p.x);
    };
    return o;
  }
  if (name == "indicator_halfcircle") {
    // Indicator of the half circle |x| < 1/4 around the neutral point.
    o.eta = 1.0;  // tag only; indicators are not Holder, exploratory use
    o.x_only = true;
    o.fx = [](double x) { return std::fabs(x) < 0.25 ? 1.0 : 0.0; };
    o.f3 = [](const Solenoid&, Point3 p) {
      return std::fabs(p.x) < 0.25 ? 1.0 : 0.0;
    };
    return o;
  }
  if (name == "lipschitz_xy") {
    o.eta = 1.0;
    o.x_only = false;
    o.f3 = [](const Solenoid&, Point3 p) {
      return std::fabs(CircleMap::wrap(p.x)) + 0.5 * p.y + 0.25 * p.z;
    };
    return o;
  }
  throw std::invalid_argument("unknown observable: " + name);
}

}  // namespace sollab
