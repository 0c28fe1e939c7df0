#include "sollab/tower.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sollab/csv.hpp"

namespace sollab {

FiniteTowerModel::FiniteTowerModel(std::vector<double> p, std::vector<int> R)
    : p_(std::move(p)), R_(std::move(R)) {
  if (p_.empty() || p_.size() != R_.size())
    throw std::invalid_argument("tower needs matching nonempty p and R");
  double total = 0.0;
  for (size_t i = 0; i < p_.size(); ++i) {
    if (!(p_[i] > 0.0)) throw std::invalid_argument("branch masses must be > 0");
    if (R_[i] < 1) throw std::invalid_argument("return times must be >= 1");
    total += p_[i];
  }
  for (auto& x : p_) x /= total;
  offset_.resize(p_.size());
  for (size_t i = 0; i < p_.size(); ++i) {
    offset_[i] = cells_;
    cells_ += R_[i];
  }
}

int FiniteTowerModel::cell_branch(long cell) const {
  auto it = std::upper_bound(offset_.begin(), offset_.end(), cell);
  return static_cast<int>(it - offset_.begin()) - 1;
}

int FiniteTowerModel::gcd_R() const {
  int g = 0;
  for (int r : R_) g = std::gcd(g, r);
  return g;
}

double FiniteTowerModel::mean_return() const {
  double s = 0.0;
  for (size_t i = 0; i < p_.size(); ++i) s += p_[i] * R_[i];
  return s;
}

double FiniteTowerModel::r_tail(int n) const {
  double s = 0.0;
  for (size_t i = 0; i < p_.size(); ++i)
    if (R_[i] > n) s += p_[i];
  return s;
}

DensityVector uniform_probability_density(const FiniteTowerModel& m) {
  DensityVector d;
  d.v.assign(static_cast<size_t>(m.cells()), 1.0 / m.mean_return());
  return d;
}

DensityVector ground_start_density(const FiniteTowerModel& m) {
  DensityVector d;
  d.v.assign(static_cast<size_t>(m.cells()), 0.0);
  for (int i = 0; i < m.branches(); ++i)
    d.v[static_cast<size_t>(m.cell_index(i, 0))] = 1.0;  // m(Delta_0) = 1
  return d;
}

double density_mass(const FiniteTowerModel& m, const DensityVector& d) {
  double s = 0.0;
  for (int i = 0; i < m.branches(); ++i) {
    const long o = m.cell_index(i, 0);
    double branch = 0.0;
    for (int l = 0; l < m.R(i); ++l) branch += d.v[static_cast<size_t>(o + l)];
    s += branch * m.p(i);
  }
  return s;
}

DensityVector step_density(const FiniteTowerModel& m, const DensityVector& d) {
  if (d.v.size() != static_cast<size_t>(m.cells()))
    throw std::invalid_argument("density size mismatch");
  DensityVector out;
  out.v.resize(d.v.size());
  double ground = 0.0;
  for (int i = 0; i < m.branches(); ++i)
    ground += m.p(i) * d.v[static_cast<size_t>(m.cell_index(i, m.R(i) - 1))];
  for (int i = 0; i < m.branches(); ++i) {
    const long o = m.cell_index(i, 0);
    out.v[static_cast<size_t>(o)] = ground;
    for (int l = 1; l < m.R(i); ++l)
      out.v[static_cast<size_t>(o + l)] = d.v[static_cast<size_t>(o + l - 1)];
  }
  return out;
}

DensityVector invariant_density(const FiniteTowerModel& m) {
  if (m.gcd_R() > 1)
    throw PeriodicTower("gcd{R_i} > 1: no mixing invariant density");
  DensityVector d;
  d.v.assign(static_cast<size_t>(m.cells()), 1.0 / m.mean_return());
  // Fixed-point sanity: exact for the full-branch kernel.
  const DensityVector s = step_density(m, d);
  for (size_t k = 0; k < d.v.size(); ++k)
    if (std::fabs(s.v[k] - d.v[k]) > 1e-12)
      throw std::logic_error("Kac density failed the fixed-point check");
  return d;
}

double tv_distance(const FiniteTowerModel& m, const DensityVector& a,
                   const DensityVector& b) {
  double s = 0.0;
  for (int i = 0; i < m.branches(); ++i) {
    const long o = m.cell_index(i, 0);
    double branch = 0.0;
    for (int l = 0; l < m.R(i); ++l)
      branch += std::fabs(a.v[static_cast<size_t>(o + l)] -
                          b.v[static_cast<size_t>(o + l)]);
    s += branch * m.p(i);
  }
  return s;
}

std::vector<double> tv_decay(const FiniteTowerModel& m, DensityVector lambda,
                             DensityVector lambda_prime, int n_max) {
  std::vector<double> tv;
  tv.reserve(static_cast<size_t>(n_max) + 1);
  tv.push_back(tv_distance(m, lambda, lambda_prime));
  for (int n = 1; n <= n_max; ++n) {
    lambda = step_density(m, lambda);
    lambda_prime = step_density(m, lambda_prime);
    tv.push_back(tv_distance(m, lambda, lambda_prime));
  }
  return tv;
}

int hat_R(const FiniteTowerModel& m, TowerStateIndex s) {
  if (s.branch < 0 || s.branch >= m.branches() || s.level < 0 ||
      s.level >= m.R(s.branch))
    throw std::invalid_argument("invalid tower state");
  return s.level == 0 ? 0 : m.R(s.branch) - s.level;
}

double hat_R_tail(const FiniteTowerModel& m, int n) {
  // m{hat-R > n}: cells (i, l) with l > 0 and R_i - l > n, i.e. levels
  // l in [1, R_i - n - 1]; equals sum_{l > n} m{R-bar > l}.
  double s = 0.0;
  for (int i = 0; i < m.branches(); ++i) {
    const int count = m.R(i) - n - 1;
    if (count > 0) s += m.p(i) * count;
  }
  return s;
}

MixingProbe find_n0_gamma0(const FiniteTowerModel& m, int n_probe) {
  if (m.gcd_R() > 1) throw PeriodicTower("gcd{R_i} > 1");
  if (n_probe < 1) throw std::invalid_argument("n_probe must be >= 1");
  MixingProbe out;
  out.limit = 1.0 / m.mean_return();
  out.gamma0 = 0.5 * out.limit;
  // Start from m-bar restricted to the ground level.
  DensityVector d;
  d.v.assign(static_cast<size_t>(m.cells()), 0.0);
  for (int i = 0; i < m.branches(); ++i)
    d.v[static_cast<size_t>(m.cell_index(i, 0))] = 1.0;
  out.sequence.reserve(static_cast<size_t>(n_probe) + 1);
  for (int n = 0; n <= n_probe; ++n) {
    double g = 0.0;
    for (int i = 0; i < m.branches(); ++i)
      g += m.p(i) * d.v[static_cast<size_t>(m.cell_index(i, 0))];
    out.sequence.push_back(g);
    if (n < n_probe) d = step_density(m, d);
  }
  int n0 = -1;
  for (int n = n_probe; n >= 0; --n) {
    if (out.sequence[static_cast<size_t>(n)] >= out.gamma0)
      n0 = n;
    else
      break;
  }
  if (n0 < 0 || out.sequence.back() < out.gamma0)
    throw ProbeTooShort("no mixing plateau within n_probe");
  out.n0 = n0;
  return out;
}

FiniteTowerModel polynomial_tower(int branches, double alpha) {
  if (branches < 1) throw std::invalid_argument("branches must be >= 1");
  std::vector<double> p(static_cast<size_t>(branches));
  std::vector<int> R(static_cast<size_t>(branches));
  for (int i = 1; i <= branches; ++i) {
    p[static_cast<size_t>(i - 1)] =
        std::pow(static_cast<double>(i), -(alpha + 1.0));
    R[static_cast<size_t>(i - 1)] = i;
  }
  return FiniteTowerModel(std::move(p), std::move(R));
}

FiniteTowerModel bundled_n4_model() {
  return FiniteTowerModel({0.4, 0.3, 0.2, 0.1}, {1, 2, 3, 4});
}

FiniteTowerModel tower_from_return_masses(const std::vector<double>& mass_by_r,
                                          double open_mass,
                                          double* redistributed) {
  std::vector<double> p;
  std::vector<int> R;
  double closed = 0.0;
  for (size_t r = 0; r < mass_by_r.size(); ++r) {
    if (mass_by_r[r] > 0.0) {
      p.push_back(mass_by_r[r]);
      R.push_back(static_cast<int>(r));
      closed += mass_by_r[r];
    }
  }
  if (p.empty()) throw std::invalid_argument("no closed return mass");
  if (redistributed) *redistributed = open_mass;
  // Proportional redistribution of the open mass is exactly the
  // normalization performed by the model constructor.
  (void)closed;
  return FiniteTowerModel(std::move(p), std::move(R));
}

void write_tower_csv(const std::string& path, const FiniteTowerModel& m) {
  CsvWriter w(path);
  w.header({"i", "p_i", "R_i"});
  for (int i = 0; i < m.branches(); ++i) {
    w.field_int(i + 1);
    w.field_num(m.p(i));
    w.field_int(m.R(i));
    w.end_row();
  }
}

FiniteTowerModel read_tower_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open tower file: " + path);
  std::vector<double> p;
  std::vector<int> R;
  char line[256];
  bool first = true;
  while (std::fgets(line, sizeof line, f)) {
    if (first) {  // header
      first = false;
      continue;
    }
    int i = 0, r = 0;
    double pi = 0.0;
    if (std::sscanf(line, "%d,%lf,%d", &i, &pi, &r) == 3) {
      p.push_back(pi);
      R.push_back(r);
    }
  }
  std::fclose(f);
  return FiniteTowerModel(std::move(p), std::move(R));
}

void write_tv_csv(const std::string& path, const std::vector<double>& tv) {
  CsvWriter w(path);
  w.header({"n", "tv"});
  for (size_t n = 0; n < tv.size(); ++n) {
    w.field_int(static_cast<long long>(n));
    w.field_num(tv[n]);
    w.end_row();
  }
}

}  // namespace sollab
