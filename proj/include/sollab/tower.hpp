#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sollab {

struct PeriodicTower : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProbeTooShort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Finite full-branch Gibbs-Markov tower: branches i = 1..N with base mass
// p_i (sum 1) and return time R_i. Each branch top maps onto the whole
// ground level with mass proportional to p_j, so piecewise-constant
// densities are preserved exactly and transfer iteration is exact linear
// algebra.
class FiniteTowerModel {
 public:
  FiniteTowerModel(std::vector<double> p, std::vector<int> R);

  int branches() const { return static_cast<int>(p_.size()); }
  double p(int i) const { return p_[i]; }
  int R(int i) const { return R_[i]; }
  const std::vector<double>& masses() const { return p_; }
  const std::vector<int>& return_times() const { return R_; }

  long cells() const { return cells_; }
  long cell_index(int branch, int level) const {
    return offset_[branch] + level;
  }
  int cell_branch(long cell) const;
  int cell_level(long cell) const { return static_cast<int>(cell - offset_[cell_branch(cell)]); }
  // m-bar mass of one cell (the branch base mass).
  double cell_mass(long cell) const { return p_[cell_branch(cell)]; }

  int gcd_R() const;
  double mean_return() const;  // sum p_i R_i
  // m-bar tail of the level function: m{R-bar > n} = sum_{R_i > n} p_i.
  double r_tail(int n) const;

 private:
  std::vector<double> p_;
  std::vector<int> R_;
  std::vector<long> offset_;
  long cells_ = 0;
};

// Piecewise-constant density w.r.t. m-bar: one value per tower cell.
struct DensityVector {
  std::vector<double> v;
};

struct TowerStateIndex {
  int branch = 0;
  int level = 0;
};

DensityVector uniform_probability_density(const FiniteTowerModel& m);
// Normalized m-bar restricted to the ground level (an out-of-equilibrium
// start; the constant density is already the Kac equilibrium).
DensityVector ground_start_density(const FiniteTowerModel& m);
double density_mass(const FiniteTowerModel& m, const DensityVector& d);

// Exact pushforward under the tower map: interior levels shift up, tops
// redistribute onto the ground proportionally to branch masses.
DensityVector step_density(const FiniteTowerModel& m, const DensityVector& d);

// Kac density: uniform value 1/(sum p_i R_i) per unit of m-bar mass.
// Throws PeriodicTower when gcd{R_i} > 1.
DensityVector invariant_density(const FiniteTowerModel& m);

// L1 distance of densities w.r.t. m-bar (the total variation of the
// signed measure difference, as used throughout).
double tv_distance(const FiniteTowerModel& m, const DensityVector& a,
                   const DensityVector& b);

// Exact |F^n_* lambda - F^n_* lambda'| for n = 0..n_max.
std::vector<double> tv_decay(const FiniteTowerModel& m, DensityVector lambda,
                             DensityVector lambda_prime, int n_max);

// hat-R: remaining time to the ground level.
int hat_R(const FiniteTowerModel& m, TowerStateIndex s);
// m-bar{hat-R > n} = sum_{l > n} m-bar{R-bar > l}.
double hat_R_tail(const FiniteTowerModel& m, int n);

struct MixingProbe {
  int n0 = 0;
  double gamma0 = 0.0;
  double limit = 0.0;
  std::vector<double> sequence;  // m(F^{-n} Delta_0 cap Delta_0), n = 0..
};

// Computes m(F^{-n}(Delta_0) cap Delta_0) exactly for n <= n_probe and
// returns the smallest n0 such that the mass stays >= gamma0 (half the
// mixing limit) on [n0, n_probe].
MixingProbe find_n0_gamma0(const FiniteTowerModel& m, int n_probe);

// Synthetic tower with R_i = i and p_i proportional to i^{-(alpha+1)},
// so that m{R > n} ~ n^{-alpha}.
FiniteTowerModel polynomial_tower(int branches, double alpha);
// The bundled 4-branch test model.
FiniteTowerModel bundled_n4_model();

// Build a tower from induced-scheme return-time data: closed-cell masses
// bucketed by R*, open mass redistributed proportionally across retained
// branches. redistributed (if non-null) receives the open mass.
FiniteTowerModel tower_from_return_masses(const std::vector<double>& mass_by_r,
                                          double open_mass,
                                          double* redistributed = nullptr);

void write_tower_csv(const std::string& path, const FiniteTowerModel& m);
FiniteTowerModel read_tower_csv(const std::string& path);
void write_tv_csv(const std::string& path, const std::vector<double>& tv);

}  // namespace sollab
