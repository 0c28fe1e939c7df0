#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sollab/tower.hpp"

namespace sollab {

struct InsufficientSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CellBudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExtractionNegative : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PairState {
  TowerStateIndex s;
  TowerStateIndex s_prime;
};

// One product-chain history: alternating stopping times tau_1 < tau_2 <
// ..., the simultaneous return time T, and the T_i recursion up to the
// horizon.
struct CouplingRecord {
  std::vector<long> taus;
  long T = -1;  // -1: censored before the first simultaneous return
  std::vector<long> Ts;
  std::uint64_t seed = 0;
  bool censored = false;
};

struct HorizonExceeded : std::runtime_error {
  HorizonExceeded(std::string what, CouplingRecord rec)
      : std::runtime_error(std::move(what)), partial(std::move(rec)) {}
  CouplingRecord partial;
};

// Runs the product chain from (x,x') ~ lambda x lambda', recording the
// alternating stopping times (reads n0 steps after each tau; the read
// coordinate falls to the ground exactly at the next tau), T = first
// tau_i (i >= 2) with both coordinates on the ground, and the T_i
// recursion T_i = T_{i-1} + T o (FxF)^{T_{i-1}}.
CouplingRecord simulate_pair(const FiniteTowerModel& m,
                             const DensityVector& lambda,
                             const DensityVector& lambda_prime, int n0,
                             long horizon, std::uint64_t seed);

struct TailEstimate {
  std::vector<double> p_hat;  // P{T > n}, censored samples kept in the tail
  std::vector<double> lo, hi;  // Wilson 95% band
  long censored = 0;
  long samples = 0;
};

TailEstimate estimate_T_tail(const FiniteTowerModel& m,
                             const DensityVector& lambda,
                             const DensityVector& lambda_prime, int n0,
                             long samples, long horizon, std::uint64_t seed);

struct E1E4Report {
  double eps0_hat = 1.0;   // min conditional simultaneous-return frequency
  double k0_hat = 0.0;     // max conditional gap-tail ratio vs m{hat-R > n}
  double k2_hat = 0.0;     // max T_i-increment tail ratio vs (m x m){T > n}
  long bins_used = 0;
  long bins_flagged = 0;   // below the 50-sample threshold, excluded
  long samples = 0;
  long censored = 0;
};

E1E4Report verify_E1_E4(const FiniteTowerModel& m, const DensityVector& lambda,
                        const DensityVector& lambda_prime, int n0,
                        long samples, long horizon, std::uint64_t seed);

// Exact product-chain mass flow with the density-extraction sequence.
// Piecewise-constant product densities make the extraction factor exactly
// (1 - eps) per completed simultaneous return, so the flow is evolved as
// merged mass packets keyed by (pair state, stopping-time machine phase,
// extraction depth).
struct ExtractionResult {
  int i_max = 0;
  double eps = 0.0;
  double eps1_hat = 0.0;  // measured cellwise contraction = eps
  std::vector<double> sup_ratio;        // per depth i >= 1
  std::vector<double> extracted_mass;   // per depth i >= 1
  double matching_residual = 0.0;       // eq. (dens arrumada) imbalance
  double mass_ledger_residual = 0.0;    // extracted + residual - 1
  std::vector<std::vector<double>> depth_mass;  // [i][n] P{T_i <= n < T_{i+1}}
  std::vector<double> phi_n_integral;   // exact int Phi_n d(m x m)
  std::vector<double> e3_bound;         // assembled RHS of (E3)
  double k1 = 0.0;
};

ExtractionResult run_extraction(const FiniteTowerModel& m,
                                const DensityVector& phi,
                                const DensityVector& phi_prime, double eps,
                                int i_max, int n0, long horizon);

void write_coupling_tail_csv(const std::string& path, const TailEstimate& t,
                             long horizon);
void write_e3_csv(const std::string& path, const std::vector<double>& tv,
                  const std::vector<double>& bound);
void write_extraction_csv(const std::string& path, const ExtractionResult& r);

}  // namespace sollab
