#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sollab/solenoid.hpp"

namespace sollab {

struct SeriesTooShort : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonpositiveValues : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateVariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorrelationSeries {
  std::vector<int> lags;
  std::vector<double> c_hat;
  std::vector<double> stderr_;
  long orbit_len = 0;
  int ensemble = 0;
  long burn_in = 0;
  long long evaluations = 0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 0.0;
};

struct CLTReport {
  double sigma2 = 0.0;
  double ks = 0.0;
  double p_value = 0.0;
  int ensemble = 0;
  long orbit_len = 0;
  int gk_cutoff = 0;
  std::vector<std::string> flags;
  std::vector<double> sums;  // centered, normalized by sqrt(n)
};

struct CorrConfig {
  long orbit_len = 1 << 20;
  int ensemble = 8;
  long burn_in = 1 << 16;
  std::uint64_t seed = 1;
  bool quotient = true;  // x-only observables run on the circle factor
};

// Correlation estimates |avg(phi o g^n . psi) - avg(phi) avg(psi)| at the
// requested lags, with jackknife standard errors over orbit blocks of
// length 10*max(lag).
CorrelationSeries correlation(const Solenoid& s, const Observable& phi,
                              const Observable& psi,
                              const std::vector<int>& lags,
                              const CorrConfig& cfg);

// Least squares on (log n, log v). Throws NonpositiveValues when a value
// in the window is not positive.
FitResult fit_power_law(const std::vector<double>& ns,
                        const std::vector<double>& vals);
FitResult fit_power_law_window(const std::vector<int>& ns,
                               const std::vector<double>& vals, int n_lo,
                               int n_hi);

// Exploratory stretched-exponential fit: log v = log C - c n^eta by
// least squares at fixed eta. slope carries -c.
FitResult fit_stretched_exponential(const std::vector<double>& ns,
                                    const std::vector<double>& vals,
                                    double eta);

struct CltConfig {
  long gk_orbit_len = 1 << 21;
  int gk_max_lag = 256;
  long gk_burn_in = 1 << 16;
};

// Central limit test: M Lebesgue-random starts, normalized sums after
// centering by the ensemble mean, Green-Kubo variance from a long orbit,
// Kolmogorov-Smirnov against Normal(0, sigma^2).
CLTReport clt_test(const Solenoid& s, const Observable& phi, int M, long n,
                   std::uint64_t seed, const CltConfig& cfg = {});

// Same pipeline fed with i.i.d. standard normals (control run).
CLTReport clt_gaussian_control(int M, long n, std::uint64_t seed,
                               const CltConfig& cfg = {});

// Green-Kubo variance of a series: var + 2 sum of autocovariances up to
// the first lag whose autocovariance drops below two standard errors.
double green_kubo_sigma2(const std::vector<double>& series, int max_lag,
                         int* cutoff = nullptr);

double kolmogorov_p_value(double d_stat, int m);

void write_correlation_csv(const std::string& path,
                           const CorrelationSeries& c);
void write_clt_csv(const std::string& path, const CLTReport& r);
void write_clt_report_json(const std::string& path, const CLTReport& r);

}  // namespace sollab
