#include "sollab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "sollab/csv.hpp"
#include "sollab/rng.hpp"

namespace sollab {

namespace {

// Streaming lag-product accumulator with per-block partial sums for the
// delete-one-block jackknife.
struct BlockAccumulator {
  std::vector<int> lags;
  long block_len;
  int max_lag;
  std::vector<double> ring;  // recent psi values
  long t = 0;
  std::vector<double> cur_prod;
  double cur_phi = 0.0, cur_psi = 0.0;
  long cur_count = 0;
  std::vector<std::vector<double>> bp;  // block x lag products
  std::vector<double> bphi, bpsi;
  std::vector<long> bn;

  BlockAccumulator(std::vector<int> lags_, long block_len_)
      : lags(std::move(lags_)), block_len(block_len_) {
    max_lag = lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end());
    ring.assign(static_cast<size_t>(max_lag) + 1, 0.0);
    cur_prod.assign(lags.size(), 0.0);
  }

  void push(double phi_v, double psi_v) {
    const int W = max_lag + 1;
    ring[static_cast<size_t>(t % W)] = psi_v;
    if (t >= max_lag) {
      for (size_t j = 0; j < lags.size(); ++j)
        cur_prod[j] += phi_v * ring[static_cast<size_t>((t - lags[j]) % W)];
      cur_phi += phi_v;
      cur_psi += psi_v;
      ++cur_count;
      if (cur_count == block_len) flush();
    }
    ++t;
  }

  void flush() {
    if (cur_count == 0) return;
    bp.push_back(cur_prod);
    bphi.push_back(cur_phi);
    bpsi.push_back(cur_psi);
    bn.push_back(cur_count);
    std::fill(cur_prod.begin(), cur_prod.end(), 0.0);
    cur_phi = cur_psi = 0.0;
    cur_count = 0;
  }

  void new_series() {
    flush();
    t = 0;
  }
};

}  // namespace

CorrelationSeries correlation(const Solenoid& s, const Observable& phi,
                              const Observable& psi,
                              const std::vector<int>& lags,
                              const CorrConfig& cfg) {
  if (lags.empty()) throw std::invalid_argument("lags must be nonempty");
  for (size_t i = 1; i < lags.size(); ++i)
    if (lags[i] <= lags[i - 1])
      throw std::invalid_argument("lags must be strictly increasing");
  const int max_lag = lags.back();
  if (cfg.orbit_len < 100L * max_lag)
    throw SeriesTooShort("orbit length must be >= 100 * max(lag)");
  const bool quotient = cfg.quotient && phi.x_only && psi.x_only;
  const long block_len = 10L * std::max(1, max_lag);

  BlockAccumulator acc(lags, block_len);
  long long evals = 0;
  const CircleMap& cm = s.circle();
  for (int e = 0; e < cfg.ensemble; ++e) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(e) + 1);
    if (quotient) {
      double x = rng.uniform(-0.5, 0.5);
      for (long j = 0; j < cfg.burn_in; ++j) x = cm.eval(x);
      for (long j = 0; j < cfg.orbit_len; ++j) {
        acc.push(phi.fx(x), psi.fx(x));
        x = cm.eval(x);
      }
    } else {
      Point3 p = s.random_point(rng);
      for (long j = 0; j < cfg.burn_in; ++j) p = s.step(p);
      for (long j = 0; j < cfg.orbit_len; ++j) {
        acc.push(phi.f3(s, p), psi.f3(s, p));
        p = s.step(p);
      }
    }
    evals += cfg.burn_in + cfg.orbit_len;
    acc.new_series();
  }

  CorrelationSeries out;
  out.lags = lags;
  out.orbit_len = cfg.orbit_len;
  out.ensemble = cfg.ensemble;
  out.burn_in = cfg.burn_in;
  out.evaluations = evals;

  const size_t nb = acc.bp.size();
  if (nb < 4) throw SeriesTooShort("not enough blocks for the jackknife");
  double tot_phi = 0.0, tot_psi = 0.0;
  long tot_n = 0;
  for (size_t b = 0; b < nb; ++b) {
    tot_phi += acc.bphi[b];
    tot_psi += acc.bpsi[b];
    tot_n += acc.bn[b];
  }
  for (size_t j = 0; j < lags.size(); ++j) {
    double tot_prod = 0.0;
    for (size_t b = 0; b < nb; ++b) tot_prod += acc.bp[b][j];
    const double full = tot_prod / static_cast<double>(tot_n) -
                        (tot_phi / tot_n) * (tot_psi / tot_n);
    std::vector<double> jk(nb);
    double jk_mean = 0.0;
    for (size_t b = 0; b < nb; ++b) {
      const double n1 = static_cast<double>(tot_n - acc.bn[b]);
      const double pr = (tot_prod - acc.bp[b][j]) / n1;
      const double mphi = (tot_phi - acc.bphi[b]) / n1;
      const double mpsi = (tot_psi - acc.bpsi[b]) / n1;
      jk[b] = pr - mphi * mpsi;
      jk_mean += jk[b];
    }
    jk_mean /= static_cast<double>(nb);
    double m2 = 0.0;
    for (size_t b = 0; b < nb; ++b)
      m2 += (jk[b] - jk_mean) * (jk[b] - jk_mean);
    const double se =
        std::sqrt(m2 * static_cast<double>(nb - 1) / static_cast<double>(nb));
    out.c_hat.push_back(std::fabs(full));
    out.stderr_.push_back(se);
  }
  return out;
}

FitResult fit_power_law(const std::vector<double>& ns,
                        const std::vector<double>& vals) {
  if (ns.size() != vals.size() || ns.size() < 3)
    throw std::invalid_argument("need >= 3 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const size_t m = ns.size();
  std::vector<double> lx(m), ly(m);
  for (size_t i = 0; i < m; ++i) {
    if (!(vals[i] > 0.0) || !(ns[i] > 0.0))
      throw NonpositiveValues("fit_power_law requires positive data");
    lx[i] = std::log(ns[i]);
    ly[i] = std::log(vals[i]);
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double n = static_cast<double>(m);
  const double denom = n * sxx - sx * sx;
  FitResult f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / n;
  for (size_t i = 0; i < m; ++i) {
    const double pred = f.intercept + f.slope * lx[i];
    ss_res += (ly[i] - pred) * (ly[i] - pred);
    ss_tot += (ly[i] - ybar) * (ly[i] - ybar);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  if (m > 2)
    f.slope_stderr =
        std::sqrt(ss_res / (n - 2.0) / (sxx - sx * sx / n));
  return f;
}

FitResult fit_power_law_window(const std::vector<int>& ns,
                               const std::vector<double>& vals, int n_lo,
                               int n_hi) {
  std::vector<double> xs, ys;
  for (size_t i = 0; i < ns.size(); ++i)
    if (ns[i] >= n_lo && ns[i] <= n_hi) {
      xs.push_back(ns[i]);
      ys.push_back(vals[i]);
    }
  return fit_power_law(xs, ys);
}

FitResult fit_stretched_exponential(const std::vector<double>& ns,
                                    const std::vector<double>& vals,
                                    double eta) {
  if (ns.size() != vals.size() || ns.size() < 3)
    throw std::invalid_argument("need >= 3 points");
  if (!(eta > 0.0 && eta <= 1.0))
    throw std::invalid_argument("eta must be in (0,1]");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const size_t m = ns.size();
  std::vector<double> xs(m), ys(m);
  for (size_t i = 0; i < m; ++i) {
    if (!(vals[i] > 0.0) || !(ns[i] > 0.0))
      throw NonpositiveValues("stretched-exponential fit needs positive data");
    xs[i] = std::pow(ns[i], eta);
    ys[i] = std::log(vals[i]);
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double n = static_cast<double>(m);
  FitResult f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / n;
  for (size_t i = 0; i < m; ++i) {
    const double pred = f.intercept + f.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  if (m > 2)
    f.slope_stderr = std::sqrt(ss_res / (n - 2.0) / (sxx - sx * sx / n));
  return f;
}

double green_kubo_sigma2(const std::vector<double>& series, int max_lag,
                         int* cutoff) {
  const long L = static_cast<long>(series.size());
  if (L < 10 * static_cast<long>(max_lag))
    throw SeriesTooShort("series too short for the autocovariance window");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(L);
  std::vector<double> c(static_cast<size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (long t = k; t < L; ++t)
      s += (series[static_cast<size_t>(t)] - mean) *
           (series[static_cast<size_t>(t - k)] - mean);
    c[static_cast<size_t>(k)] = s / static_cast<double>(L - k);
  }
  // cutoff at the first lag whose autocovariance is inside the noise band
  int K = max_lag;
  double run = c[0] * c[0];
  for (int k = 1; k <= max_lag; ++k) {
    const double se = std::sqrt(run / static_cast<double>(L));
    if (std::fabs(c[static_cast<size_t>(k)]) < 2.0 * se) {
      K = k;
      break;
    }
    run += 2.0 * c[static_cast<size_t>(k)] * c[static_cast<size_t>(k)];
  }
  if (cutoff) *cutoff = K;
  double sigma2 = c[0];
  for (int k = 1; k < K; ++k) sigma2 += 2.0 * c[static_cast<size_t>(k)];
  return sigma2;
}

double kolmogorov_p_value(double d_stat, int m) {
  const double sm = std::sqrt(static_cast<double>(m));
  const double lambda = (sm + 0.12 + 0.11 / sm) * d_stat;
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    p += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::min(1.0, std::max(0.0, p));
}

namespace {

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

CLTReport clt_from_sums(std::vector<double> sums, double sigma2, int cutoff,
                        long n) {
  CLTReport r;
  r.sums = std::move(sums);
  r.ensemble = static_cast<int>(r.sums.size());
  r.orbit_len = n;
  r.gk_cutoff = cutoff;
  r.sigma2 = sigma2;
  if (sigma2 < 1e-10)
    throw DegenerateVariance(
        "Green-Kubo variance below 1e-10; observable may be a coboundary");
  std::vector<double> sorted = r.sums;
  std::sort(sorted.begin(), sorted.end());
  const double sd = std::sqrt(sigma2);
  double d = 0.0;
  const double M = static_cast<double>(sorted.size());
  for (size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = normal_cdf(sorted[i] / sd);
    d = std::max(d, std::fabs(cdf - static_cast<double>(i) / M));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / M - cdf));
  }
  r.ks = d;
  r.p_value = kolmogorov_p_value(d, static_cast<int>(sorted.size()));
  return r;
}

}  // namespace

CLTReport clt_test(const Solenoid& s, const Observable& phi, int M, long n,
                   std::uint64_t seed, const CltConfig& cfg) {
  if (M < 2) throw std::invalid_argument("ensemble must be >= 2");
  if (n < 10) throw std::invalid_argument("orbit length too short");
  const bool quotient = phi.x_only;
  const CircleMap& cm = s.circle();

  std::vector<double> sums(static_cast<size_t>(M), 0.0);
  for (int i = 0; i < M; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i) + 1);
    double acc = 0.0;
    if (quotient) {
      double x = rng.uniform(-0.5, 0.5);
      for (long j = 0; j < n; ++j) {
        acc += phi.fx(x);
        x = cm.eval(x);
      }
    } else {
      Point3 p = s.random_point(rng);
      for (long j = 0; j < n; ++j) {
        acc += phi.f3(s, p);
        p = s.step(p);
      }
    }
    sums[static_cast<size_t>(i)] = acc;
  }
  double mean = 0.0;
  for (double v : sums) mean += v;
  mean /= static_cast<double>(M);
  const double rn = std::sqrt(static_cast<double>(n));
  for (double& v : sums) v = (v - mean) / rn;

  // Green-Kubo variance from one long equilibrated orbit.
  std::vector<double> series;
  series.reserve(static_cast<size_t>(cfg.gk_orbit_len));
  {
    Rng rng(seed, 0x9e3779b9ULL);
    if (quotient) {
      double x = rng.uniform(-0.5, 0.5);
      for (long j = 0; j < cfg.gk_burn_in; ++j) x = cm.eval(x);
      for (long j = 0; j < cfg.gk_orbit_len; ++j) {
        series.push_back(phi.fx(x));
        x = cm.eval(x);
      }
    } else {
      Point3 p = s.random_point(rng);
      for (long j = 0; j < cfg.gk_burn_in; ++j) p = s.step(p);
      for (long j = 0; j < cfg.gk_orbit_len; ++j) {
        series.push_back(phi.f3(s, p));
        p = s.step(p);
      }
    }
  }
  int cutoff = 0;
  const double sigma2 = green_kubo_sigma2(series, cfg.gk_max_lag, &cutoff);
  CLTReport r = clt_from_sums(std::move(sums), sigma2, cutoff, n);
  if (s.circle().gamma() >= 0.5)
    r.flags.push_back("outside-clt-hypothesis: alpha = 1/gamma <= 2");
  return r;
}

CLTReport clt_gaussian_control(int M, long n, std::uint64_t seed,
                               const CltConfig& cfg) {
  std::vector<double> sums(static_cast<size_t>(M), 0.0);
  for (int i = 0; i < M; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i) + 1);
    double acc = 0.0;
    for (long j = 0; j < n; ++j) acc += rng.normal();
    sums[static_cast<size_t>(i)] = acc;
  }
  double mean = 0.0;
  for (double v : sums) mean += v;
  mean /= static_cast<double>(M);
  const double rn = std::sqrt(static_cast<double>(n));
  for (double& v : sums) v = (v - mean) / rn;

  std::vector<double> series;
  series.reserve(static_cast<size_t>(cfg.gk_orbit_len));
  Rng rng(seed, 0x9e3779b9ULL);
  for (long j = 0; j < cfg.gk_orbit_len; ++j) series.push_back(rng.normal());
  int cutoff = 0;
  const double sigma2 = green_kubo_sigma2(series, cfg.gk_max_lag, &cutoff);
  CLTReport r = clt_from_sums(std::move(sums), sigma2, cutoff, n);
  r.flags.push_back("iid-control");
  return r;
}

void write_correlation_csv(const std::string& path,
                           const CorrelationSeries& c) {
  CsvWriter w(path);
  w.header({"n", "c_hat", "stderr"});
  for (size_t i = 0; i < c.lags.size(); ++i) {
    w.field_int(c.lags[i]);
    w.field_num(c.c_hat[i]);
    w.field_num(c.stderr_[i]);
    w.end_row();
  }
}

void write_clt_csv(const std::string& path, const CLTReport& r) {
  CsvWriter w(path);
  w.header({"sample_sum"});
  for (double v : r.sums) {
    w.field_num(v);
    w.end_row();
  }
}

void write_clt_report_json(const std::string& path, const CLTReport& r) {
  nlohmann::json j;
  j["sigma2"] = r.sigma2;
  j["ks"] = r.ks;
  j["p"] = r.p_value;
  j["ensemble"] = r.ensemble;
  j["orbit_len"] = r.orbit_len;
  j["gk_cutoff"] = r.gk_cutoff;
  j["flags"] = r.flags;
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::string s = j.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

}  // namespace sollab
