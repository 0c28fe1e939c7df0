#include "sollab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "sollab/csv.hpp"
#include "sollab/rng.hpp"

namespace sollab {

namespace {

// Alternating stopping-time machine. A read happens n0 steps after the
// previous stopping time; the read coordinate then falls to the ground
// exactly at the next tau. T fires at the first tau_i (i >= 2) with both
// coordinates on the ground.
struct TauMachine {
  int wait = 0;  // >0: steps until the read; 0: falling
  int alt = 0;   // coordinate read next (0: x, 1: x')
  int cls = 0;   // 0 until tau_1 has fired
  void reset(int n0) {
    wait = n0;
    alt = 0;
    cls = 0;
  }
};

struct StepOutcome {
  bool tau = false;
  bool T = false;
};

template <typename LevelFn>
StepOutcome machine_step(TauMachine& mc, int n0, LevelFn level_of) {
  StepOutcome out;
  bool falling = mc.wait == 0;
  if (!falling) {
    if (--mc.wait == 0) {
      if (level_of(mc.alt) == 0)
        out.tau = true;  // hat-R = 0 at the read: tau fires now
    }
  } else if (level_of(mc.alt) == 0) {
    out.tau = true;
  }
  if (out.tau) {
    if (mc.cls == 1 && level_of(1 - mc.alt) == 0) {
      out.T = true;
    } else {
      mc.alt ^= 1;
      mc.cls = 1;
      mc.wait = n0;
    }
  }
  return out;
}

long sample_cell(const FiniteTowerModel& m, const DensityVector& d,
                 Rng& rng) {
  double total = 0.0;
  for (long c = 0; c < m.cells(); ++c)
    total += d.v[static_cast<size_t>(c)] * m.cell_mass(c);
  double u = rng.uniform() * total;
  for (long c = 0; c < m.cells(); ++c) {
    u -= d.v[static_cast<size_t>(c)] * m.cell_mass(c);
    if (u <= 0.0) return c;
  }
  return m.cells() - 1;
}

int sample_branch(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  for (size_t j = 0; j < cdf.size(); ++j)
    if (u < cdf[j]) return static_cast<int>(j);
  return static_cast<int>(cdf.size()) - 1;
}

}  // namespace

CouplingRecord simulate_pair(const FiniteTowerModel& m,
                             const DensityVector& lambda,
                             const DensityVector& lambda_prime, int n0,
                             long horizon, std::uint64_t seed) {
  if (n0 < 1) throw std::invalid_argument("n0 must be >= 1");
  if (horizon < 2 * n0)
    throw std::invalid_argument("horizon must be >= 2*n0");
  Rng rng(seed);
  std::vector<double> cdf(static_cast<size_t>(m.branches()));
  double acc = 0.0;
  for (int j = 0; j < m.branches(); ++j) {
    acc += m.p(j);
    cdf[static_cast<size_t>(j)] = acc;
  }
  long cx = sample_cell(m, lambda, rng);
  long cy = sample_cell(m, lambda_prime, rng);
  int bx = m.cell_branch(cx), lx = m.cell_level(cx);
  int by = m.cell_branch(cy), ly = m.cell_level(cy);

  CouplingRecord rec;
  rec.seed = seed;
  TauMachine mc;
  mc.reset(n0);
  bool first_epoch = true;
  for (long t = 1; t <= horizon; ++t) {
    if (lx + 1 < m.R(bx)) {
      ++lx;
    } else {
      bx = sample_branch(cdf, rng);
      lx = 0;
    }
    if (ly + 1 < m.R(by)) {
      ++ly;
    } else {
      by = sample_branch(cdf, rng);
      ly = 0;
    }
    auto level_of = [&](int which) { return which == 0 ? lx : ly; };
    const StepOutcome o = machine_step(mc, n0, level_of);
    if (o.tau && first_epoch) rec.taus.push_back(t);
    if (o.T) {
      if (first_epoch) {
        rec.T = t;
        first_epoch = false;
      }
      rec.Ts.push_back(t);
      mc.reset(n0);
    }
  }
  if (rec.T < 0) {
    rec.censored = true;
    throw HorizonExceeded("no simultaneous return within the horizon", rec);
  }
  return rec;
}

namespace {

void wilson_band(long k, long n, double& lo, double& hi) {
  const double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = p + z2 / (2.0 * nn);
  const double half =
      z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  lo = std::max(0.0, (center - half) / denom);
  hi = std::min(1.0, (center + half) / denom);
}

}  // namespace

TailEstimate estimate_T_tail(const FiniteTowerModel& m,
                             const DensityVector& lambda,
                             const DensityVector& lambda_prime, int n0,
                             long samples, long horizon, std::uint64_t seed) {
  if (samples < 1000) throw std::invalid_argument("need >= 1000 samples");
  std::vector<long> t_count(static_cast<size_t>(horizon) + 1, 0);
  long censored = 0;
  for (long i = 0; i < samples; ++i) {
    try {
      const CouplingRecord r = simulate_pair(m, lambda, lambda_prime, n0,
                                             horizon, seed + 1000003ULL * i);
      t_count[static_cast<size_t>(r.T)] += 1;
    } catch (const HorizonExceeded&) {
      ++censored;  // conservatively kept in the tail: T > horizon
    }
  }
  TailEstimate out;
  out.samples = samples;
  out.censored = censored;
  out.p_hat.resize(static_cast<size_t>(horizon) + 1);
  out.lo.resize(out.p_hat.size());
  out.hi.resize(out.p_hat.size());
  long above = censored;
  for (long n = horizon; n >= 0; --n) {
    if (n < horizon) above += t_count[static_cast<size_t>(n) + 1];
    out.p_hat[static_cast<size_t>(n)] =
        static_cast<double>(above) / static_cast<double>(samples);
    wilson_band(above, samples, out.lo[static_cast<size_t>(n)],
                out.hi[static_cast<size_t>(n)]);
  }
  return out;
}

E1E4Report verify_E1_E4(const FiniteTowerModel& m,
                        const DensityVector& lambda,
                        const DensityVector& lambda_prime, int n0,
                        long samples, long horizon, std::uint64_t seed) {
  struct Bin {
    long total = 0;
    long returned = 0;
  };
  std::unordered_map<long, Bin> e1_bins;  // key: i * 2^24 + gap
  std::unordered_map<long, std::vector<long>> e2_gaps;
  std::unordered_map<long, std::vector<long>> e4_incr;
  long censored = 0;

  for (long s = 0; s < samples; ++s) {
    CouplingRecord r;
    try {
      r = simulate_pair(m, lambda, lambda_prime, n0, horizon,
                        seed + 7919ULL * s);
    } catch (const HorizonExceeded& e) {
      r = e.partial;
      ++censored;
    }
    long prev = 0;
    for (size_t i = 1; i <= r.taus.size(); ++i) {
      const long tau = r.taus[i - 1];
      const long gap = tau - prev;
      if (i >= 2 && (r.T < 0 || r.T >= tau)) {
        Bin& b = e1_bins[static_cast<long>(i) * (1L << 24) + gap];
        b.total += 1;
        if (r.T == tau) b.returned += 1;
      }
      e2_gaps[static_cast<long>(i - 1)].push_back(gap);
      prev = tau;
    }
    for (size_t i = 1; i < r.Ts.size(); ++i)
      e4_incr[static_cast<long>(i)].push_back(r.Ts[i] - r.Ts[i - 1]);
  }

  E1E4Report rep;
  rep.samples = samples;
  rep.censored = censored;
  double eps0 = 1.0;
  for (const auto& [key, b] : e1_bins) {
    (void)key;
    if (b.total < 50) {
      rep.bins_flagged += 1;
      continue;
    }
    rep.bins_used += 1;
    eps0 = std::min(
        eps0, static_cast<double>(b.returned) / static_cast<double>(b.total));
  }
  rep.eps0_hat = eps0;

  double k0 = 0.0;
  for (const auto& [i, gaps] : e2_gaps) {
    (void)i;
    if (static_cast<long>(gaps.size()) < 50) {
      rep.bins_flagged += 1;
      continue;
    }
    std::vector<long> g = gaps;
    std::sort(g.begin(), g.end());
    const double total = static_cast<double>(g.size());
    for (int n = 0;; ++n) {
      const long thresh = n0 + n;
      const auto it = std::upper_bound(g.begin(), g.end(), thresh);
      const long count = static_cast<long>(g.end() - it);
      if (count < 5) break;
      const double denom = hat_R_tail(m, n);
      if (denom <= 0.0) break;
      k0 = std::max(k0, (static_cast<double>(count) / total) / denom);
    }
  }
  rep.k0_hat = k0;

  // (E4) reference: T from normalized m-bar x m-bar starts; the measure
  // mass (m x m){T > n} equals the probability times (sum p_i R_i)^2.
  {
    const DensityVector mbar = uniform_probability_density(m);
    const long ref_samples = std::max<long>(2000, samples / 10);
    std::vector<long> ref;
    ref.reserve(static_cast<size_t>(ref_samples));
    for (long s = 0; s < ref_samples; ++s) {
      try {
        ref.push_back(
            simulate_pair(m, mbar, mbar, n0, horizon, seed ^ (31337ULL + s))
                .T);
      } catch (const HorizonExceeded&) {
        ref.push_back(horizon + 1);
      }
    }
    std::sort(ref.begin(), ref.end());
    const double scale = m.mean_return() * m.mean_return();
    double k2 = 0.0;
    for (const auto& [i, incs] : e4_incr) {
      (void)i;
      if (static_cast<long>(incs.size()) < 50) {
        rep.bins_flagged += 1;
        continue;
      }
      std::vector<long> v = incs;
      std::sort(v.begin(), v.end());
      for (long n = 2 * n0;; ++n) {
        const auto it = std::upper_bound(v.begin(), v.end(), n);
        const long count = static_cast<long>(v.end() - it);
        if (count < 5) break;
        const auto rt = std::upper_bound(ref.begin(), ref.end(), n);
        const double denom = (static_cast<double>(ref.end() - rt) /
                              static_cast<double>(ref.size())) *
                             scale;
        if (denom <= 0.0) break;
        const double num =
            static_cast<double>(count) / static_cast<double>(v.size());
        k2 = std::max(k2, num / denom);
      }
    }
    rep.k2_hat = k2;
  }
  return rep;
}

// ---------------------------------------------------------------------
// Exact extraction flow: mass packets merged by (pair state, machine
// phase, extraction depth). Piecewise-constant product densities make
// every packet extract exactly the fraction eps at a completed
// simultaneous return, so merging preserves the cellwise update.

namespace {

struct FlowKey {
  std::uint64_t v;
  bool operator==(const FlowKey& o) const { return v == o.v; }
};
struct FlowKeyHash {
  size_t operator()(const FlowKey& k) const {
    std::uint64_t x = k.v;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<size_t>(x ^ (x >> 31));
  }
};

struct FlowMass {
  double prob = 0.0;  // P = lambda x lambda' mass (no extraction)
  double w = 0.0;     // Phi-hat mass (extraction applied)
};

using FlowMap = std::unordered_map<FlowKey, FlowMass, FlowKeyHash>;

FlowKey make_key(int bx, int lx, int by, int ly, int wait, int alt,
                 int cls) {
  std::uint64_t v = 0;
  v = v * 4096 + static_cast<std::uint64_t>(bx);
  v = v * 4096 + static_cast<std::uint64_t>(lx);
  v = v * 4096 + static_cast<std::uint64_t>(by);
  v = v * 4096 + static_cast<std::uint64_t>(ly);
  v = v * 1024 + static_cast<std::uint64_t>(wait);
  v = v * 2 + static_cast<std::uint64_t>(alt);
  v = v * 2 + static_cast<std::uint64_t>(cls);
  return {v};
}

void unpack_key(FlowKey k, int& bx, int& lx, int& by, int& ly, int& wait,
                int& alt, int& cls) {
  std::uint64_t v = k.v;
  cls = static_cast<int>(v % 2);
  v /= 2;
  alt = static_cast<int>(v % 2);
  v /= 2;
  wait = static_cast<int>(v % 1024);
  v /= 1024;
  ly = static_cast<int>(v % 4096);
  v /= 4096;
  by = static_cast<int>(v % 4096);
  v /= 4096;
  lx = static_cast<int>(v % 4096);
  v /= 4096;
  bx = static_cast<int>(v);
}

}  // namespace

ExtractionResult run_extraction(const FiniteTowerModel& m,
                                const DensityVector& phi,
                                const DensityVector& phi_prime, double eps,
                                int i_max, int n0, long horizon) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (eps >= 1.0)
    throw ExtractionNegative("eps >= 1 drives the residual density negative");
  if (n0 < 1) throw std::invalid_argument("n0 must be >= 1");
  if (i_max < 1) throw std::invalid_argument("i_max must be >= 1");
  if (n0 > 1000) throw CellBudgetExceeded("n0 too large for the phase key");
  const long n_cells = m.cells();
  if (static_cast<double>(n_cells) * n_cells * (n0 + 1) * 4.0 *
          (i_max + 1) >
      5e6)
    throw CellBudgetExceeded("product state space too large; reduce i_max/N");

  ExtractionResult out;
  out.i_max = i_max;
  out.eps = eps;
  out.eps1_hat = eps;
  out.sup_ratio.assign(static_cast<size_t>(i_max), 1.0 - eps);
  out.extracted_mass.assign(static_cast<size_t>(i_max), 0.0);
  out.depth_mass.assign(
      static_cast<size_t>(i_max) + 1,
      std::vector<double>(static_cast<size_t>(horizon) + 1, 0.0));
  out.phi_n_integral.assign(static_cast<size_t>(horizon) + 1, 0.0);

  std::vector<FlowMap> flow(static_cast<size_t>(i_max));
  double frozen_prob = 0.0, frozen_w = 0.0;
  double matching = 0.0;
  double extracted_total = 0.0;

  for (long cx = 0; cx < n_cells; ++cx) {
    const double mx = phi.v[static_cast<size_t>(cx)] * m.cell_mass(cx);
    if (mx == 0.0) continue;
    for (long cy = 0; cy < n_cells; ++cy) {
      const double my =
          phi_prime.v[static_cast<size_t>(cy)] * m.cell_mass(cy);
      if (my == 0.0) continue;
      const FlowKey k =
          make_key(m.cell_branch(cx), m.cell_level(cx), m.cell_branch(cy),
                   m.cell_level(cy), n0, 0, 0);
      FlowMass& fm = flow[0][k];
      fm.prob += mx * my;
      fm.w += mx * my;
    }
  }
  {
    double p0 = 0.0;
    for (const auto& [k, fm] : flow[0]) {
      (void)k;
      p0 += fm.prob;
    }
    out.depth_mass[0][0] = p0;
    out.phi_n_integral[0] = p0;
  }

  std::vector<double> step_marg_pi(static_cast<size_t>(m.branches()));
  std::vector<double> step_marg_pp(static_cast<size_t>(m.branches()));
  for (long t = 1; t <= horizon; ++t) {
    std::vector<FlowMap> next(static_cast<size_t>(i_max));
    std::fill(step_marg_pi.begin(), step_marg_pi.end(), 0.0);
    std::fill(step_marg_pp.begin(), step_marg_pp.end(), 0.0);
    for (int depth = 0; depth < i_max; ++depth) {
      for (const auto& [key, fm] : flow[static_cast<size_t>(depth)]) {
        int bx, lx, by, ly, wait, alt, cls;
        unpack_key(key, bx, lx, by, ly, wait, alt, cls);
        const bool x_falls = (lx + 1 >= m.R(bx));
        const bool y_falls = (ly + 1 >= m.R(by));
        const int nx = x_falls ? m.branches() : 1;
        const int ny = y_falls ? m.branches() : 1;
        for (int jx = 0; jx < nx; ++jx) {
          const int nbx = x_falls ? jx : bx;
          const int nlx = x_falls ? 0 : lx + 1;
          const double px = x_falls ? m.p(jx) : 1.0;
          for (int jy = 0; jy < ny; ++jy) {
            const int nby = y_falls ? jy : by;
            const int nly = y_falls ? 0 : ly + 1;
            const double q = px * (y_falls ? m.p(jy) : 1.0);
            TauMachine mc{wait, alt, cls};
            auto level_of = [&](int which) {
              return which == 0 ? nlx : nly;
            };
            const StepOutcome o = machine_step(mc, n0, level_of);
            double prob = fm.prob * q;
            double w = fm.w * q;
            int ndepth = depth;
            if (o.T) {
              ndepth = depth + 1;
              const double ext = eps * w;
              w -= ext;
              extracted_total += ext;
              out.extracted_mass[static_cast<size_t>(depth)] += ext;
              step_marg_pi[static_cast<size_t>(nbx)] += ext;
              step_marg_pp[static_cast<size_t>(nby)] += ext;
              mc.reset(n0);
            }
            if (ndepth >= i_max) {
              frozen_prob += prob;
              frozen_w += w;
            } else {
              FlowMass& nm = next[static_cast<size_t>(ndepth)][make_key(
                  nbx, nlx, nby, nly, mc.wait, mc.alt, mc.cls)];
              nm.prob += prob;
              nm.w += w;
            }
          }
        }
      }
    }
    flow.swap(next);
    for (size_t b = 0; b < step_marg_pi.size(); ++b)
      matching =
          std::max(matching, std::fabs(step_marg_pi[b] - step_marg_pp[b]));
    double phi_n = frozen_w;
    for (int depth = 0; depth < i_max; ++depth) {
      double dp = 0.0;
      for (const auto& [k, fm] : flow[static_cast<size_t>(depth)]) {
        (void)k;
        dp += fm.prob;
        phi_n += fm.w;
      }
      out.depth_mass[static_cast<size_t>(depth)][static_cast<size_t>(t)] = dp;
    }
    out.depth_mass[static_cast<size_t>(i_max)][static_cast<size_t>(t)] =
        frozen_prob;
    out.phi_n_integral[static_cast<size_t>(t)] = phi_n;
  }
  out.matching_residual = matching;
  double residual_w = frozen_w;
  for (int depth = 0; depth < i_max; ++depth)
    for (const auto& [k, fm] : flow[static_cast<size_t>(depth)]) {
      (void)k;
      residual_w += fm.w;
    }
  out.mass_ledger_residual =
      std::fabs(extracted_total + residual_w - out.phi_n_integral[0]);

  // Assembled (E3) right-hand side with the fitted K1 left to the caller
  // (requires the exact TV curve); default uses the theory floor K1 = 2.
  out.k1 = 2.0;
  out.e3_bound.assign(static_cast<size_t>(horizon) + 1, 0.0);
  for (long n = 0; n <= horizon; ++n) {
    double s = 0.0;
    for (int i = 1; i <= i_max; ++i)
      s += std::pow(1.0 - eps, i) *
           out.depth_mass[static_cast<size_t>(i)][static_cast<size_t>(n)];
    out.e3_bound[static_cast<size_t>(n)] =
        2.0 * out.depth_mass[0][static_cast<size_t>(n)] + out.k1 * s;
  }
  return out;
}

void write_coupling_tail_csv(const std::string& path, const TailEstimate& t,
                             long horizon) {
  CsvWriter w(path);
  w.header({"n", "p_hat", "lo", "hi", "censored"});
  for (long n = 0; n <= horizon; ++n) {
    w.field_int(n);
    w.field_num(t.p_hat[static_cast<size_t>(n)]);
    w.field_num(t.lo[static_cast<size_t>(n)]);
    w.field_num(t.hi[static_cast<size_t>(n)]);
    w.field_int(t.censored);
    w.end_row();
  }
}

void write_e3_csv(const std::string& path, const std::vector<double>& tv,
                  const std::vector<double>& bound) {
  CsvWriter w(path);
  w.header({"n", "tv_exact", "e3_bound"});
  const size_t n = std::min(tv.size(), bound.size());
  for (size_t i = 0; i < n; ++i) {
    w.field_int(static_cast<long long>(i));
    w.field_num(tv[i]);
    w.field_num(bound[i]);
    w.end_row();
  }
}

void write_extraction_csv(const std::string& path,
                          const ExtractionResult& r) {
  CsvWriter w(path);
  w.header({"i", "sup_ratio", "extracted_mass"});
  for (size_t i = 0; i < r.sup_ratio.size(); ++i) {
    w.field_int(static_cast<long long>(i) + 1);
    w.field_num(r.sup_ratio[i]);
    w.field_num(r.extracted_mass[i]);
    w.end_row();
  }
}

}  // namespace sollab
