#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sollab/induced_scheme.hpp"
#include "sollab/tower.hpp"
#include "sollab/rng.hpp"
#include "sollab/stats.hpp"

using namespace sollab;

TEST_CASE("base partition: return times and mass accounting") {
  for (int d : {2, 3, 4}) {
    CircleMap f({0.5, d});
    const int n_max = 64;
    auto base = build_base_partition(f, n_max);
    double total = 0.0;
    for (const auto& e : base) {
      total += e.length();
      if (e.kind == BaseElement::Kind::Middle) {
        CHECK(e.return_time == 1);
      } else {
        CHECK(e.return_time == e.index + 1);
      }
    }
    const auto b = f.boundary_sequences(n_max);
    CHECK(total + b.xs[n_max] - b.xs_prime[n_max] ==
          doctest::Approx(1.0).epsilon(1e-10));
  }
  // R on J_0 is 1, R on J_5 is 6
  CircleMap f({0.5, 2});
  auto base = build_base_partition(f, 16);
  CHECK(base[0].return_time == 1);
  CHECK(base[5].return_time == 6);
}

TEST_CASE("scheme build: coverage, markov property, gcd") {
  CircleMap f({0.5, 2});
  // min_len 1e-7 keeps the composite endpoint check representable:
  // forward images amplify endpoint rounding by |I_1|/|cell|.
  InducedScheme scheme(f, {256, 128, 1e-7});
  const auto& pieces = scheme.pieces();
  // pieces tile (0, x0] root by root
  double total = 0.0;
  for (const auto& p : pieces) {
    CHECK(p.b >= p.a);
    total += p.length();
  }
  CHECK(total == doctest::Approx(0.5).epsilon(1e-10));

  // every closed cell maps onto I_1 (endpoints within 1e-9)
  CHECK(scheme.markov_residual() < 1e-9);

  // realized R* values: the double-branch structure gives {2,3,4,...}
  long g = 0;
  long smallest = 1 << 30;
  for (const auto& p : pieces)
    if (p.closed) {
      g = std::gcd(g, p.time);
      smallest = std::min(smallest, p.time);
    }
  CHECK(g == 1);
  CHECK(smallest == 2);

  // mass{R* > 0} = |I_1| = 1/2
  const TailSeries t = scheme.tails(128);
  CHECK(t.mass_Rstar[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(t.mass_R[1] == doctest::Approx(scheme.bounds().xs[1] * 2).epsilon(1e-12));
  // nonincreasing tails
  for (size_t n = 1; n < t.mass_Rstar.size(); ++n) {
    CHECK(t.mass_Rstar[n] <= t.mass_Rstar[n - 1] + 1e-15);
    CHECK(t.mass_R[n] <= t.mass_R[n - 1] + 1e-15);
  }
  // mass{R > n} = x_n + x'_n exactly, cross-checked against the J sums
  const auto& b = scheme.bounds();
  for (int n : {1, 5, 20}) {
    double s = 0.0;
    for (int m = n; m < 256; ++m) s += b.xs[m] - b.xs[m + 1];
    s = 2.0 * (s + b.xs[256]);
    CHECK(t.mass_R[static_cast<size_t>(n)] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("cell itineraries and stopping times") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {128, 64, 1e-9});
  int checked = 0;
  for (size_t i = 0; i < scheme.pieces().size() && checked < 50; ++i) {
    const auto& p = scheme.pieces()[i];
    if (!p.closed) continue;
    ++checked;
    const CylinderCell c = scheme.cell_info(i);
    REQUIRE(c.itinerary.size() == 2);  // J_n then J'_m for the d=2 family
    CHECK(c.itinerary[0].first == BaseElement::Kind::J);
    CHECK(c.itinerary[1].first == BaseElement::Kind::JPrime);
    const long n = c.itinerary[0].second;
    const long m = c.itinerary[1].second;
    CHECK(c.r_star == n + m + 2);
    REQUIRE(c.stopping_times.size() == 2);
    CHECK(c.stopping_times[0] == n + 1);
    CHECK(c.stopping_times[1] == c.r_star);
    // forward midpoint follows the claimed itinerary
    double x = 0.5 * (c.a + c.b);
    const auto& b = scheme.bounds();
    CHECK(x >= b.xs[n + 1]);
    CHECK(x <= b.xs[n]);
    for (long s = 0; s < c.stopping_times[0]; ++s) x = f.eval(x);
    CHECK(x >= b.xs_prime[m]);
    CHECK(x <= b.xs_prime[m + 1]);
  }
  CHECK(checked == 50);
}

TEST_CASE("truncation mass decreases with the time budget") {
  CircleMap f({0.5, 2});
  double prev = 1e300;
  for (int budget : {32, 64, 128}) {
    InducedScheme scheme(f, {512, budget, 1e-12});
    CHECK(scheme.truncation_mass() < prev);
    prev = scheme.truncation_mass();
  }
}

TEST_CASE("tail slope matches the intermittency exponent") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {2048, 1024, 1e-13});
  const TailSeries t = scheme.tails(1024);
  std::vector<double> ns, rstar, r;
  for (double n = 16; n <= 1024.1; n *= std::sqrt(2.0)) {
    const int ni = static_cast<int>(std::lround(n));
    ns.push_back(ni);
    r.push_back(t.mass_R[static_cast<size_t>(ni)]);
    rstar.push_back(t.mass_Rstar[static_cast<size_t>(ni)]);
  }
  const FitResult fr = fit_power_law(ns, r);
  const FitResult frs = fit_power_law(ns, rstar);
  CHECK(std::fabs(fr.slope + 2.0) < 0.15);
  CHECK(std::fabs(frs.slope + 2.0) < 0.25);
  CHECK(t.truncation_mass < 0.05 * 0.5);
}

TEST_CASE("expansion, distortion and separation structure") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {512, 256, 1e-9});
  const SchemeReport rep = scheme.check_expansion_distortion(256, 42);
  CHECK(rep.beta_inv > 1.0);
  CHECK(rep.cell_min_deriv > 1.0);
  CHECK(rep.gcd_rstar == 1);
  CHECK(std::isfinite(rep.distortion_C));
  CHECK(rep.distortion_C > 0.0);
  CHECK(std::isfinite(rep.cell_distortion));

  // lemma check: closed cells with S_N = R* >= k have |cell| <= C k^{-1/gamma},
  // C fitted on shallow cells and tested on deep ones
  const auto& pieces = scheme.pieces();
  double c_fit = 0.0;
  for (const auto& p : pieces)
    if (p.closed && p.time <= 32)
      c_fit = std::max(c_fit, p.length() * std::pow(p.time, 2.0));
  int deep = 0;
  for (const auto& p : pieces) {
    if (p.closed && p.time > 32 && deep < 100) {
      ++deep;
      CHECK(p.length() <= c_fit * std::pow(p.time, -2.0) * 1.001);
    }
  }
  CHECK(deep == 100);
}

TEST_CASE("separation time of nearby points") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {128, 64, 1e-9});
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const double x = rng.uniform(0.26, 0.49);
    const long pi = scheme.locate_piece(x);
    if (pi < 0) continue;
    const auto& p = scheme.pieces()[static_cast<size_t>(pi)];
    const double y = 0.5 * (x + (x < 0.5 * (p.a + p.b) ? p.b : p.a));
    const int s = scheme.separation_time(x, y, 16);
    CHECK(s >= 1);  // same cell by construction
  }
}

TEST_CASE("delta_k: bounds, decay rate, case consistency") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {264, 130, 1e-12});
  const std::vector<double> d = scheme.delta_k(64);
  // diameters never exceed the scaled base bound
  const double cap =
      (1.0 + InducedScheme::kLeafSlopeBound) * 0.5 + 2.0;
  for (size_t k = 1; k < d.size(); ++k) {
    CHECK(d[k] > 0.0);
    CHECK(d[k] <= cap);
    if (k >= 2) CHECK(d[k] <= d[k - 1] * 1.0001);  // nonincreasing family
  }
  // theoretical bound: delta_k <= C k^{-1/gamma}; one-sided slope check
  // (the example's measured decay is k^{-(1+1/gamma)}, strictly inside)
  std::vector<double> ks, vs;
  for (double k = 8; k <= 64.1; k *= std::sqrt(2.0)) {
    const int ki = static_cast<int>(std::lround(k));
    ks.push_back(ki);
    vs.push_back(d[static_cast<size_t>(ki)]);
  }
  const FitResult fit = fit_power_law(ks, vs);
  CHECK(fit.slope <= -2.0 + 0.3);

  // per-cell case split: for k > R*-1 the unrefined part is empty and
  // the cell value equals the windowed (case-2) formula
  int checked = 0;
  for (size_t i = 0; i < scheme.pieces().size() && checked < 10; ++i) {
    const Piece& p = scheme.pieces()[i];
    if (!p.closed || p.time > 6) continue;
    ++checked;
    const int k_big = static_cast<int>(p.time) + 3;  // case 3
    CHECK(scheme.delta0_of_cell(i, k_big) == 0.0);
    CHECK(scheme.delta_cell(i, k_big) ==
          scheme.delta_windowed_of_cell(i, k_big));
    const int k_small = static_cast<int>(p.time) - 1;  // cases 1+2
    if (k_small >= 1) {
      const double d0 = scheme.delta0_of_cell(i, k_small);
      const double dw = scheme.delta_windowed_of_cell(i, k_small);
      CHECK(scheme.delta_cell(i, k_small) == std::max(d0, dw));
      CHECK(d0 > 0.0);
    }
  }
  CHECK(checked == 10);
}

TEST_CASE("truncation errors") {
  CircleMap f({0.5, 2});
  CHECK_THROWS_AS(InducedScheme(f, {8, 4, 1e-12}), TruncationTooCoarse);
  InducedScheme ok(f, {64, 32, 1e-9});
  CHECK_THROWS_AS(ok.delta_k(64), TruncationTooCoarse);
}

TEST_CASE("shrink lemma surrogate: projected cylinder diameters") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {264, 130, 1e-12});
  const std::vector<double> d = scheme.delta_k(40);
  Rng rng(77);
  // diam(pi F^k Q) for ground-level 2k-cylinders Q, against
  // C2 * max(beta^k, delta_k) with beta = 1/10
  std::vector<double> c2_by_k;
  for (int k : {8, 16, 32}) {
    double c2 = 0.0;
    int used = 0;
    for (int trial = 0; trial < 200 && used < 50; ++trial) {
      const double x = rng.uniform(0.26, 0.499);
      // follow the return-map itinerary until total time >= 2k
      std::vector<long> cells;
      double cur = x;
      long total = 0;
      bool okc = true;
      while (total < 2 * k) {
        const long pi = scheme.locate_piece(cur);
        if (pi < 0) {
          okc = false;
          break;
        }
        cells.push_back(pi);
        const Piece& p = scheme.pieces()[static_cast<size_t>(pi)];
        for (long s = 0; s < p.time; ++s) cur = f.eval(cur);
        total += p.time;
      }
      if (!okc) continue;
      // f^k(Q): position the last cell's interval at time k by pulling
      // it back only through the steps between k and its own start
      std::vector<int> pre_steps;
      for (size_t ci = 0; ci + 1 < cells.size(); ++ci) {
        const std::vector<int> s =
            scheme.forward_steps(scheme.pieces()[static_cast<size_t>(cells[ci])]);
        pre_steps.insert(pre_steps.end(), s.begin(), s.end());
      }
      double lo = scheme.pieces()[static_cast<size_t>(cells.back())].a;
      double hi = scheme.pieces()[static_cast<size_t>(cells.back())].b;
      if (static_cast<size_t>(k) <= pre_steps.size()) {
        for (size_t s = pre_steps.size(); s-- > static_cast<size_t>(k);) {
          lo = pre_steps[s] == 0 ? f.preimage_in_base(lo)
                                 : f.inverse_branch(pre_steps[s], lo);
          hi = pre_steps[s] == 0 ? f.preimage_in_base(hi)
                                 : f.inverse_branch(pre_steps[s], hi);
        }
      } else {
        for (size_t s = pre_steps.size(); s < static_cast<size_t>(k); ++s) {
          lo = f.eval(lo);
          hi = f.eval(hi);
        }
      }
      double len = hi - lo;
      if (len < 0.0) len += 1.0;
      const double diam3 =
          (1.0 + InducedScheme::kLeafSlopeBound) * len +
          2.0 * std::pow(0.1, k);
      const double ref =
          std::max(std::pow(0.1, k), d[static_cast<size_t>(k)]);
      c2 = std::max(c2, diam3 / ref);
      ++used;
    }
    REQUIRE(used == 50);
    CHECK(std::isfinite(c2));
    c2_by_k.push_back(c2);
  }
  // the constant stays of order one across k (no blow-up)
  for (double c2 : c2_by_k) {
    CHECK(c2 > 0.0);
    CHECK(c2 <= 4.0);
  }
}

TEST_CASE("tower built from the induced scheme") {
  CircleMap f({0.5, 2});
  InducedScheme scheme(f, {256, 128, 1e-10});
  double open = 0.0;
  const FiniteTowerModel tw = tower_from_return_masses(
      scheme.closed_mass_by_rstar(), scheme.truncation_mass(), &open);
  CHECK(open == scheme.truncation_mass());
  CHECK(tw.gcd_R() == 1);
  // branch masses renormalize the closed mass to 1
  double total = 0.0;
  for (int i = 0; i < tw.branches(); ++i) total += tw.p(i);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // the example-derived tower mixes and supports the exact operator
  const DensityVector nu = invariant_density(tw);
  const std::vector<double> tv =
      tv_decay(tw, ground_start_density(tw), nu, 64);
  CHECK(tv.back() < tv.front());
}

TEST_CASE("higher-degree schemes: middles, straddler, markov closure") {
  for (int d : {3, 4}) {
    CircleMap f({0.5, d});
    InducedScheme scheme(f, {96, 48, 1e-7});
    // coverage of I_1 and a valid Markov structure
    double total = 0.0;
    long closed = 0;
    long gcd = 0;
    for (const auto& p : scheme.pieces()) {
      total += p.length();
      if (p.closed) {
        ++closed;
        gcd = std::gcd(gcd, p.time);
      }
    }
    CHECK(total == doctest::Approx(f.x0()).epsilon(1e-10));
    CHECK(closed > 10);
    CHECK(gcd == 1);  // consecutive return times 2 and 3 are realized
    CHECK(scheme.markov_residual() < 1e-9);
    // tails behave
    const TailSeries t = scheme.tails(48);
    CHECK(t.mass_Rstar[0] == doctest::Approx(f.x0()).epsilon(1e-10));
    for (size_t n = 1; n < t.mass_Rstar.size(); ++n)
      CHECK(t.mass_Rstar[n] <= t.mass_Rstar[n - 1] + 1e-15);
  }
}
