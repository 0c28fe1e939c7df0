#include "sollab/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sollab/coupling.hpp"
#include "sollab/csv.hpp"
#include "sollab/induced_scheme.hpp"
#include "sollab/solenoid.hpp"
#include "sollab/stats.hpp"
#include "sollab/tower.hpp"

namespace sollab {

namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
  double gamma = 0.5;
  int degree = 2;
  std::uint64_t seed = 1;
  long orbit_len = 1L << 22;
  int ensemble = 16;
  long burn_in = 1L << 17;
  int max_time = 512;
  int n_max = 0;  // 0: derived as 2*max_time
  double min_len = 1e-12;
  int k_max = 128;
  std::string lags = "8,11,16,23,32,45,64,91,128,181,256";
  int clt_m = 500;
  long clt_n = 10000;
  int n0_override = 0;
  long horizon = 512;
  long pairs = 10000;
  double eps = 0.1;
  int i_max = 6;
  int tv_steps = 256;
  int tower_n = 64;
  double tower_alpha = 3.0;
  std::string tower_file;
  std::string observable = "cos2pix";
  std::string observable2;
  std::string out_dir = ".";
  bool emit_orbit = false;
};

struct OutputTracker {
  std::vector<fs::path> files;
  fs::path track(const fs::path& p) {
    files.push_back(p);
    return p;
  }
  void discard_all() {
    for (const auto& p : files) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

std::vector<int> parse_lags(const std::string& s) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(std::stoi(s.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["gamma"] = c.gamma;
  j["degree"] = c.degree;
  j["seed"] = c.seed;
  j["orbit_len"] = c.orbit_len;
  j["ensemble"] = c.ensemble;
  j["burn_in"] = c.burn_in;
  j["max_time"] = c.max_time;
  j["n_max"] = c.n_max;
  j["min_len"] = c.min_len;
  j["k_max"] = c.k_max;
  j["lags"] = c.lags;
  j["clt_m"] = c.clt_m;
  j["clt_n"] = c.clt_n;
  j["n0_override"] = c.n0_override;
  j["horizon"] = c.horizon;
  j["pairs"] = c.pairs;
  j["eps"] = c.eps;
  j["i_max"] = c.i_max;
  j["tv_steps"] = c.tv_steps;
  j["tower_n"] = c.tower_n;
  j["tower_alpha"] = c.tower_alpha;
  j["tower_file"] = c.tower_file;
  j["observable"] = c.observable;
  j["observable2"] = c.observable2;
  j["out"] = c.out_dir;
  j["emit_orbit"] = c.emit_orbit;
  return j;
}

void write_manifest(const fs::path& dir, const std::string& subcommand,
                    const ExperimentConfig& cfg, const OutputTracker& outs,
                    double wall_s, const nlohmann::json& report) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["version"] = kVersion;
  j["config"] = config_json(cfg);
  j["wall_time_s"] = wall_s;
  std::vector<std::string> names;
  for (const auto& p : outs.files) names.push_back(p.filename().string());
  j["outputs"] = names;
  if (!report.is_null()) j["report"] = report;
  const fs::path p = dir / "manifest.json";
  std::FILE* f = std::fopen(p.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write manifest.json");
  const std::string s = j.dump(2);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

FiniteTowerModel make_tower(const ExperimentConfig& cfg) {
  if (!cfg.tower_file.empty()) return read_tower_csv(cfg.tower_file);
  return polynomial_tower(cfg.tower_n, cfg.tower_alpha);
}

int resolve_n0(const FiniteTowerModel& m, const ExperimentConfig& cfg) {
  if (cfg.n0_override > 0) return cfg.n0_override;
  const MixingProbe probe = find_n0_gamma0(m, 1024);
  return std::max(1, probe.n0);
}

// ---------------------------------------------------------------- tails

nlohmann::json cmd_tails(const ExperimentConfig& cfg, OutputTracker& outs) {
  CircleMap map({cfg.gamma, cfg.degree});
  const int n_max = cfg.n_max > 0 ? cfg.n_max : 2 * cfg.max_time;
  InducedScheme scheme(map, {n_max, cfg.max_time, cfg.min_len});
  scheme.write_tails_csv(
      outs.track(fs::path(cfg.out_dir) / "tails.csv").string(),
      cfg.max_time);
  const SchemeReport rep = scheme.check_expansion_distortion(256, cfg.seed);
  nlohmann::json j;
  j["pieces"] = scheme.pieces().size();
  j["truncation_mass"] = scheme.truncation_mass();
  j["beta_inv"] = rep.beta_inv;
  j["distortion_C"] = rep.distortion_C;
  j["cell_min_deriv"] = rep.cell_min_deriv;
  j["cell_distortion"] = rep.cell_distortion;
  j["gcd_rstar"] = rep.gcd_rstar;
  std::cout << "tails: pieces=" << scheme.pieces().size()
            << " truncation=" << scheme.truncation_mass()
            << " gcd(R*)=" << rep.gcd_rstar
            << " min(f^R)'=" << rep.beta_inv << "\n";
  return j;
}

nlohmann::json cmd_diam(const ExperimentConfig& cfg, OutputTracker& outs) {
  CircleMap map({cfg.gamma, cfg.degree});
  const int max_time = std::max(cfg.max_time, cfg.k_max + 2);
  const int n_max = cfg.n_max > 0 ? cfg.n_max : 2 * max_time;
  InducedScheme scheme(map, {n_max, max_time, cfg.min_len});
  const std::vector<double> d = scheme.delta_k(cfg.k_max);
  scheme.write_delta_csv(
      outs.track(fs::path(cfg.out_dir) / "delta.csv").string(), d);
  nlohmann::json j;
  j["k_max"] = cfg.k_max;
  j["delta_last"] = d.back();
  std::cout << "diam: k_max=" << cfg.k_max << " delta[k_max]=" << d.back()
            << "\n";
  return j;
}

nlohmann::json cmd_correlate(const ExperimentConfig& cfg,
                             OutputTracker& outs) {
  SolenoidParams sp;
  sp.circle = {cfg.gamma, cfg.degree};
  Solenoid s(sp);
  const Observable phi = observable_by_name(cfg.observable);
  const Observable psi = observable_by_name(
      cfg.observable2.empty() ? cfg.observable : cfg.observable2);
  CorrConfig cc;
  cc.orbit_len = cfg.orbit_len;
  cc.ensemble = cfg.ensemble;
  cc.burn_in = cfg.burn_in;
  cc.seed = cfg.seed;
  const CorrelationSeries series =
      correlation(s, phi, psi, parse_lags(cfg.lags), cc);
  write_correlation_csv(
      outs.track(fs::path(cfg.out_dir) / "correlation.csv").string(),
      series);
  if (cfg.emit_orbit) {
    Rng rng(cfg.seed);
    OrbitSample orb = s.orbit(s.random_point(rng), 4096, cfg.burn_in);
    CsvWriter w(outs.track(fs::path(cfg.out_dir) / "orbit.csv").string());
    w.header({"j", "x", "y", "z"});
    for (size_t i = 0; i < orb.points.size(); ++i) {
      w.field_int(static_cast<long long>(i));
      w.field_num(orb.points[i].x);
      w.field_num(orb.points[i].y);
      w.field_num(orb.points[i].z);
      w.end_row();
    }
  }
  nlohmann::json j;
  j["evaluations"] = series.evaluations;
  std::cout << "correlate: lags=" << series.lags.size()
            << " evaluations=" << series.evaluations << "\n";
  return j;
}

nlohmann::json cmd_clt(const ExperimentConfig& cfg, OutputTracker& outs) {
  SolenoidParams sp;
  sp.circle = {cfg.gamma, cfg.degree};
  Solenoid s(sp);
  const Observable phi = observable_by_name(cfg.observable);
  const CLTReport rep = clt_test(s, phi, cfg.clt_m, cfg.clt_n, cfg.seed);
  write_clt_csv(outs.track(fs::path(cfg.out_dir) / "clt.csv").string(), rep);
  write_clt_report_json(
      outs.track(fs::path(cfg.out_dir) / "clt_report.json").string(), rep);
  nlohmann::json j;
  j["sigma2"] = rep.sigma2;
  j["ks"] = rep.ks;
  j["p"] = rep.p_value;
  j["flags"] = rep.flags;
  std::cout << "clt: sigma2=" << rep.sigma2 << " ks=" << rep.ks
            << " p=" << rep.p_value << "\n";
  return j;
}

nlohmann::json cmd_tower_tv(const ExperimentConfig& cfg,
                            OutputTracker& outs) {
  const FiniteTowerModel m = make_tower(cfg);
  write_tower_csv(outs.track(fs::path(cfg.out_dir) / "tower.csv").string(),
                  m);
  const DensityVector nu = invariant_density(m);
  const DensityVector lambda = ground_start_density(m);
  const std::vector<double> tv = tv_decay(m, lambda, nu, cfg.tv_steps);
  write_tv_csv(outs.track(fs::path(cfg.out_dir) / "tv.csv").string(), tv);
  nlohmann::json j;
  j["branches"] = m.branches();
  j["mean_return"] = m.mean_return();
  j["tv_last"] = tv.back();
  std::cout << "tower-tv: N=" << m.branches() << " tv[" << cfg.tv_steps
            << "]=" << tv.back() << "\n";
  return j;
}

nlohmann::json cmd_couple(const ExperimentConfig& cfg, OutputTracker& outs) {
  const FiniteTowerModel m = make_tower(cfg);
  const int n0 = resolve_n0(m, cfg);
  const DensityVector lambda = ground_start_density(m);
  const DensityVector nu = invariant_density(m);
  const TailEstimate tail = estimate_T_tail(m, lambda, nu, n0, cfg.pairs,
                                            cfg.horizon, cfg.seed);
  write_coupling_tail_csv(
      outs.track(fs::path(cfg.out_dir) / "coupling_tail.csv").string(), tail,
      cfg.horizon);
  const E1E4Report rep =
      verify_E1_E4(m, lambda, nu, n0, cfg.pairs, cfg.horizon, cfg.seed);
  nlohmann::json j;
  j["n0"] = n0;
  j["eps0_hat"] = rep.eps0_hat;
  j["K0_hat"] = rep.k0_hat;
  j["K2_hat"] = rep.k2_hat;
  j["bins_used"] = rep.bins_used;
  j["bins_flagged"] = rep.bins_flagged;
  j["censored"] = rep.censored;
  std::cout << "couple: n0=" << n0 << " eps0_hat=" << rep.eps0_hat
            << " K0_hat=" << rep.k0_hat << " K2_hat=" << rep.k2_hat
            << " censored=" << rep.censored << "\n";
  return j;
}

nlohmann::json cmd_e3_audit(const ExperimentConfig& cfg,
                            OutputTracker& outs) {
  const FiniteTowerModel m = cfg.tower_file.empty()
                                 ? bundled_n4_model()
                                 : read_tower_csv(cfg.tower_file);
  const int n0 = resolve_n0(m, cfg);
  const DensityVector nu = invariant_density(m);
  const DensityVector lambda = ground_start_density(m);
  double eps = cfg.eps;
  ExtractionResult ext;
  for (;;) {
    try {
      ext = run_extraction(m, lambda, nu, eps, cfg.i_max, n0, cfg.horizon);
      break;
    } catch (const ExtractionNegative&) {
      eps *= 0.5;  // auto-halve until the residual stays nonnegative
      if (eps < 1e-6) throw;
    }
  }
  const std::vector<double> tv =
      tv_decay(m, lambda, nu, static_cast<int>(cfg.horizon));
  // smallest K1 >= 2 making the bound hold at n = 2 n0 (surrogate
  // constant; flagged in the manifest)
  double k1 = 2.0;
  {
    const size_t n = static_cast<size_t>(2 * n0);
    double s = 0.0;
    for (int i = 1; i <= ext.i_max; ++i)
      s += std::pow(1.0 - ext.eps, i) *
           ext.depth_mass[static_cast<size_t>(i)][n];
    if (s > 0.0)
      k1 = std::max(2.0, (tv[n] - 2.0 * ext.depth_mass[0][n]) / s);
  }
  ext.k1 = k1;
  for (size_t n = 0; n < ext.e3_bound.size(); ++n) {
    double s = 0.0;
    for (int i = 1; i <= ext.i_max; ++i)
      s += std::pow(1.0 - ext.eps, i) *
           ext.depth_mass[static_cast<size_t>(i)][n];
    ext.e3_bound[n] = 2.0 * ext.depth_mass[0][n] + k1 * s;
  }
  write_e3_csv(outs.track(fs::path(cfg.out_dir) / "e3_check.csv").string(),
               tv, ext.e3_bound);
  write_extraction_csv(
      outs.track(fs::path(cfg.out_dir) / "extraction.csv").string(), ext);
  bool dominated = true;
  for (size_t n = 0; n < ext.e3_bound.size() && n < tv.size(); ++n)
    if (tv[n] > ext.e3_bound[n] + 1e-12) dominated = false;
  nlohmann::json j;
  j["n0"] = n0;
  j["eps"] = ext.eps;
  j["k1"] = k1;
  j["k1_is_surrogate"] = true;
  j["matching_residual"] = ext.matching_residual;
  j["mass_ledger_residual"] = ext.mass_ledger_residual;
  j["tv_dominated"] = dominated;
  std::cout << "e3-audit: eps=" << ext.eps << " K1=" << k1
            << " matching=" << ext.matching_residual
            << " dominated=" << (dominated ? "yes" : "no") << "\n";
  if (!dominated)
    throw std::runtime_error("exact TV exceeded the assembled (E3) bound");
  return j;
}

nlohmann::json cmd_escape(const ExperimentConfig& cfg, OutputTracker& outs) {
  SolenoidParams sp;
  sp.circle = {cfg.gamma, cfg.degree};
  Solenoid s(sp);
  const Observable dist = observable_by_name("dist_fixed");
  const std::vector<long> checkpoints = {10000, 100000, 1000000};
  CsvWriter w(outs.track(fs::path(cfg.out_dir) / "escape.csv").string());
  w.header({"seed", "n", "avg_dist"});
  int monotone = 0;
  const int n_seeds = 10;
  // Per seed: mean Birkhoff average over an ensemble of Lebesgue-random
  // starts. Single-orbit averages at gamma > 1 are dominated by the
  // heavy-tailed sojourns near the neutral point and fluctuate too much
  // to order three decades reliably; set --ensemble 1 for the raw orbit.
  for (int sd = 0; sd < n_seeds; ++sd) {
    std::vector<double> avgs(checkpoints.size(), 0.0);
    for (int e = 0; e < cfg.ensemble; ++e) {
      Rng rng(cfg.seed,
              static_cast<std::uint64_t>(sd) * 1000 + static_cast<std::uint64_t>(e) + 1);
      Point3 p = s.random_point(rng);
      double acc = 0.0;
      long done = 0;
      for (size_t ci = 0; ci < checkpoints.size(); ++ci) {
        for (long j2 = done; j2 < checkpoints[ci]; ++j2) {
          acc += dist.f3(s, p);
          p = s.step(p);
        }
        done = checkpoints[ci];
        avgs[ci] += acc / static_cast<double>(done) /
                    static_cast<double>(cfg.ensemble);
      }
    }
    bool mono = true;
    for (size_t i = 1; i < avgs.size(); ++i)
      if (!(avgs[i] < avgs[i - 1])) mono = false;
    if (mono) ++monotone;
    for (size_t i = 0; i < avgs.size(); ++i) {
      w.field_int(sd);
      w.field_int(checkpoints[i]);
      w.field_num(avgs[i]);
      w.end_row();
    }
  }
  nlohmann::json j;
  j["monotone_seeds"] = monotone;
  j["seeds"] = n_seeds;
  std::cout << "escape: monotone averages in " << monotone << "/" << n_seeds
            << " seeds\n";
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"intermittent-solenoid dynamics laboratory"};
  app.set_config("--config");
  ExperimentConfig cfg;
  app.add_option("--gamma", cfg.gamma, "intermittency exponent (> 0)")
      ->check(CLI::PositiveNumber);
  app.add_option("--degree", cfg.degree, "circle map degree (>= 2)")
      ->check(CLI::Range(2, 64));
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--orbit-len", cfg.orbit_len)->check(CLI::PositiveNumber);
  app.add_option("--ensemble", cfg.ensemble)->check(CLI::PositiveNumber);
  app.add_option("--burn-in", cfg.burn_in)->check(CLI::NonNegativeNumber);
  app.add_option("--max-time", cfg.max_time)->check(CLI::PositiveNumber);
  app.add_option("--n-max", cfg.n_max)->check(CLI::NonNegativeNumber);
  app.add_option("--min-len", cfg.min_len)->check(CLI::PositiveNumber);
  app.add_option("--k-max", cfg.k_max)->check(CLI::PositiveNumber);
  app.add_option("--lags", cfg.lags);
  app.add_option("--clt-m", cfg.clt_m)->check(CLI::PositiveNumber);
  app.add_option("--clt-n", cfg.clt_n)->check(CLI::PositiveNumber);
  app.add_option("--n0-override", cfg.n0_override);
  app.add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  app.add_option("--pairs", cfg.pairs)->check(CLI::PositiveNumber);
  app.add_option("--eps", cfg.eps)->check(CLI::PositiveNumber);
  app.add_option("--i-max", cfg.i_max)->check(CLI::PositiveNumber);
  app.add_option("--tv-steps", cfg.tv_steps)->check(CLI::PositiveNumber);
  app.add_option("--tower-n", cfg.tower_n)->check(CLI::PositiveNumber);
  app.add_option("--tower-alpha", cfg.tower_alpha)
      ->check(CLI::PositiveNumber);
  app.add_option("--tower-file", cfg.tower_file);
  app.add_option("--observable", cfg.observable);
  app.add_option("--observable2", cfg.observable2);
  app.add_option("--out", cfg.out_dir, "output directory");
  app.add_flag("--emit-orbit", cfg.emit_orbit, "also write orbit.csv");

  app.require_subcommand(1);
  const std::vector<std::string> names = {"tails",    "diam",   "correlate",
                                          "clt",      "tower-tv", "couple",
                                          "e3-audit", "escape"};
  for (const auto& n : names) app.add_subcommand(n)->fallthrough();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string sub;
  for (const auto& n : names)
    if (app.got_subcommand(n)) sub = n;

  OutputTracker outs;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    nlohmann::json report;
    if (sub == "tails")
      report = cmd_tails(cfg, outs);
    else if (sub == "diam")
      report = cmd_diam(cfg, outs);
    else if (sub == "correlate")
      report = cmd_correlate(cfg, outs);
    else if (sub == "clt")
      report = cmd_clt(cfg, outs);
    else if (sub == "tower-tv")
      report = cmd_tower_tv(cfg, outs);
    else if (sub == "couple")
      report = cmd_couple(cfg, outs);
    else if (sub == "e3-audit")
      report = cmd_e3_audit(cfg, outs);
    else if (sub == "escape")
      report = cmd_escape(cfg, outs);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(cfg.out_dir, sub, cfg, outs, wall, report);
    return 0;
  } catch (const std::exception& e) {
    outs.discard_all();
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sollab
