#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sollab/cli.hpp"

using namespace sollab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("sollab_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tails is deterministic: byte-identical reruns") {
  const fs::path d1 = fresh_dir("tails1");
  const fs::path d2 = fresh_dir("tails2");
  const std::vector<std::string> base = {
      "tails", "--gamma", "0.5", "--seed", "7", "--max-time", "128",
      "--min-len", "1e-9"};
  auto run = [&](const fs::path& d) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(d.string());
    return run_cli(args);
  };
  REQUIRE(run(d1) == 0);
  REQUIRE(run(d2) == 0);
  const std::string a = slurp(d1 / "tails.csv");
  const std::string b = slurp(d2 / "tails.csv");
  REQUIRE(!a.empty());
  CHECK(a == b);
  // header row and manifest present
  CHECK(a.rfind("n,mass_R,mass_Rstar,truncation_mass", 0) == 0);
  CHECK(fs::exists(d1 / "manifest.json"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("invalid gamma fails with nonzero exit and no outputs") {
  const fs::path d = fresh_dir("bad");
  const int rc = run_cli({"tails", "--gamma", "0", "--out", d.string()});
  CHECK(rc != 0);
  CHECK(!fs::exists(d / "tails.csv"));
  fs::remove_all(d);
}

TEST_CASE("e3-audit on the bundled model: rowwise domination") {
  const fs::path d = fresh_dir("e3");
  REQUIRE(run_cli({"e3-audit", "--horizon", "128", "--i-max", "5", "--out",
                   d.string()}) == 0);
  std::ifstream f(d / "e3_check.csv");
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "n,tv_exact,e3_bound");
  int rows = 0;
  while (std::getline(f, line)) {
    double n, tv, bound;
    char c1, c2;
    std::istringstream ss(line);
    ss >> n >> c1 >> tv >> c2 >> bound;
    CHECK(tv <= bound + 1e-12);
    ++rows;
  }
  CHECK(rows == 129);
  CHECK(fs::exists(d / "extraction.csv"));
  fs::remove_all(d);
}

TEST_CASE("couple and tower-tv produce the named files") {
  const fs::path d = fresh_dir("misc");
  REQUIRE(run_cli({"couple", "--tower-n", "8", "--pairs", "2000",
                   "--horizon", "256", "--out", d.string()}) == 0);
  CHECK(fs::exists(d / "coupling_tail.csv"));
  REQUIRE(run_cli({"tower-tv", "--tower-n", "16", "--tv-steps", "64",
                   "--out", d.string()}) == 0);
  CHECK(fs::exists(d / "tower.csv"));
  CHECK(fs::exists(d / "tv.csv"));
  const std::string tower = slurp(d / "tower.csv");
  CHECK(tower.rfind("i,p_i,R_i", 0) == 0);
  fs::remove_all(d);
}

TEST_CASE("config file values are overridden by flags") {
  const fs::path d = fresh_dir("cfg");
  {
    std::ofstream f(d / "run.cfg");
    f << "gamma=0.6\nmax-time=64\nmin-len=1e-8\n";
  }
  REQUIRE(run_cli({"tails", "--config", (d / "run.cfg").string(), "--gamma",
                   "0.5", "--out", d.string()}) == 0);
  const std::string manifest = slurp(d / "manifest.json");
  CHECK(manifest.find("\"gamma\": 0.5") != std::string::npos);
  CHECK(manifest.find("\"max_time\": 64") != std::string::npos);
  fs::remove_all(d);
}

TEST_CASE("remaining subcommands run at smoke scale") {
  const fs::path d = fresh_dir("smoke");
  REQUIRE(run_cli({"diam", "--gamma", "0.5", "--k-max", "24", "--max-time",
                   "64", "--out", d.string()}) == 0);
  CHECK(fs::exists(d / "delta.csv"));
  const std::string delta = slurp(d / "delta.csv");
  CHECK(delta.rfind("k,delta_k", 0) == 0);

  REQUIRE(run_cli({"correlate", "--gamma", "0.5", "--orbit-len", "32768",
                   "--ensemble", "2", "--burn-in", "4096", "--lags",
                   "1,2,4,8", "--emit-orbit", "--out", d.string()}) == 0);
  CHECK(fs::exists(d / "correlation.csv"));
  CHECK(fs::exists(d / "orbit.csv"));
  CHECK(slurp(d / "correlation.csv").rfind("n,c_hat,stderr", 0) == 0);
  CHECK(slurp(d / "orbit.csv").rfind("j,x,y,z", 0) == 0);

  REQUIRE(run_cli({"clt", "--gamma", "0.4", "--observable", "sin2pix",
                   "--clt-m", "120", "--clt-n", "1000", "--out",
                   d.string()}) == 0);
  CHECK(fs::exists(d / "clt.csv"));
  CHECK(fs::exists(d / "clt_report.json"));
  CHECK(slurp(d / "clt.csv").rfind("sample_sum", 0) == 0);
  const std::string rep = slurp(d / "clt_report.json");
  CHECK(rep.find("\"sigma2\"") != std::string::npos);
  CHECK(rep.find("\"p\"") != std::string::npos);

  // degenerate observable: module error surfaces, nonzero exit, outputs
  // removed
  REQUIRE(run_cli({"clt", "--gamma", "0.6", "--observable", "sin2pix",
                   "--clt-m", "120", "--clt-n", "1000", "--out",
                   d.string()}) == 0);
  CHECK(slurp(d / "clt_report.json").find("outside-clt-hypothesis") !=
        std::string::npos);

  fs::remove_all(d);
}

TEST_CASE("stochastic outputs are seed-deterministic too") {
  const fs::path d1 = fresh_dir("cp1");
  const fs::path d2 = fresh_dir("cp2");
  const std::vector<std::string> base = {"couple",    "--tower-n", "8",
                                         "--pairs",   "1500",      "--horizon",
                                         "128",       "--seed",    "9"};
  for (const fs::path* d : {&d1, &d2}) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(d->string());
    REQUIRE(run_cli(args) == 0);
  }
  CHECK(slurp(d1 / "coupling_tail.csv") == slurp(d2 / "coupling_tail.csv"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("module errors surface verbatim with nonzero exit") {
  const fs::path d = fresh_dir("err");
  // estimate_T_tail requires >= 1000 samples
  CHECK(run_cli({"couple", "--tower-n", "8", "--pairs", "100", "--out",
                 d.string()}) != 0);
  CHECK(!fs::exists(d / "coupling_tail.csv"));
  // unwritable output location
  CHECK(run_cli({"tails", "--max-time", "16", "--n-max", "32", "--out",
                 "/proc/nonexistent/dir"}) != 0);
  fs::remove_all(d);
}
