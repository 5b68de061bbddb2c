#include <catch_amalgamated.hpp>

#include "hypharm/cli.hpp"
#include "hypharm/hypharm.hpp"

#include <fstream>
#include <sstream>

using namespace hypharm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hypharm_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> rows(const fs::path& p) {
  std::vector<std::vector<std::string>> out;
  std::istringstream is(slurp(p));
  std::string l;
  while (std::getline(is, l)) {
    if (l.empty() || l[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(l);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    out.push_back(cells);
  }
  return out;
}

double report_value(const fs::path& p, const std::string& key) {
  std::istringstream is(slurp(p));
  std::string l;
  while (std::getline(is, l))
    if (l.rfind(key + ": ", 0) == 0) return std::stod(l.substr(key.size() + 2));
  FAIL("key " << key << " not found in " << p);
  return 0;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const config_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing and canonical form") {
  const auto c = ExperimentConfig::parse("# comment\n[run]\ncommand = flow\nseed = 5\n\n[grid]\nradius = 0.5\n");
  CHECK(c.get("run", "command") == "flow");
  CHECK(c.unsigned_integer("run", "seed") == 5u);
  CHECK(c.number("grid", "radius") == 0.5);
  CHECK(c.integer("grid", "resolution") == 17);  // default
  const std::string text = c.serialize();
  const auto again = ExperimentConfig::parse(text);
  CHECK(again.serialize() == text);
  CHECK(again.hash() == c.hash());
  CHECK(c.hash().size() == 64u);

  auto d = c;
  d.set("output", "dir", "elsewhere");
  CHECK(d.hash() == c.hash());
  d.set("run", "seed", "6");
  CHECK(d.hash() != c.hash());
}

TEST_CASE("config errors carry line numbers") {
  CHECK(message_of([] { ExperimentConfig::parse("[grid]\nradius = 0.5\nbogus = 1\n", "x.ini"); })
            .find("x.ini:3") != std::string::npos);
  CHECK(message_of([] { ExperimentConfig::parse("[map]\n\nboundary = linear(1, 2)\n", "m.ini"); })
            .find("m.ini:3") != std::string::npos);
  CHECK(message_of([] { ExperimentConfig::parse("[grid]\nradius\n", "s.ini"); }).find("s.ini:2") !=
        std::string::npos);
  CHECK(message_of([] { ExperimentConfig::parse("[grid]\ntol = 1\ntol = 2\n"); }).find("duplicate") !=
        std::string::npos);
  CHECK_THROWS_AS(ExperimentConfig::parse(""), config_error);
  CHECK_THROWS_AS(ExperimentConfig::parse("# nothing\n[run]\n"), config_error);
  CHECK_THROWS_AS(ExperimentConfig::parse("[nosuch]\nx = 1\n"), config_error);
  CHECK_THROWS_AS(ExperimentConfig::parse("[grid]\nstencil = fd3\n"), config_error);
  CHECK_THROWS_AS(ExperimentConfig::parse("[ledger]\nq = measure\n"), config_error);
  CHECK_NOTHROW(ExperimentConfig::parse("[ledger]\nq = oracle\nT = 1.5\nD =\n"));
}

TEST_CASE("embedded config round-trips") {
  auto c = ExperimentConfig::parse("[run]\ncommand = hopf\n[hopf]\nboundary = wobble(0.05, 2)\n");
  const std::string header = output_header(c, "test");
  CHECK(header.find("# config_sha256 " + c.hash()) != std::string::npos);
  const auto embedded = embedded_config(header + "1,2,3\n");
  REQUIRE(embedded.has_value());
  CHECK(*embedded == c.serialize(false));
  CHECK_FALSE(embedded_config("# plain\n1,2\n").has_value());
}

TEST_CASE("extend command") {
  const fs::path out = scratch("extend");
  auto c = ExperimentConfig::parse(
      "[run]\ncommand = extend\n[map]\nboundary = linear(2, 0, 0, 1)\n[lattice]\nxs = -1, 0, 1\nts = 0.5, 1, 2\n");
  const CommandResult r = run_command(c, out);
  CHECK(r.exit_code == kExitPass);
  const auto table = rows(out / "extend.csv");
  CHECK(table.size() == 27u);
  for (const auto& row : table) {
    const double x = std::stod(row[0]), y = std::stod(row[1]), t = std::stod(row[2]);
    CHECK(std::abs(std::stod(row[5]) - std::sqrt(2.5) * t) < 1e-6);
    CHECK(std::abs(std::stod(row[3]) - 2 * x) < 1e-6);
    CHECK(std::abs(std::stod(row[4]) - y) < 1e-6);
  }
  const std::string first = slurp(out / "extend.csv");
  run_command(c, out);
  CHECK(slurp(out / "extend.csv") == first);

  auto id = ExperimentConfig::parse("[map]\nboundary = identity\n");
  run_command(id, out);
  for (const auto& row : rows(out / "extend.csv")) CHECK(std::stod(row[6]) < 1e-6);
}

TEST_CASE("flow command") {
  const fs::path out = scratch("flow");
  // H(L) on the ball grid: its tension is the finite-difference floor, below tol.
  auto c = ExperimentConfig::parse(
      "[run]\ncommand = flow\n[map]\nboundary = linear(2, 0, 0, 1)\n[grid]\nradius = 0.5\nresolution = 13\ntol = "
      "0.05\n");
  CommandResult r = run_command(c, out);
  CHECK(r.exit_code == kExitPass);
  CHECK(report_value(out / "flow_report.txt", "iterations") == 0);
  const MapField f = load_checkpoint((out / "flow_checkpoint.csv").string());
  CHECK(f.grid.dims()[0] == 13);

  c.set("map", "boundary", "radial_power(2)");
  c.set("grid", "max_iter", "0");
  r = run_command(c, out);
  CHECK(r.exit_code == kExitFail);
  CHECK(slurp(out / "flow_report.txt").find("converged: false") != std::string::npos);

  c.set("grid", "cfl", "0.2");
  CHECK_THROWS_AS(run_command(c, out), config_error);
}

TEST_CASE("verify command") {
  const fs::path out = scratch("verify");
  auto c = ExperimentConfig::parse("[run]\ncommand = verify\npreset = paper_ball\n[verify]\nsuite = green\n");
  CHECK(run_command(c, out).exit_code == kExitPass);

  c.set("run", "preset", "standard");
  CHECK(run_command(c, out).exit_code == kExitFail);
  // The STANDARD Laplacian is a quarter of the one the kernel inverts.
  for (const auto& row : rows(out / "verify_green.csv")) {
    if (row[0] != "norm_sq") continue;
    const double center = std::stod(row[2]), integral = std::stod(row[3]), average = std::stod(row[4]);
    CHECK(integral / (average - center) == Catch::Approx(0.25).epsilon(1e-3));
  }

  c.set("verify", "suite", "chain");
  CHECK(message_of([&] { run_command(c, out); }).find("hypharm flow") != std::string::npos);
  c.set("verify", "checkpoint", (out / "missing.csv").string());
  CHECK(message_of([&] { run_command(c, out); }).find("hypharm flow") != std::string::npos);
}

TEST_CASE("constants command") {
  const fs::path out = scratch("constants");
  auto c = ExperimentConfig::parse(
      "[run]\ncommand = constants\n[ledger]\nK = 1\nq = 1\nT = 1\nD = 1\nr0 = 0.5\n[oracle]\nK1 = 1\nsamples = 2000\n");
  CHECK(run_command(c, out).exit_code == kExitPass);
  const fs::path f = out / "constants.txt";
  CHECK(report_value(f, "K2") == Catch::Approx(1.5).margin(1e-6));
  CHECK(report_value(f, "eps0") == Catch::Approx(0.0612297).margin(1e-7));
  CHECK(report_value(f, "P") == Catch::Approx(2.1224594).margin(1e-7));
  CHECK(report_value(f, "D_prime") == 0.0);
  CHECK(report_value(f, "D_second") == 4.0);
  CHECK(slurp(f).find("phi_increasing: true") != std::string::npos);

  auto partial = ExperimentConfig::parse("[run]\ncommand = constants\n[ledger]\nq = 1\nT = 1\n");
  const std::string msg = message_of([&] { run_command(partial, out); });
  CHECK(msg.find("K, D, r0") != std::string::npos);
}

TEST_CASE("hopf command") {
  const fs::path out = scratch("hopf");
  auto c = ExperimentConfig::parse("[run]\ncommand = hopf\n[hopf]\nresolution = 21\n");
  CHECK(run_command(c, out).exit_code == kExitPass);
  for (const auto& row : rows(out / "hopf_rotation.csv")) CHECK(std::stod(row[1]) <= 1e-12);
  CHECK(rows(out / "hopf_rotation.csv").size() == 11u);
  CHECK(slurp(out / "hopf_holomorphy.csv").find("control,") != std::string::npos);

  c.set("hopf", "n_min", "1");
  CHECK_THROWS_AS(run_command(c, out), config_error);
}

TEST_CASE("outputs regenerate from their embedded config") {
  const fs::path a = scratch("regen_a"), b = scratch("regen_b");
  auto c = ExperimentConfig::parse(
      "[run]\ncommand = verify\npreset = paper_ball\nseed = 3\n[sampler]\nscheme = random\ncount = 512\n[verify]\nradii = 0.5\n");
  run_command(c, a);
  const auto again = ExperimentConfig::load((a / "verify_green.csv").string());
  run_command(again, b);
  CHECK(slurp(a / "verify_green.csv") == slurp(b / "verify_green.csv"));
}
