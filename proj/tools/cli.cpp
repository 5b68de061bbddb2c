#include "hypharm/cli.hpp"

#include "hypharm/hypharm.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <random>

namespace hypharm {

namespace fs = std::filesystem;

namespace {

// Sub-seeds are always drawn in this order from the one master generator.
struct Seeds {
  std::uint64_t sampler, oracle, points;
  explicit Seeds(std::uint64_t master) {
    std::mt19937_64 gen(master);
    sampler = gen();
    oracle = gen();
    points = gen();
  }
};

std::string num(double v) { return fmt::format("{}", v); }

void write_file(const fs::path& p, const std::string& text, CommandResult& r) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw config_error("cannot write output '" + p.string() + "'");
  os << text;
  r.outputs.push_back(p);
}

MetricPreset preset_of(const ExperimentConfig& c) { return parse_preset(c.get("run", "preset")); }

QuadratureSpec quadrature_of(const ExperimentConfig& c) {
  QuadratureSpec q;
  q.nodes_per_axis = static_cast<int>(c.integer("quadrature", "nodes_per_axis"));
  q.jitter = c.number("quadrature", "jitter");
  q.refine_target = c.number("quadrature", "refine_target");
  q.max_nodes = static_cast<int>(c.integer("quadrature", "max_nodes"));
  try {
    q.validate();
  } catch (const config_error& e) {
    c.fail("quadrature", "nodes_per_axis", e.what());
  }
  return q;
}

BoundaryMap map_of(const ExperimentConfig& c) { return parse_boundary_map(c.get("map", "boundary")); }

std::vector<Vec3> lattice_of(const ExperimentConfig& c) {
  const auto ts = c.numbers("lattice", "ts");
  for (double t : ts)
    if (!(t > 0.0)) c.fail("lattice", "ts", "heights must be positive");
  return halfspace_lattice(c.numbers("lattice", "xs"), ts);
}

SphereSampler sampler_of(const ExperimentConfig& c, const Seeds& s) {
  const long n = c.integer("sampler", "count");
  if (n < 1) c.fail("sampler", "count", "must be positive");
  return c.get("sampler", "scheme") == "random" ? SphereSampler::random(static_cast<int>(n), s.sampler)
                                                : SphereSampler::fibonacci(static_cast<int>(n));
}

int radial_nodes_of(const ExperimentConfig& c) {
  const long n = c.integer("sampler", "radial_nodes");
  if (n < 2) c.fail("sampler", "radial_nodes", "need at least 2 nodes");
  return static_cast<int>(n);
}

struct ResolvedLedger {
  ConstantsLedger ledger;
  std::string notes;
};

// Ledger inputs: numbers are supplied, keywords are measured.
ResolvedLedger ledger_of(const ExperimentConfig& c, const Seeds& seeds) {
  ResolvedLedger out;
  const BoundaryMap f = map_of(c);
  auto value = [&](const std::string& key) -> std::optional<LedgerValue> {
    const std::string& v = c.get("ledger", key);
    if (v.empty()) return std::nullopt;
    if (v == "measure" && key == "K") {
      double K = 1.0;
      for (double x : c.numbers("lattice", "xs"))
        for (double y : c.numbers("lattice", "xs")) {
          try {
            K = std::max(K, distortion_boundary(f, Vec2(x, y)));
          } catch (const not_differentiable_error&) {
            // singular points carry no distortion
          }
        }
      return LedgerValue{K, Provenance::measured, "max boundary distortion on the lattice"};
    }
    if (v == "measure" && key == "T") {
      const Measurement m = tension_sup_estimate(f, lattice_of(c), quadrature_of(c));
      return m.as_ledger(fmt::format("lattice sup at ({}, {}, {})", m.argmax.x(), m.argmax.y(), m.argmax.z()));
    }
    if (v == "oracle") {
      COracleOptions o;
      o.samples = static_cast<int>(c.integer("oracle", "samples"));
      o.seed = seeds.oracle;
      const double K1 = c.number("oracle", "K1");
      return LedgerValue{q_from_oracles(K1, o), Provenance::measured, fmt::format("1/(C K2) at K1 = {}", K1)};
    }
    return LedgerValue{c.number("ledger", key), Provenance::supplied, ""};
  };
  out.ledger.K = value("K");
  out.ledger.q = value("q");
  out.ledger.T = value("T");
  out.ledger.D = value("D");
  if (!c.get("ledger", "r0").empty()) {
    const double r0 = c.number("ledger", "r0");
    if (!(r0 > 0.0 && r0 < 1.0)) c.fail("ledger", "r0", "must lie in (0, 1)");
    out.ledger.r0 = r0;
  }
  return out;
}

// Calibration family for the Green identity.
std::vector<std::pair<std::string, ScalarField>> green_family() {
  return {{"constant", [](const Vec3&) { return 1.0; }},
          {"x1", [](const Vec3& x) { return x.x(); }},
          {"norm_sq", [](const Vec3& x) { return x.squaredNorm(); }},
          {"one_minus_norm_sq", [](const Vec3& x) { return 1.0 - x.squaredNorm(); }}};
}

bool green_suite(const ExperimentConfig& c, const Seeds& seeds, const fs::path& out, CommandResult& r) {
  const MetricPreset m = preset_of(c);
  const SphereSampler s = sampler_of(c, seeds);
  const int n = radial_nodes_of(c);
  const double tol = c.number("verify", "green_tol");
  std::string text = output_header(c, "verify green");
  text += fmt::format("# preset {}\n# sampler {}\n# radial_nodes {}\n# tolerance {}\n", m.name(), s.describe(), n, tol);
  text += "# columns function,r,center,integral,average,residual,pass\n";
  bool all = true;
  for (const auto& [name, F] : green_family())
    for (double rad : c.numbers("verify", "radii")) {
      if (!(rad > 0.0 && rad < 1.0)) c.fail("verify", "radii", "radii must lie in (0, 1)");
      const GreenIdentityTerms g = green_identity_terms(F, rad, m, s, n, FdOptions{});
      const bool pass = g.residual() < tol;
      all = all && pass;
      text += fmt::format("{},{},{},{},{},{},{}\n", name, rad, num(g.center), num(g.integral), num(g.average),
                          num(g.residual()), pass ? 1 : 0);
    }
  write_file(out / "verify_green.csv", text, r);
  r.summary += fmt::format("green identity ({}): {}\n", m.name(), all ? "pass" : "FAIL");
  return all;
}

bool chain_suite(const ExperimentConfig& c, const Seeds& seeds, const fs::path& out, CommandResult& r) {
  const std::string& path = c.get("verify", "checkpoint");
  if (path.empty()) c.fail("verify", "checkpoint", "the chain suite needs a checkpoint written by 'hypharm flow'");
  if (!fs::exists(path))
    c.fail("verify", "checkpoint", "'" + path + "' does not exist; run 'hypharm flow' with this map first");
  const MapField H = load_checkpoint(path);
  if (H.grid.chart() != Chart::ball) c.fail("verify", "checkpoint", "expected a ball-grid checkpoint");
  ResolvedLedger L = ledger_of(c, seeds);
  try {
    L.ledger.require_complete();
  } catch (const config_error& e) {
    c.fail("ledger", "K", e.what());
  }
  const double rad = c.number("verify", "r");
  if (!(rad > 0.0 && rad < H.grid.radius())) c.fail("verify", "r", "must lie inside the checkpoint grid");
  MainChainOptions o;
  o.radial_nodes = radial_nodes_of(c);
  o.green_tol = c.number("verify", "chain_green_tol");
  if (!(o.green_tol > 0.0)) c.fail("verify", "chain_green_tol", "must be positive");
  const MainChainReport rep = main_chain_report(map_of(c), rad, H, L.ledger, sampler_of(c, seeds), quadrature_of(c), o);
  std::string text = output_header(c, "verify chain");
  text += fmt::format("# checkpoint {}\n", path);
  text += to_text(rep);
  text += fmt::format("all_pass: {}\n", rep.all_pass());
  write_file(out / "verify_chain.txt", text, r);
  r.summary += fmt::format("main chain at r = {}: {}\n", rad, rep.all_pass() ? "pass" : "FAIL");
  return rep.all_pass();
}

}  // namespace

CommandResult cmd_extend(const ExperimentConfig& c, const fs::path& out) {
  CommandResult r;
  const BoundaryMap f = map_of(c);
  const MetricPreset m = preset_of(c);
  const InteriorMap psi = InteriorMap::good_extension(f, quadrature_of(c));
  std::string text = output_header(c, "extend");
  text += fmt::format("# map {}\n# preset {}\n", f.to_string(), m.name());
  text += "# columns x,y,t,psi1,psi2,psi3,tension,distortion,energy\n";
  double worst = 0.0;
  for (const Vec3& p : lattice_of(c)) {
    const LocalReport lr = local_report(m, psi, p);
    worst = std::max(worst, lr.tension);
    text += fmt::format("{},{},{},{},{},{},{},{},{}\n", p.x(), p.y(), p.z(), num(lr.image.x()), num(lr.image.y()),
                        num(lr.image.z()), num(lr.tension), num(lr.distortion), num(lr.energy));
  }
  write_file(out / "extend.csv", text, r);
  r.summary = fmt::format("extend: {} lattice nodes, max |tau| {}\n", lattice_of(c).size(), worst);
  return r;
}

CommandResult cmd_flow(const ExperimentConfig& c, const fs::path& out) {
  CommandResult r;
  const double rad = c.number("grid", "radius");
  if (!(rad > 0.0 && rad < 1.0)) c.fail("grid", "radius", "must lie in (0, 1)");
  const long res = c.integer("grid", "resolution");
  if (res < 5 || res % 2 == 0) c.fail("grid", "resolution", "need an odd count of at least 5");
  const double tol = c.number("grid", "tol");
  if (!(tol > 0.0)) c.fail("grid", "tol", "must be positive");
  const long max_iter = c.integer("grid", "max_iter");
  if (max_iter < 0) c.fail("grid", "max_iter", "must be non-negative");
  FlowOptions o;
  o.stencil = parse_stencil(c.get("grid", "stencil"));
  o.cfl = c.number("grid", "cfl");
  if (!(o.cfl > 0.0 && o.cfl <= stability_limit(o.stencil)))
    c.fail("grid", "cfl", fmt::format("must lie in (0, {}] for this stencil", stability_limit(o.stencil)));

  const MapField start = init_field(map_of(c), GridDomain::ball(rad, static_cast<int>(res)), quadrature_of(c), preset_of(c));
  const FlowResult fr = run_flow(start, tol, static_cast<int>(max_iter), o);
  const FlowReport& rep = fr.report;
  const std::string header = output_header(c, "flow");

  std::ostringstream ck;
  write_checkpoint(ck, fr.field, header);
  write_file(out / "flow_checkpoint.csv", ck.str(), r);

  std::string report = header;
  report += fmt::format("map: {}\npreset: {}\ngrid: ball radius {} resolution {}\nstencil: {}\ncfl: {}\n",
                        map_of(c).to_string(), preset_of(c).name(), rad, res, stencil_name(rep.stencil), o.cfl);
  report += fmt::format("tol: {}\nmax_iter: {}\niterations: {}\nstep: {}\nrejections: {}\n", tol, max_iter,
                        rep.iterations, num(rep.step), rep.rejections);
  report += fmt::format("initial_tension: {}\nfinal_tension: {}\nconverged: {}\n", num(rep.initial_tension),
                        num(rep.final_tension), rep.converged);
  const TensionSplit split = tension_split(fr.field, rep.stencil);
  report += fmt::format("final_tension_core: {} ({} nodes)\nfinal_tension_boundary_layer: {} ({} nodes)\n",
                        num(split.core), split.core_nodes, num(split.layer), split.layer_nodes);
  write_file(out / "flow_report.txt", report, r);

  std::string hist = header + "# columns iteration,sup_tension\n";
  hist += fmt::format("0,{}\n", num(rep.initial_tension));
  for (std::size_t i = 0; i < rep.history.size(); ++i) hist += fmt::format("{},{}\n", i + 1, num(rep.history[i]));
  write_file(out / "flow_history.csv", hist, r);

  r.exit_code = rep.converged ? kExitPass : kExitFail;
  r.summary = fmt::format("flow: {} iterations, sup tension {} -> {}, {}\n", rep.iterations, rep.initial_tension,
                          rep.final_tension, rep.converged ? "converged" : "NOT converged");
  return r;
}

CommandResult cmd_verify(const ExperimentConfig& c, const fs::path& out) {
  CommandResult r;
  const Seeds seeds(c.unsigned_integer("run", "seed"));
  const std::string& suite = c.get("verify", "suite");
  bool pass = true;
  if (suite == "green" || suite == "all") pass = green_suite(c, seeds, out, r) && pass;
  if (suite == "chain" || suite == "all") pass = chain_suite(c, seeds, out, r) && pass;
  r.exit_code = pass ? kExitPass : kExitFail;
  return r;
}

CommandResult cmd_constants(const ExperimentConfig& c, const fs::path& out) {
  CommandResult r;
  const Seeds seeds(c.unsigned_integer("run", "seed"));
  ResolvedLedger L = ledger_of(c, seeds);
  L.ledger.require_complete();
  const ConstantsLedger& l = L.ledger;

  const double K1 = c.number("oracle", "K1");
  if (!(K1 >= 1.0)) c.fail("oracle", "K1", "must be at least 1");
  COracleOptions co;
  co.samples = static_cast<int>(c.integer("oracle", "samples"));
  co.seed = seeds.oracle;
  co.max_distortion = K1;
  const COracleResult C = c_oracle(co);

  std::string text = output_header(c, "constants");
  text += fmt::format("map: {}\n", map_of(c).to_string());
  text += fmt::format("K1: {}\nK2: {}\nC: {}\nC_closed_form: {}\nC_samples: {}\nC_seed: {}\n", K1, num(k2_oracle(K1)),
                      num(C.C), num(c_closed_form(K1)), C.samples, C.seed);
  text += to_text(l);
  text += "# columns r,phi_K,psi_K\n";
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(0.1 * i);
  for (double rr : grid) text += fmt::format("{},{},{}\n", rr, num(l.phi(rr)), num(l.psi(rr)));
  text += fmt::format("phi_increasing: {}\npsi_increasing: {}\n", l.phi_increasing(grid), l.psi_increasing(grid));
  write_file(out / "constants.txt", text, r);
  r.summary = fmt::format("constants: P = {}, eps0 = {}, D1 = {}\n", l.P(), l.eps0(), l.D1());
  return r;
}

CommandResult cmd_hopf(const ExperimentConfig& c, const fs::path& out) {
  CommandResult r;
  const Seeds seeds(c.unsigned_integer("run", "seed"));
  const long n_min = c.integer("hopf", "n_min"), n_max = c.integer("hopf", "n_max");
  if (n_min < 2) c.fail("hopf", "n_min", "n must be at least 2");
  if (n_max < n_min) c.fail("hopf", "n_max", "must be at least n_min");
  const long points = c.integer("hopf", "points");
  if (points < 1) c.fail("hopf", "points", "must be positive");
  const std::string header = output_header(c, "hopf");

  std::mt19937_64 gen(seeds.points);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Complex> pts;
  for (long i = 0; i < points; ++i) {
    const double rad = std::sqrt(u(gen)), th = 2.0 * kPi * u(gen);
    pts.push_back(std::polar(rad, th));
  }

  bool pass = true;
  std::string rot = header + "# columns n,max_residual,max_invariance_gap,pass\n";
  for (long n = n_min; n <= n_max; ++n) {
    const Complex R = std::polar(1.0, 2.0 * kPi / static_cast<double>(n));
    double worst = 0.0, gap = 0.0;
    for (Complex z : pts) {
      const double a = rotation_identity_residual(static_cast<int>(n), z);
      worst = std::max(worst, a);
      gap = std::max(gap, std::abs(rotation_identity_residual(static_cast<int>(n), R * z) - a));
    }
    const bool ok = worst <= 1e-12 && gap <= 1e-12;
    pass = pass && ok;
    rot += fmt::format("{},{},{},{}\n", n, num(worst), num(gap), ok ? 1 : 0);
  }
  write_file(out / "hopf_rotation.csv", rot, r);

  std::string var = header + "# columns map,max_abs_hopf,pass\n";
  for (const DiscMap& F : {DiscMap::identity(), DiscMap::rotation(0.4), DiscMap::mobius({0.3, -0.2}, 0.7),
                           DiscMap::power(3)}) {
    double worst = 0.0;
    for (Complex z : pts)
      if (std::abs(z) < 0.95) worst = std::max(worst, std::abs(hopf_differential(F, z)));
    const bool ok = worst <= 1e-12;
    pass = pass && ok;
    var += fmt::format("\"{}\",{},{}\n", F.name, num(worst), ok ? 1 : 0);
  }
  write_file(out / "hopf_variants.csv", var, r);

  DiscFlowOptions o;
  o.radius = c.number("hopf", "radius");
  o.resolution = static_cast<int>(c.integer("hopf", "resolution"));
  o.tol = c.number("hopf", "tol");
  if (!(o.radius > 0.0 && o.radius < 1.0)) c.fail("hopf", "radius", "must lie in (0, 1)");
  if (o.resolution < 9) c.fail("hopf", "resolution", "need at least 9 nodes per axis");
  const CircleMap control = parse_circle_map(c.get("hopf", "control"));
  const CircleMap target = parse_circle_map(c.get("hopf", "boundary"));
  const DiscFlowResult cf = disc_flow(control, o);
  const DiscFlowResult tf = disc_flow(target, o);
  const double floor = disc_holomorphy_sup(cf), res = disc_holomorphy_sup(tf);
  const double limit = c.number("hopf", "ratio_limit");
  const bool hol_ok = cf.report.converged && tf.report.converged && res <= limit * floor;
  pass = pass && hol_ok;
  std::string hol = header;
  hol += fmt::format("# disc radius {}, resolution {}, tol {}; residual sup over |z| <= radius/2\n", o.radius,
                     o.resolution, o.tol);
  hol += "# columns role,map,iterations,converged,final_tension,sup_residual\n";
  hol += fmt::format("control,\"{}\",{},{},{},{}\n", control.name, cf.report.iterations, cf.report.converged ? 1 : 0,
                     num(cf.report.final_tension), num(floor));
  hol += fmt::format("target,\"{}\",{},{},{},{}\n", target.name, tf.report.iterations, tf.report.converged ? 1 : 0,
                     num(tf.report.final_tension), num(res));
  hol += fmt::format("# floor {}\n# ratio {}\n# limit {}\n# pass {}\n", num(floor), num(res / floor), limit, hol_ok ? 1 : 0);
  write_file(out / "hopf_holomorphy.csv", hol, r);

  const long gn = c.integer("hopf", "grid");
  if (gn < 2) c.fail("hopf", "grid", "need at least 2 points per axis");
  std::ostringstream grid;
  grid << header;
  write_hopf_grid(grid, tf.map(), 0.9 * o.radius, static_cast<int>(gn));
  write_file(out / "hopf_grid.csv", grid.str(), r);

  r.exit_code = pass ? kExitPass : kExitFail;
  r.summary = fmt::format("hopf: rotation identity and variants {}, holomorphy ratio {} (limit {})\n",
                          pass ? "pass" : "checked", res / floor, limit);
  return r;
}

CommandResult run_command(const ExperimentConfig& c, const fs::path& out) {
  fs::create_directories(out);
  const std::string& cmd = c.get("run", "command");
  if (cmd == "extend") return cmd_extend(c, out);
  if (cmd == "flow") return cmd_flow(c, out);
  if (cmd == "verify") return cmd_verify(c, out);
  if (cmd == "constants") return cmd_constants(c, out);
  return cmd_hopf(c, out);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"hypharm: harmonic extensions of boundary maps of hyperbolic 3-space"};
  std::string command, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "extend | flow | verify | constants | hopf")
      ->required()
      ->check(CLI::IsMember({"extend", "flow", "verify", "constants", "hopf"}));
  app.add_option("--config", config_path, "config file, or an output file with an embedded config")->required();
  app.add_option("--out", out_dir, "output directory (overrides [output] dir)");
  app.add_option("--seed", seed, "seed override");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    ExperimentConfig c = ExperimentConfig::load(config_path);
    if (c.explicitly_set("run", "command") && c.get("run", "command") != command) {
      c.fail("run", "command", fmt::format("config is for '{}', not '{}'", c.get("run", "command"), command));
    }
    c.set("run", "command", command);
    if (seed) c.set("run", "seed", std::to_string(*seed));
    if (!out_dir.empty()) c.set("output", "dir", out_dir);
    const CommandResult r = run_command(c, c.get("output", "dir"));
    std::cout << r.summary;
    for (const auto& p : r.outputs) std::cout << "wrote " << p.string() << "\n";
    return r.exit_code;
  } catch (const config_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const domain_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
}

}  // namespace hypharm
