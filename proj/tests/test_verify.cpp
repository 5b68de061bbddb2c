#include <catch_amalgamated.hpp>

#include "hypharm/verify.hpp"

#include <random>

using namespace hypharm;
using Catch::Approx;

namespace {

const LinearMap kDiag{2, 0, 0, 1, Vec2::Zero()};
const LinearMap kShear{1, 0.7, 0, 1, Vec2::Zero()};

ConstantsLedger unit_ledger(double r0 = 0.5) {
  const LedgerValue one{1.0, Provenance::supplied, ""};
  return constants_ledger_build(LedgerValue{2.0, Provenance::supplied, ""}, one, one, one, r0);
}

}  // namespace

TEST_CASE("spherical averages") {
  const auto fib = SphereSampler::fibonacci(2048);
  CHECK(spherical_average([](const Vec3&) { return 2.5; }, 0.7, fib) == Approx(2.5).epsilon(1e-14));
  CHECK(std::abs(spherical_average([](const Vec3& x) { return x.x(); }, 0.6, fib)) < 1e-3);
  CHECK(spherical_average([](const Vec3& x) { return x.squaredNorm(); }, 0.6, fib) == Approx(0.36).epsilon(1e-13));

  // Random scheme: within 3 standard errors of zero.
  const auto rnd = SphereSampler::random(4000, 11);
  const double mean = spherical_average([](const Vec3& x) { return x.x(); }, 1.0 - 1e-9, rnd);
  CHECK(std::abs(mean) < 3.0 * std::sqrt(1.0 / 3.0 / 4000));
  CHECK_THROWS_AS(spherical_average([](const Vec3&) { return 1.0; }, 1.0, fib), domain_error);
  CHECK_THROWS_AS(spherical_average([](const Vec3&) -> double { throw domain_error("x"); }, 0.5, fib),
                  integration_error);
}

TEST_CASE("radial weighted integrals") {
  const auto fib = SphereSampler::fibonacci(512);
  const auto one = [](const Vec3&) { return 1.0; };
  const double direct = radial_weighted_integral(RadialKernel::green(0.5), one, fib).value;
  CHECK(direct == Approx(green_mass(0.5)).epsilon(1e-12));
  CHECK(direct > 0);

  // Monte Carlo in the 0.5-ball: int G dlambda = r^3 E[G(x) / (1 - |x|^2)^3].
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double sum = 0, sum2 = 0;
  int n = 0;
  while (n < 200000) {
    const Vec3 x(u(gen), u(gen), u(gen));
    if (x.norm() >= 0.5 || x.norm() == 0) continue;
    const double v = 0.125 * green_r(0.5, x) * lambda_weight(x);
    sum += v;
    sum2 += v * v;
    ++n;
  }
  const double mc = sum / n, se = std::sqrt((sum2 / n - mc * mc) / n);
  CHECK(std::abs(mc - direct) < 3 * se);

  CHECK(std::abs(radial_weighted_integral(RadialKernel::green(0.7), [](const Vec3& x) { return x.x(); }, fib).value) <
        1e-3);
  CHECK(radial_weighted_integral(RadialKernel::constant(0.0), one, fib).value == 0.0);
  const auto div = radial_weighted_integral(RadialKernel::constant(1.0), one, fib, 16);
  CHECK(div.divergent);
  const auto conv = radial_weighted_integral(
      RadialKernel::constant(1.0), [](const Vec3& x) { return std::pow(1 - x.squaredNorm(), 4); }, fib, 16);
  CHECK_FALSE(conv.divergent);
}

TEST_CASE("Green identity") {
  const std::vector<std::pair<std::string, ScalarField>> family{
      {"const", [](const Vec3&) { return 3.0; }},
      {"x1", [](const Vec3& x) { return x.x(); }},
      {"r2", [](const Vec3& x) { return x.squaredNorm(); }},
      {"1-r2", [](const Vec3& x) { return 1.0 - x.squaredNorm(); }}};
  const auto fib = SphereSampler::fibonacci(2048);
  for (const auto& [name, F] : family) {
    for (double r : {0.3, 0.5, 0.8}) {
      INFO(name << " r=" << r);
      CHECK(green_identity_residual(F, r, MetricPreset::paper_ball(), fib) < 1e-4);
    }
  }
  const auto r2 = [](const Vec3& x) { return x.squaredNorm(); };
  const auto terms = green_identity_terms(r2, 0.5, MetricPreset::standard(), fib);
  CHECK(terms.residual() > 1e-2);
  // Under STANDARD the integral term is a quarter of what the identity needs.
  CHECK(terms.integral * 4 == Approx(terms.average - terms.center).epsilon(1e-5));
}

TEST_CASE("Green estimate bracket") {
  const auto b = green_estimate_scan(green_estimate_grid(1000));
  CHECK(b.lo >= 1.0 / 12 - 1e-9);
  CHECK(b.hi <= 1.0 / 3 + 1e-9);
  CHECK(b.lo == Approx(1.0 / 12).margin(1e-9));
  CHECK(b.hi == Approx(1.0 / 3).margin(1e-9));
  CHECK(green_estimate_value(0.5) == Approx(1.0 / 6.75).epsilon(1e-14));
  CHECK_THROWS_AS(green_estimate_scan({0.0}), domain_error);
}

TEST_CASE("X-set membership and measure") {
  const XSetParams prm{4.0, 1e-4};
  for (const Vec3& p : {Vec3(0, 0, 1), Vec3(0.5, -0.3, 0.2), Vec3(-1, 2, 3)}) {
    const auto x = x_membership(BoundaryMap(kDiag), p, prm);
    CHECK(x.member);
    CHECK(x.distortion_margin == Approx(2.0).epsilon(1e-6));
    CHECK(x.energy_margin == Approx(0.5).epsilon(1e-6));
    CHECK_FALSE(x_membership(BoundaryMap(kDiag), p, XSetParams{4.0, 0.0}).member);
  }
  const auto fib = SphereSampler::fibonacci(64);
  for (double rho : {0.3, 0.8}) {
    CHECK(x_measure(BoundaryMap(kShear), rho, XSetParams{4.0, 1e-4}, fib) == 1.0);
    CHECK(x_measure(BoundaryMap(kShear), rho, XSetParams{4.0, 0.0}, fib) == 0.0);
  }
  const auto rp = x_membership(BoundaryMap::radial_power(2), Vec3(0.3, 0.2, 2.0), XSetParams{4.0, 0.05});
  CHECK(std::isfinite(rp.tension_margin));
  CHECK_THROWS_AS(XSetParams({0.5, 1.0}).validate(), config_error);
}

TEST_CASE("step-function integral") {
  const auto fib = SphereSampler::fibonacci(32);
  const XSetParams prm{4.0, 1e-4};
  double prev = 0;
  for (double r : {0.5, 0.7, 0.9}) {
    const double v = phi_step_integral(BoundaryMap(kDiag), 2.0, 0.5, prm, r, fib, 16);
    CHECK(v == Approx(0.5 * green_mass(r)).epsilon(1e-6));
    CHECK(v > prev);
    prev = v;
  }
  const auto all = [](const Vec3&) { return true; };
  const auto none = [](const Vec3&) { return false; };
  CHECK(phi_step_integral(all, 2.0, 0.0, 0.6, fib) == 0.0);
  CHECK(phi_step_integral(none, 2.0, 0.5, 0.6, fib) == Approx(-2.0 * green_mass(0.6)).epsilon(1e-12));
}

TEST_CASE("constants ledger") {
  const ConstantsLedger l = unit_ledger();
  CHECK(l.d_prime() == 0.0);
  CHECK(l.d_second() == 4.0);
  CHECK(l.eps0() == Approx(0.0612297).margin(1e-7));
  CHECK(l.P() == Approx(2.1224594).margin(1e-7));
  CHECK(l.M() == 1.0);
  const std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  CHECK(l.phi_increasing(grid));
  CHECK(l.psi_increasing(grid));
  CHECK(l.D1() == l.psi(0.5) + l.d_second());
  CHECK(unit_ledger(1e-6).D1() == Approx(4.0).margin(1e-9));
  CHECK(to_text(l) == to_text(unit_ledger()));
  CHECK(l.psi(0.7) == l.P() * l.phi(0.7) * green_mass(0.7));

  ConstantsLedger partial;
  partial.q = LedgerValue{0.3, Provenance::measured, "oracle"};
  try {
    partial.require_complete();
    FAIL("expected an error");
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("K") != std::string::npos);
    CHECK(msg.find("T") != std::string::npos);
    CHECK(msg.find("r0") != std::string::npos);
  }
  CHECK(partial.eps0() == Approx(0.075 * std::tanh(0.25)));
  CHECK_THROWS_AS(partial.P(), config_error);
  CHECK_THROWS_AS(unit_ledger(1.0), domain_error);
  // Green mass is strictly increasing and vanishes at 0.
  CHECK(green_mass(0.0) == 0.0);
  CHECK(green_mass(0.3) < green_mass(0.31));
}

TEST_CASE("K2 oracle") {
  CHECK(k2_oracle(1.0) == Approx(1.5).margin(1e-6));
  double prev = 0;
  for (double K : {1.0, 2.0, 4.0, 8.0}) {
    const double v = k2_oracle(K);
    CHECK(v > prev);
    prev = v;
    // The maximum sits at sigma = (K, 1, 1).
    CHECK(v == Approx(k2_ratio(K, 1, 1)).epsilon(1e-12));
  }
  CHECK(k2_ratio(2.0, 1.3, 0.7) == Approx(k2_ratio(7.4, 4.81, 2.59)).epsilon(1e-12));
}

TEST_CASE("C oracle") {
  CHECK(c_ratio(Mat3::Identity(), Vec3::UnitZ()) == Approx(0.5).epsilon(1e-15));
  const Mat3 a = (Mat3() << 1, 0.3, -0.2, 0.5, 2, 0.1, -0.4, 0.2, 0.7).finished();
  const Vec3 w = Vec3(0.3, -0.5, 0.8).normalized();
  CHECK(c_ratio(3.7 * a, w) == Approx(c_ratio(a, w)).epsilon(1e-14));

  COracleOptions o;
  o.max_distortion = 3.0;
  const auto r1 = c_oracle(o), r2 = c_oracle(o);
  CHECK(r1.C == r2.C);
  CHECK(r1.samples + r1.skipped == o.samples);
  CHECK(r1.samples >= 100000);
  CHECK(r1.C <= c_closed_form(3.0) * (1 + 1e-12));
  CHECK(r1.C > 0.97 * c_closed_form(3.0));
  o.scale = 3.7;
  CHECK(c_oracle(o).C == Approx(r1.C).epsilon(1e-12));

  COracleOptions free;
  free.samples = 20000;
  const auto g = c_oracle(free);
  CHECK(std::isfinite(g.C));
  CHECK(g.C > 0.5);
  CHECK(q_from_oracles(1.0, COracleOptions{20000}) == Approx(1.0 / (0.5 * 1.5)).epsilon(1e-9));
}

TEST_CASE("measured constants") {
  const auto lat = default_lattice();
  CHECK(tension_sup_estimate(BoundaryMap(kDiag), lat).value < 1e-5);
  const auto t = tension_sup_estimate(BoundaryMap::radial_power(2), lat);
  CHECK(t.value > 0);
  CHECK(t.provenance == Provenance::measured);

  const auto id = IsometryElement::identity();
  CHECK(conjugation_distance(BoundaryMap::radial_power(2), id, id, lat).value < 1e-12);
  const IsometryElement I = HalfSpaceSimilarity{1.5, 0.4, Vec2(0.3, -0.2)};
  const IsometryElement J = HalfSpaceSimilarity{0.7, -1.1, Vec2(-0.5, 0.25)};
  CHECK(conjugation_distance(BoundaryMap(kShear), I, J, lat).value < 1e-6);

  // A ball translation moves infinity; the post isometry brings it back.
  const IsometryElement T = BallTranslation{Vec3(0.2, -0.1, 0.3)};
  CHECK_THROWS_AS(conjugation_distance(BoundaryMap::radial_power(2), id, T, lat), domain_error);
  const BoundaryMap fj =
      BoundaryMap::compose({BoundaryMap(mobius_from_isometry(T)), BoundaryMap::radial_power(2)});
  const Vec2 w = fj.eval_extended(BoundaryPoint::infinity()).planar();
  const std::vector<Vec3> small{Vec3(0, 0, 1), Vec3(0.5, 0.5, 0.5), Vec3(-1, 0.2, 2)};
  const auto cd = conjugation_distance(BoundaryMap::radial_power(2), isometry_sending_to_infinity(w), T, small);
  CHECK(std::isfinite(cd.value));
}

TEST_CASE("quasi-isometry constants") {
  const auto iso = InteriorMap::isometry(BallTranslation{Vec3(0.3, -0.2, 0.4)}, Chart::ball);
  const auto q1 = qi_constants(iso);
  CHECK(q1.L == 1.0);
  CHECK(q1.A < 1e-9);
  const auto q2 = qi_constants(InteriorMap::linear_harmonic(kDiag));
  CHECK(q2.L <= 2.0 + 0.01);
  CHECK(q2.L > 1.0);
  CHECK(std::isfinite(q2.A));
  const auto constant = InteriorMap::closed_form("const", Chart::ball, Chart::ball, [](const Vec3&) { return Vec3(0.1, 0, 0); });
  CHECK_THROWS_AS(qi_constants(constant), degenerate_error);
  const MapField f = init_field(BoundaryMap(kDiag), GridDomain::ball(0.8, 9), QuadratureSpec{});
  CHECK(qi_constants(f).L <= 2.01);
  CHECK_THROWS_AS(qi_constants(iso, QiOptions{10}), config_error);
}

TEST_CASE("Y-set measure") {
  const GridDomain grid = GridDomain::ball(0.9, 9);
  const auto fib = SphereSampler::fibonacci(128);
  const MapField H = init_field(BoundaryMap(kDiag), grid, QuadratureSpec{});
  const auto lin = y_measure(BoundaryMap(kDiag), 0.5, H, fib);
  CHECK(lin.degenerate);
  CHECK_FALSE(lin.fraction.has_value());

  const auto F = InteriorMap::identity(Chart::halfspace).in_charts(Chart::ball, Chart::ball);
  const auto G = InteriorMap::vertical_scaling(2.0).in_charts(Chart::ball, Chart::ball);
  for (double r : {0.2, 0.5, 0.7}) {
    const auto y = y_measure(F, G, grid, r, fib);
    REQUIRE(y.fraction);
    CHECK(*y.fraction == 1.0);
    CHECK(*y.fraction + *y.complement == 1.0);
    CHECK(y.sup.value == Approx(std::log(2.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(y_measure(F, G, grid, 0.95, fib), domain_error);
}

TEST_CASE("main chain report") {
  const GridDomain grid = GridDomain::ball(0.9, 9);
  const auto fib = SphereSampler::fibonacci(64);
  MainChainOptions o;
  o.radial_nodes = 16;

  const auto F = InteriorMap::identity(Chart::halfspace).in_charts(Chart::ball, Chart::ball);
  const auto G = InteriorMap::vertical_scaling(2.0).in_charts(Chart::ball, Chart::ball);
  const auto pair = main_chain_report(F, G, grid, 0.5, unit_ledger(), fib, o);
  CHECK(pair.green.residual() < 1e-3);
  CHECK(pair.all_pass());

  const auto psi = ball_good_extension(BoundaryMap(kDiag));
  const auto H = InteriorMap::linear_harmonic(kDiag).in_charts(Chart::ball, Chart::ball);
  const auto lin = main_chain_report(psi, H, grid, 0.5, unit_ledger(), fib, o);
  CHECK(lin.norm.value < 1e-6);
  CHECK(lin.all_pass());

  // The stencil at grid scale needs a cell of room beyond r.
  const MapField Hf = init_field(BoundaryMap(kDiag), GridDomain::ball(0.9, 17), QuadratureSpec{});
  const auto lin_grid = main_chain_report(BoundaryMap(kDiag), 0.5, Hf, unit_ledger(), fib, QuadratureSpec{}, o);
  CHECK(lin_grid.all_pass());
  CHECK(to_text(lin_grid).find("grid-sphere-sup") != std::string::npos);

  ConstantsLedger partial;
  partial.T = LedgerValue{1.0, Provenance::measured, ""};
  CHECK_THROWS_AS(main_chain_report(F, G, grid, 0.5, partial, fib, o), config_error);
}
