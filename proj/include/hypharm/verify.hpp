#pragma once

#include <fmt/format.h>

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hypharm/flow.hpp"

namespace hypharm {

using ScalarField = std::function<double(const Vec3&)>;

// ---- spherical averages and radial integrals ---------------------------------

inline double spherical_average(const ScalarField& F, double rho, const SphereSampler& s) {
  if (!(rho >= 0.0 && rho < 1.0)) throw domain_error(fmt::format("spherical_average: radius {} outside [0, 1)", rho));
  double acc = 0.0;
  for (const Vec3& z : s.nodes()) {
    const Vec3 x = rho * z;
    try {
      acc += F(x);
    } catch (const std::exception& e) {
      throw integration_error(fmt::format("spherical average failed at node ({}, {}, {}): {}", x.x(), x.y(), x.z(), e.what()));
    }
  }
  return acc * s.weight();
}

// Radial function Phi(|x|), identically zero for |x| >= support.
struct RadialKernel {
  std::function<double(double)> phi;
  double support = 1.0;
  std::string name;

  static RadialKernel green(double r) {
    if (!(r > 0.0 && r <= 1.0)) throw domain_error("green kernel radius must lie in (0, 1]");
    return {[r](double rho) { return green_r(r, rho); }, r, fmt::format("G_{}", r)};
  }
  static RadialKernel constant(double c, double support = 1.0) {
    return {[c](double) { return c; }, support, fmt::format("const({})", c)};
  }
};

struct RadialIntegral {
  double value = 0.0;
  bool divergent = false;
  int radial_nodes = 0;
};

// int Phi F dlambda = int_0^1 3 rho^2 Phi(rho) Avr_F(rho) / (1 - rho^2)^3 drho,
// open Gauss-Legendre in rho. Kernels reaching the sphere are integrated over
// shells 1 - 10^-k and flagged divergent if the last shell still matters.
inline RadialIntegral radial_weighted_integral(const RadialKernel& k, const ScalarField& F, const SphereSampler& s,
                                               int radial_nodes = 64) {
  if (radial_nodes < 1) throw config_error("radial rule needs at least one node");
  auto piece = [&](double a, double b) {
    const Rule1D rule = gauss_legendre(radial_nodes, a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double rho = rule.nodes[i];
      const double ph = k.phi(rho);
      if (ph == 0.0) continue;
      acc += rule.weights[i] * lambda_radial_weight(rho) * ph * spherical_average(F, rho, s);
    }
    return acc;
  };
  RadialIntegral out;
  out.radial_nodes = radial_nodes;
  if (k.support < 1.0) {
    out.value = piece(0.0, k.support);
    return out;
  }
  double a = 0.0, b = 0.9, last = 0.0;
  for (int shell = 0; shell < 8; ++shell) {
    last = piece(a, b);
    out.value += last;
    a = b;
    b = 1.0 - (1.0 - b) / 10.0;
  }
  out.divergent = !std::isfinite(out.value) || std::abs(last) > 1e-6 * std::max(1.0, std::abs(out.value));
  return out;
}

// ---- Green identity -----------------------------------------------------------

struct GreenIdentityTerms {
  double center = 0.0;    // F(0)
  double integral = 0.0;  // int G_r Delta F dlambda
  double average = 0.0;   // Avr_F(r)
  double residual() const { return std::abs(center + integral - average); }
};

inline GreenIdentityTerms green_identity_terms(const ScalarField& F, double r, const MetricPreset& m,
                                               const SphereSampler& s, int radial_nodes = 64, const FdOptions& fd = {}) {
  auto lap = [&](const Vec3& x) { return laplacian_scalar(m, Chart::ball, F, x, fd); };
  GreenIdentityTerms t;
  t.center = F(Vec3::Zero());
  t.integral = radial_weighted_integral(RadialKernel::green(r), lap, s, radial_nodes).value;
  t.average = spherical_average(F, r, s);
  return t;
}

inline double green_identity_residual(const ScalarField& F, double r,
                                      const MetricPreset& m = MetricPreset::paper_ball(),
                                      const SphereSampler& s = SphereSampler::fibonacci(2048), int radial_nodes = 64) {
  return green_identity_terms(F, r, m, s, radial_nodes).residual();
}

// G(rho) rho / (1 - rho^2)^2 = 1 / (3 (1 + rho)^2).
inline double green_estimate_value(double rho) {
  const double s = (1.0 - rho) * (1.0 + rho);
  return green(rho) * rho / (s * s);
}

struct GreenBracket {
  double lo = 0.0, hi = 0.0;
  double argmin = 0.0, argmax = 0.0;
};

inline GreenBracket green_estimate_scan(const std::vector<double>& grid) {
  if (grid.empty()) throw config_error("green_estimate_scan: empty grid");
  GreenBracket b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0, 0};
  for (double rho : grid) {
    if (!(rho > 0.0 && rho < 1.0)) throw domain_error(fmt::format("green_estimate_scan: {} outside (0, 1)", rho));
    const double v = green_estimate_value(rho);
    if (v < b.lo) b.lo = v, b.argmin = rho;
    if (v > b.hi) b.hi = v, b.argmax = rho;
  }
  return b;
}

// n points in (0, 1) with both ends pushed to within 1e-12 of 0 and 1.
inline std::vector<double> green_estimate_grid(int n) {
  if (n < 2) throw config_error("green_estimate_grid: need at least two points");
  std::vector<double> g(n);
  const double a = 1e-12, b = 1.0 - 1e-12;
  for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1);
  return g;
}

// ---- X-set ------------------------------------------------------------------------

struct XSetParams {
  double K1 = 2.0;
  double eps = 0.05;
  void validate() const {
    if (!(K1 >= 1.0)) throw config_error("X-set: K1 must be at least 1");
    if (!(eps >= 0.0)) throw config_error("X-set: eps must be non-negative");
  }
};

struct XMembership {
  bool member = false;
  double tension_margin = 0.0;     // eps - |tau|
  double distortion_margin = 0.0;  // K1 - dist
  double energy_margin = 0.0;      // e - 1
  LocalReport local;
};

inline XMembership x_membership(const InteriorMap& psi, const Vec3& p, const XSetParams& prm,
                                const MetricPreset& m = MetricPreset::standard(), const FdOptions& fd = {}) {
  prm.validate();
  XMembership x;
  x.local = local_report(m, psi, p, fd);
  x.tension_margin = prm.eps - x.local.tension;
  x.distortion_margin = prm.K1 - x.local.distortion;
  x.energy_margin = x.local.energy - 1.0;
  x.member = x.tension_margin > 0.0 && x.distortion_margin > 0.0 && x.energy_margin > 0.0;
  return x;
}

inline XMembership x_membership(const BoundaryMap& f, const Vec3& p, const XSetParams& prm,
                                const QuadratureSpec& q = {}, const FdOptions& fd = {}) {
  return x_membership(InteriorMap::good_extension(f, q), p, prm, MetricPreset::standard(), fd);
}

// Fraction of zeta with rho zeta in X_f, evaluated through the Cayley chart.
inline double x_measure(const InteriorMap& psi, double rho, const XSetParams& prm, const SphereSampler& s,
                        const MetricPreset& m = MetricPreset::standard(), const FdOptions& fd = {}) {
  if (!(rho > 0.0 && rho < 1.0)) throw domain_error("x_measure: radius must lie in (0, 1)");
  if (psi.source != Chart::halfspace) throw domain_error("x_measure: expects a half-space map");
  int hits = 0;
  for (const Vec3& z : s.nodes())
    if (x_membership(psi, ball_to_halfspace(rho * z), prm, m, fd).member) ++hits;
  return static_cast<double>(hits) / s.count();
}

inline double x_measure(const BoundaryMap& f, double rho, const XSetParams& prm, const SphereSampler& s,
                        const QuadratureSpec& q = {}, const FdOptions& fd = {}) {
  return x_measure(InteriorMap::good_extension(f, q), rho, prm, s, MetricPreset::standard(), fd);
}

// ---- step-function integral ----------------------------------------------------------

// int G_r Phi dlambda with Phi = C2 on the member set and -C1 elsewhere;
// membership is a predicate on ball points.
inline double phi_step_integral(const std::function<bool(const Vec3&)>& member, double C1, double C2, double r,
                                const SphereSampler& s, int radial_nodes = 64) {
  if (!(C1 >= 0.0 && C2 >= 0.0)) throw config_error("phi_step_integral: C1 and C2 must be non-negative");
  auto step = [&](const Vec3& x) { return member(x) ? C2 : -C1; };
  return radial_weighted_integral(RadialKernel::green(r), step, s, radial_nodes).value;
}

inline double phi_step_integral(const BoundaryMap& f, double C1, double C2, const XSetParams& prm, double r,
                                const SphereSampler& s, int radial_nodes = 64, const QuadratureSpec& q = {},
                                const FdOptions& fd = {}) {
  const InteriorMap psi = InteriorMap::good_extension(f, q);
  auto member = [&](const Vec3& x) {
    return x_membership(psi, ball_to_halfspace(x), prm, MetricPreset::standard(), fd).member;
  };
  return phi_step_integral(member, C1, C2, r, s, radial_nodes);
}

// ---- constants ledger -------------------------------------------------------------

enum class Provenance { measured, supplied };

inline std::string provenance_name(Provenance p) { return p == Provenance::measured ? "measured" : "supplied"; }

struct LedgerValue {
  double value = 0.0;
  Provenance provenance = Provenance::supplied;
  std::string note;
};

// int G_r dlambda, a 64-node rule on (0, r); the integrand is smooth there.
inline double green_mass(double r) {
  if (!(r > 0.0 && r < 1.0)) {
    if (r == 0.0) return 0.0;
    throw domain_error("green_mass: radius must lie in [0, 1)");
  }
  const Rule1D rule = gauss_legendre(64, 0.0, r);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * lambda_radial_weight(rule.nodes[i]) * green_r(r, rule.nodes[i]);
  return acc;
}

// Inputs carry provenance; derived values are recomputed on every call.
struct ConstantsLedger {
  std::optional<LedgerValue> K, q, T, D;
  std::optional<double> r0;

  static double tanh_quarter() { return std::tanh(0.25); }

  std::vector<std::string> missing() const {
    std::vector<std::string> out;
    if (!K) out.push_back("K");
    if (!q) out.push_back("q");
    if (!T) out.push_back("T");
    if (!D) out.push_back("D");
    if (!r0) out.push_back("r0");
    return out;
  }
  void require_complete() const {
    const auto m = missing();
    if (m.empty()) return;
    std::string names;
    for (const auto& s : m) names += (names.empty() ? "" : ", ") + s;
    throw config_error("constants ledger is missing: " + names);
  }

  double d_prime() const { return 2.0 * (need(D, "D") - 1.0); }
  double d_second() const {
    const double d = need(D, "D") + 1.0;
    return d * d;
  }
  double eps0() const { return 0.25 * need(q, "q") * tanh_quarter(); }
  double C1() const { return 2.0 * need(T, "T"); }
  double C2() const { return 0.5 * need(q, "q") * tanh_quarter(); }
  double P() const { return C1() + C2(); }
  double M() const { return d_prime() + 1.0; }
  double phi(double r) const { return 4.0 / 3.0 * (d_prime() + d_second() + 2.0 * need(T, "T") * green_mass(r)); }
  double psi(double r) const { return P() * phi(r) * green_mass(r); }
  double D1() const {
    if (!r0) throw config_error("constants ledger is missing: r0");
    return psi(*r0) + d_second();
  }

  // Strictly increasing along the grid.
  bool increasing(const std::function<double(double)>& g, const std::vector<double>& grid) const {
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(g(grid[i]) > g(grid[i - 1]))) return false;
    return true;
  }
  bool phi_increasing(const std::vector<double>& grid) const {
    return increasing([this](double r) { return phi(r); }, grid);
  }
  bool psi_increasing(const std::vector<double>& grid) const {
    return increasing([this](double r) { return psi(r); }, grid);
  }

 private:
  static double need(const std::optional<LedgerValue>& v, const char* name) {
    if (!v) throw config_error(fmt::format("constants ledger is missing: {}", name));
    return v->value;
  }
};

inline ConstantsLedger constants_ledger_build(const LedgerValue& K, const LedgerValue& q, const LedgerValue& T,
                                              const LedgerValue& D, double r0) {
  for (const auto& [name, v] : {std::pair{"K", K}, {"q", q}, {"T", T}, {"D", D}})
    if (!(v.value > 0.0)) throw config_error(fmt::format("ledger input {} must be positive", name));
  if (!(K.value >= 1.0)) throw config_error("ledger input K must be at least 1");
  if (!(r0 > 0.0 && r0 < 1.0)) throw domain_error("ledger r0 must lie in (0, 1)");
  ConstantsLedger l;
  l.K = K;
  l.q = q;
  l.T = T;
  l.D = D;
  l.r0 = r0;
  return l;
}

inline std::string to_text(const ConstantsLedger& l) {
  std::string s;
  auto in = [&](const char* name, const std::optional<LedgerValue>& v) {
    if (v)
      s += fmt::format("{}: {} ({}{})\n", name, v->value, provenance_name(v->provenance),
                       v->note.empty() ? "" : ", " + v->note);
    else
      s += fmt::format("{}: missing\n", name);
  };
  in("K", l.K);
  in("q", l.q);
  in("T", l.T);
  in("D", l.D);
  s += l.r0 ? fmt::format("r0: {}\n", *l.r0) : std::string("r0: missing\n");
  if (!l.missing().empty()) return s;
  s += fmt::format("D_prime: {}\nD_second: {}\neps0: {}\nP: {}\nM: {}\nC1: {}\nC2: {}\n", l.d_prime(), l.d_second(),
                   l.eps0(), l.P(), l.M(), l.C1(), l.C2());
  s += fmt::format("phi_K(r0): {}\npsi_K(r0): {}\nD1: {}\n", l.phi(*l.r0), l.psi(*l.r0), l.D1());
  return s;
}

// ---- constant oracles -------------------------------------------------------------

// e / J^{2/3} for singular values s1, s2, s3.
inline double k2_ratio(double s1, double s2, double s3) {
  const double j = std::cbrt(s1 * s2 * s3);
  return 0.5 * (s1 * s1 + s2 * s2 + s3 * s3) / (j * j);
}

// sup of k2_ratio over sigma_1 / sigma_3 <= K1: grid over (a, b) with
// sigma = (a, b, 1), 1 <= b <= a <= K1, then a shrinking pattern search.
inline double k2_oracle(double K1, int grid = 201) {
  if (!(K1 >= 1.0)) throw domain_error("k2_oracle: K1 must be at least 1");
  auto val = [](double a, double b) { return k2_ratio(a, b, 1.0); };
  double ba = 1.0, bb = 1.0, best = val(1.0, 1.0);
  for (int i = 0; i < grid; ++i) {
    const double a = 1.0 + (K1 - 1.0) * i / (grid - 1);
    for (int j = 0; j <= i; ++j) {
      const double b = 1.0 + (K1 - 1.0) * j / (grid - 1);
      const double v = val(a, b);
      if (v > best) best = v, ba = a, bb = b;
    }
  }
  double step = (K1 - 1.0) / (grid - 1);
  while (step > 1e-14 * K1) {
    bool moved = false;
    for (const auto& [da, db] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}}) {
      const double a = std::clamp(ba + da * step, 1.0, K1);
      const double b = std::clamp(bb + db * step, 1.0, a);
      const double v = val(a, b);
      if (v > best) best = v, ba = a, bb = b, moved = true;
    }
    if (!moved) step *= 0.5;
  }
  return best;
}

// J^{2/3} / sum_{i, j<=2} alpha_i^j^2 for frame matrix A (columns are images
// of the source frame) and third target frame vector w3.
inline double c_ratio(const Mat3& A, const Vec3& w3) {
  const Vec3 w = w3.normalized();
  const double j = std::cbrt(std::abs(A.determinant()));
  return j * j / (A.squaredNorm() - (A.transpose() * w).squaredNorm());
}

// Closed form of the C-oracle supremum under sigma_1 / sigma_3 <= K1.
inline double c_closed_form(double K1) { return 0.5 * std::pow(K1, 2.0 / 3.0); }

struct COracleOptions {
  int samples = 100000;
  std::uint64_t seed = 20241016;
  // Sampled matrices respect sigma_1 / sigma_3 <= max_distortion; without a
  // bound the sample maximum grows with the sample count.
  double max_distortion = std::numeric_limits<double>::infinity();
  double scale = 1.0;
  int refine_steps = 400;
};

struct COracleResult {
  double C = 0.0;
  int samples = 0;
  int skipped = 0;
  std::uint64_t seed = 0;
  Mat3 best_matrix = Mat3::Zero();
  Vec3 best_direction = Vec3::UnitZ();
};

namespace detail {

inline Mat3 random_rotation(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  Mat3 g;
  for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = n(gen);
  Eigen::HouseholderQR<Mat3> qr(g);
  Mat3 qm = qr.householderQ();
  const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < 3; ++i)
    if (r(i, i) < 0) qm.col(i) *= -1.0;
  return qm;
}

inline Vec3 random_unit(std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  for (;;) {
    const Vec3 v(n(gen), n(gen), n(gen));
    if (v.norm() > 1e-12) return v.normalized();
  }
}

inline double distortion_of_matrix(const Mat3& a) {
  const Eigen::JacobiSVD<Mat3> svd(a);
  const Vec3 s = svd.singularValues();
  return s(2) > 0 ? s(0) / s(2) : std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline COracleResult c_oracle(const COracleOptions& o = {}) {
  if (o.samples < 1) throw config_error("c_oracle: samples must be positive");
  if (!(o.max_distortion >= 1.0)) throw config_error("c_oracle: max_distortion must be at least 1");
  if (!(o.scale > 0.0)) throw config_error("c_oracle: scale must be positive");
  std::mt19937_64 gen(o.seed);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(1.0, std::isfinite(o.max_distortion) ? o.max_distortion : 1.0);
  const bool bounded = std::isfinite(o.max_distortion);
  COracleResult res;
  res.seed = o.seed;
  res.C = -1.0;
  for (int k = 0; k < o.samples; ++k) {
    Mat3 a;
    if (bounded) {
      const Vec3 s(o.max_distortion > 1.0 ? u(gen) : 1.0, o.max_distortion > 1.0 ? u(gen) : 1.0, 1.0);
      a = detail::random_rotation(gen) * s.asDiagonal() * detail::random_rotation(gen).transpose();
    } else {
      for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = n(gen);
    }
    a *= o.scale;
    const Vec3 w = detail::random_unit(gen);
    const double det = std::abs(a.determinant());
    if (!(det > 1e-12 * std::pow(a.norm(), 3))) {
      ++res.skipped;
      continue;
    }
    ++res.samples;
    const double v = c_ratio(a, w);
    if (v > res.C) res.C = v, res.best_matrix = a, res.best_direction = w;
  }
  // Local refinement: perturb the best pair, shrinking on failure.
  double step = 0.1;
  for (int k = 0; k < o.refine_steps && res.samples > 0; ++k) {
    Mat3 da;
    for (int i = 0; i < 9; ++i) da(i / 3, i % 3) = n(gen);
    const Mat3 a = res.best_matrix + step * res.best_matrix.norm() / 3.0 * da;
    const Vec3 w = (res.best_direction + step * detail::random_unit(gen)).normalized();
    const bool ok = detail::distortion_of_matrix(a) <= o.max_distortion &&
                    std::abs(a.determinant()) > 1e-12 * std::pow(a.norm(), 3);
    const double v = ok ? c_ratio(a, w) : -1.0;
    if (v > res.C) {
      res.C = v, res.best_matrix = a, res.best_direction = w;
    } else {
      step *= 0.97;
    }
  }
  return res;
}

// q = 1 / (C K2) for distortion bound K1.
inline double q_from_oracles(double K1, const COracleOptions& base = {}) {
  COracleOptions o = base;
  o.max_distortion = K1;
  return 1.0 / (c_oracle(o).C * k2_oracle(K1));
}

// ---- measured constants --------------------------------------------------------------

inline std::vector<Vec3> halfspace_lattice(const std::vector<double>& xs, const std::vector<double>& ts) {
  std::vector<Vec3> pts;
  for (double x : xs)
    for (double y : xs)
      for (double t : ts) pts.emplace_back(x, y, t);
  return pts;
}

inline std::vector<Vec3> default_lattice() { return halfspace_lattice({-1.0, -0.5, 0.0, 0.5, 1.0}, {0.1, 0.3, 1.0, 3.0}); }

struct Measurement {
  double value = 0.0;
  Vec3 argmax = Vec3::Zero();
  Provenance provenance = Provenance::measured;
  LedgerValue as_ledger(std::string note) const { return {value, provenance, std::move(note)}; }
};

inline Measurement tension_sup_estimate(const InteriorMap& psi, const std::vector<Vec3>& lattice,
                                        const MetricPreset& m = MetricPreset::standard(), const FdOptions& fd = {}) {
  Measurement out;
  for (const Vec3& p : lattice) {
    const double t = tension(m, psi, p, fd).norm;
    if (t > out.value) out.value = t, out.argmax = p;
  }
  return out;
}

inline Measurement tension_sup_estimate(const BoundaryMap& f, const std::vector<Vec3>& lattice,
                                        const QuadratureSpec& q = {}, const FdOptions& fd = {}) {
  return tension_sup_estimate(InteriorMap::good_extension(f, q), lattice, MetricPreset::standard(), fd);
}

// max over the lattice of d(I o Psi(f) o J, Psi(I o f o J)). The conjugated
// boundary map must fix infinity so that its extension is defined.
inline Measurement conjugation_distance(const BoundaryMap& f, const IsometryElement& I, const IsometryElement& J,
                                        const std::vector<Vec3>& lattice, const QuadratureSpec& q = {},
                                        const MetricPreset& m = MetricPreset::standard()) {
  const BoundaryMap conj =
      BoundaryMap::compose({BoundaryMap(mobius_from_isometry(J)), f, BoundaryMap(mobius_from_isometry(I))});
  // Isometries built numerically send infinity to a huge finite point.
  const BoundaryPoint inf = conj.eval_extended(BoundaryPoint::infinity());
  if (!inf.at_infinity && inf.planar().norm() < 1e8) {
    throw domain_error("conjugation_distance: I o f o J does not fix infinity, its extension is not supported");
  }
  const InteriorMap lhs = InteriorMap::good_extension(f, q).conjugated(I, J);
  const InteriorMap rhs = InteriorMap::good_extension(conj, q);
  Measurement out;
  for (const Vec3& p : lattice) {
    const double d = distance_field(m, lhs, rhs, p);
    if (d > out.value) out.value = d, out.argmax = p;
  }
  return out;
}

// Isometry whose boundary action sends the half-space boundary point w to
// infinity.
inline IsometryElement isometry_sending_to_infinity(const Vec2& w) {
  return ball_isometry_to_north_pole(cayley(BoundaryPoint::plane(w)).coords);
}

// ---- quasi-isometry constants ----------------------------------------------------

struct QiOptions {
  int pairs = 1000;
  std::uint64_t seed = 7;
  double radius = 0.9;  // ball-chart radius of sampled points
  double L_max = 20.0;
  double L_step = 0.01;
  MetricPreset preset = MetricPreset::standard();
};

struct QiConstants {
  double L = 1.0;
  double A = 0.0;
  int pairs = 0;
};

namespace detail {

// (d(p, q), d(F p, F q)) pairs -> smallest L + A on the L grid.
inline QiConstants qi_from_pairs(const std::vector<std::pair<double, double>>& dd, const QiOptions& o) {
  double top = 0.0;
  for (const auto& [d, e] : dd) top = std::max(top, e);
  if (!(top > 1e-12)) throw degenerate_error("qi_constants: the map is constant on the samples");
  QiConstants best{0.0, std::numeric_limits<double>::infinity(), static_cast<int>(dd.size())};
  const int steps = static_cast<int>(std::round((o.L_max - 1.0) / o.L_step));
  for (int i = 0; i <= steps; ++i) {
    const double L = 1.0 + i * o.L_step;
    double A = 0.0;
    for (const auto& [d, e] : dd) A = std::max({A, e - L * d, d / L - e});
    if (L + A < best.L + best.A) best.L = L, best.A = A;
  }
  return best;
}

}  // namespace detail

inline QiConstants qi_constants(const InteriorMap& F, const QiOptions& o = {}) {
  if (o.pairs < 1000) throw config_error("qi_constants: at least 1000 pairs are required");
  std::mt19937_64 gen(o.seed);
  std::uniform_real_distribution<double> u(-o.radius, o.radius);
  auto sample = [&] {
    for (;;) {
      const Vec3 x(u(gen), u(gen), u(gen));
      if (x.norm() <= o.radius) return ModelPoint::ball(x);
    }
  };
  std::vector<std::pair<double, double>> dd;
  dd.reserve(o.pairs);
  for (int k = 0; k < o.pairs; ++k) {
    const ModelPoint p = sample(), q = sample();
    dd.emplace_back(distance(o.preset, p, q), distance(o.preset, F(p), F(q)));
  }
  return detail::qi_from_pairs(dd, o);
}

inline QiConstants qi_constants(const MapField& f, const QiOptions& o = {}) {
  if (o.pairs < 1000) throw config_error("qi_constants: at least 1000 pairs are required");
  std::vector<int> nodes;
  for (int idx = 0; idx < f.grid.size(); ++idx)
    if (f.grid.in_domain(idx)) nodes.push_back(idx);
  if (nodes.size() < 2) throw degenerate_error("qi_constants: grid has fewer than two nodes");
  std::mt19937_64 gen(o.seed);
  std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
  std::vector<std::pair<double, double>> dd;
  const Chart c = f.grid.chart();
  for (int k = 0; k < o.pairs; ++k) {
    const int a = nodes[pick(gen)], b = nodes[pick(gen)];
    dd.emplace_back(distance(o.preset, {c, f.grid.coords(a)}, {c, f.grid.coords(b)}),
                    distance(o.preset, {f.target, f.values[a]}, {f.target, f.values[b]}));
  }
  return detail::qi_from_pairs(dd, o);
}

// ---- distance field and Y-set --------------------------------------------------------

struct DistanceSup {
  double value = 0.0;
  Vec3 argmax = Vec3::Zero();
  std::string label = "grid-sup";
};

// Sup of d(F, G) over the in-domain nodes of a ball grid.
inline DistanceSup grid_sup_distance(const InteriorMap& F, const InteriorMap& G, const GridDomain& grid,
                                     const MetricPreset& m = MetricPreset::standard()) {
  if (grid.chart() != Chart::ball) throw domain_error("grid_sup_distance: needs a ball grid");
  DistanceSup s;
  for (int idx = 0; idx < grid.size(); ++idx) {
    if (!grid.in_domain(idx)) continue;
    const Vec3 x = grid.coords(idx);
    const double d = distance_field(m, F, G, x);
    if (d > s.value) s.value = d, s.argmax = x;
  }
  return s;
}

struct YMeasure {
  std::optional<double> fraction;  // empty when the distance field is degenerate
  std::optional<double> complement;
  DistanceSup sup;
  bool degenerate = false;
  int samples = 0;
};

inline YMeasure y_measure(const InteriorMap& F, const InteriorMap& G, const GridDomain& grid, double r,
                          const SphereSampler& s, const MetricPreset& m = MetricPreset::standard(),
                          double tol = 1e-6) {
  if (F.source != Chart::ball || G.source != Chart::ball) throw domain_error("y_measure: maps must act on the ball");
  if (!(r > 0.0 && r < grid.radius())) {
    throw domain_error(fmt::format("y_measure: radius {} beyond the grid radius {}", r, grid.radius()));
  }
  YMeasure y;
  y.samples = s.count();
  y.sup = grid_sup_distance(F, G, grid, m);
  if (y.sup.value < tol) {
    y.degenerate = true;
    return y;
  }
  int hits = 0;
  for (const Vec3& z : s.nodes())
    if (distance_field(m, F, G, r * z) >= 0.5 * y.sup.value) ++hits;
  y.fraction = static_cast<double>(hits) / s.count();
  y.complement = static_cast<double>(s.count() - hits) / s.count();
  return y;
}

inline InteriorMap ball_good_extension(const BoundaryMap& f, const QuadratureSpec& q = {}) {
  return InteriorMap::good_extension(f, q).in_charts(Chart::ball, Chart::ball);
}

inline InteriorMap ball_field_map(const MapField& H) {
  if (H.grid.chart() != Chart::ball) throw domain_error("expected a field on a ball grid");
  const InteriorMap g = grid_field_map(H);
  return g.target == Chart::ball ? g : g.in_charts(Chart::ball, Chart::ball);
}

inline YMeasure y_measure(const BoundaryMap& f, double r, const MapField& H, const SphereSampler& s,
                          const QuadratureSpec& q = {}, double tol = 1e-6) {
  return y_measure(ball_good_extension(f, q), ball_field_map(H), H.grid, r, s, H.preset, tol);
}

// ---- main inequality chain -------------------------------------------------------------

struct ChainLine {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs for lhs <= rhs
  bool applicable = true;
  bool pass = true;
};

struct MainChainOptions {
  int radial_nodes = 64;
  // Distances in curvature -1; the Green kernel pairs with the lambda-normalized Laplacian.
  MetricPreset distance_preset = MetricPreset::standard();
  MetricPreset green_preset = MetricPreset::paper_ball();
  double green_tol = 1e-3;
  double slack = 1e-9;
};

struct MainChainReport {
  double r = 0.0;
  std::string sampler;
  int radial_nodes = 0;
  double d0 = 0.0;
  DistanceSup norm;
  GreenIdentityTerms green;
  YMeasure y;
  ConstantsLedger ledger;
  std::vector<ChainLine> lines;

  bool all_pass() const {
    return std::all_of(lines.begin(), lines.end(), [](const ChainLine& l) { return l.pass; });
  }
};

inline MainChainReport main_chain_report(const InteriorMap& F, const InteriorMap& G, const GridDomain& grid, double r,
                                         const ConstantsLedger& ledger, const SphereSampler& s,
                                         const MainChainOptions& o = {}) {
  ledger.require_complete();
  if (!(r > 0.0 && r < grid.radius())) throw domain_error("main_chain_report: r must lie inside the grid");
  const MetricPreset& md = o.distance_preset;
  auto d = [&](const Vec3& x) { return distance_field(md, F, G, x); };
  auto d2 = [&](const Vec3& x) {
    const double v = d(x);
    return v * v;
  };

  MainChainReport rep;
  rep.r = r;
  rep.sampler = s.describe();
  rep.radial_nodes = o.radial_nodes;
  rep.ledger = ledger;
  rep.d0 = d(Vec3::Zero());
  rep.norm = grid_sup_distance(F, G, grid, md);
  // Off-node values of interpolated fields can exceed the node maximum, so
  // the sphere samples join the supremum.
  for (const Vec3& z : s.nodes()) {
    const double v = d(r * z);
    if (v > rep.norm.value) rep.norm.value = v, rep.norm.argmax = r * z;
  }
  rep.norm.label = "grid-sphere-sup";

  FdOptions fd;
  if (F.approximate || G.approximate) {
    // Interpolated fields are differenced at the grid scale.
    fd.absolute = grid.spacing().minCoeff();
    fd.richardson = false;
  }
  rep.green = green_identity_terms(d2, r, o.green_preset, s, o.radial_nodes, fd);
  rep.y = y_measure(F, G, grid, r, s, md);

  const double n = rep.norm.value, n2 = n * n;
  const double I = rep.green.integral, avr = rep.green.average;
  auto line = [&](std::string name, double lhs, double rhs, bool applicable = true) {
    ChainLine l{std::move(name), lhs, rhs, rhs - lhs, applicable, true};
    l.pass = !applicable || l.margin >= -o.slack * std::max(1.0, std::abs(rhs));
    rep.lines.push_back(l);
  };
  {
    ChainLine l{"green identity residual", rep.green.residual(), o.green_tol, o.green_tol - rep.green.residual(), true,
                rep.green.residual() <= o.green_tol};
    rep.lines.push_back(l);
  }
  line("normalization d(0) > |d| - D - 1", n - ledger.D->value - 1.0, rep.d0);
  line("average bounded by |d|^2", avr, n2);
  line("lower bound |d|^2 - D'|d| - D'' + I <= Avr", n2 - ledger.d_prime() * n - ledger.d_second() + I, avr);
  const bool big = n >= 1.0;
  const double comp = rep.y.complement.value_or(0.0);
  line("measure of complement of Y <= phi_K(r)/|d|", comp, big ? ledger.phi(r) / n : 0.0, big && !rep.y.degenerate);
  line("estimate I >= M|d| - psi_K(r0)", ledger.M() * n - ledger.psi(*ledger.r0), I, big);
  line("endgame |d| <= psi_K(r0) + D''", n, ledger.D1());
  return rep;
}

inline MainChainReport main_chain_report(const BoundaryMap& f, double r, const MapField& H,
                                         const ConstantsLedger& ledger, const SphereSampler& s,
                                         const QuadratureSpec& q = {}, const MainChainOptions& o = {}) {
  return main_chain_report(ball_good_extension(f, q), ball_field_map(H), H.grid, r, ledger, s, o);
}

inline std::string to_text(const MainChainReport& rep) {
  std::string s;
  s += fmt::format("r: {}\nsampler: {}\nradial_nodes: {}\n", rep.r, rep.sampler, rep.radial_nodes);
  s += fmt::format("d0: {}\nnorm_{}: {}\nnorm_argmax: {} {} {}\n", rep.d0, rep.norm.label, rep.norm.value,
                   rep.norm.argmax.x(), rep.norm.argmax.y(), rep.norm.argmax.z());
  s += fmt::format("green_center: {}\ngreen_integral: {}\ngreen_average: {}\ngreen_residual: {}\n", rep.green.center,
                   rep.green.integral, rep.green.average, rep.green.residual());
  if (rep.y.degenerate)
    s += "y_fraction: degenerate\n";
  else
    s += fmt::format("y_fraction: {}\n", *rep.y.fraction);
  s += to_text(rep.ledger);
  for (const auto& l : rep.lines) {
    s += fmt::format("line: {} | lhs {} | rhs {} | margin {} | {}\n", l.name, l.lhs, l.rhs, l.margin,
                     !l.applicable ? "n/a" : (l.pass ? "pass" : "fail"));
  }
  return s;
}

}  // namespace hypharm
