#pragma once

#include <fmt/format.h>

#include <charconv>
#include <complex>
#include <functional>
#include <regex>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include "hypharm/flow.hpp"

namespace hypharm {

// Disc density of the given preset, 2 / (1 - |w|^2) under STANDARD.
inline double disc_density(Complex w, const MetricPreset& m = MetricPreset::standard()) {
  const double s = 1.0 - std::norm(w);
  if (!(s > 0.0)) throw domain_error(fmt::format("disc density is singular at |w| = {}", std::abs(w)));
  return m.scale() * 2.0 / s;
}

struct Wirtinger {
  Complex d;     // df/dz
  Complex dbar;  // df/dzbar
};

// Map of the unit disc into the closed disc.
struct DiscMap {
  std::string name;
  std::function<Complex(Complex)> fn;
  // Analytic Wirtinger derivatives when known.
  std::function<Wirtinger(Complex)> wirtinger;
  // Grid fields are differenced at the grid step.
  double grid_step = 0.0;

  Complex operator()(Complex z) const {
    if (!(std::abs(z) < 1.0)) throw domain_error(fmt::format("disc map '{}': |z| = {} is not < 1", name, std::abs(z)));
    const Complex w = fn(z);
    if (!(std::abs(w) <= 1.0 + 1e-12)) throw domain_error(fmt::format("disc map '{}' leaves the closed disc", name));
    return w;
  }

  static DiscMap identity() {
    return {"identity", [](Complex z) { return z; }, [](Complex) { return Wirtinger{1.0, 0.0}; }};
  }
  static DiscMap rotation(double theta) {
    const Complex e = std::polar(1.0, theta);
    return {fmt::format("rotation({})", theta), [e](Complex z) { return e * z; },
            [e](Complex) { return Wirtinger{e, 0.0}; }};
  }
  // e^{i theta} (z - a) / (1 - conj(a) z).
  static DiscMap mobius(Complex a, double theta) {
    if (!(std::abs(a) < 1.0)) throw domain_error("disc Mobius: |a| must be < 1");
    const Complex e = std::polar(1.0, theta);
    return {fmt::format("mobius({}, {}, {})", a.real(), a.imag(), theta),
            [a, e](Complex z) { return e * (z - a) / (1.0 - std::conj(a) * z); },
            [a, e](Complex z) {
              const Complex den = 1.0 - std::conj(a) * z;
              return Wirtinger{e * (1.0 - std::norm(a)) / (den * den), 0.0};
            }};
  }
  static DiscMap power(int k) {
    if (k < 1) throw domain_error("disc power: exponent must be >= 1");
    return {fmt::format("power({})", k), [k](Complex z) { return std::pow(z, k); },
            [k](Complex z) { return Wirtinger{static_cast<double>(k) * std::pow(z, k - 1), 0.0}; }};
  }
  // alpha z + beta conj(z); into the disc only where |alpha| + |beta| <= 1/|z|.
  static DiscMap affine(Complex alpha, Complex beta) {
    return {fmt::format("affine({}, {}, {}, {})", alpha.real(), alpha.imag(), beta.real(), beta.imag()),
            [alpha, beta](Complex z) { return alpha * z + beta * std::conj(z); },
            [alpha, beta](Complex) { return Wirtinger{alpha, beta}; }};
  }
  static DiscMap closed_form(std::string name, std::function<Complex(Complex)> fn) {
    return {std::move(name), std::move(fn), nullptr};
  }
};

namespace detail {

// (d/dx, d/dy) of a complex function: fourth-order central differences at
// step d, or Richardson on second-order ones.
template <class Fn>
std::pair<Complex, Complex> complex_gradient(const Fn& f, Complex z, double d, bool fixed_step) {
  const Complex iy(0, 1);
  auto c2 = [&](double s, Complex dir) { return (f(z + s * dir) - f(z - s * dir)) / (2.0 * s); };
  if (fixed_step) {
    auto c4 = [&](Complex dir) {
      return (8.0 * (f(z + d * dir) - f(z - d * dir)) - (f(z + 2.0 * d * dir) - f(z - 2.0 * d * dir))) / (12.0 * d);
    };
    return {c4(1.0), c4(iy)};
  }
  return {(4.0 * c2(d, 1.0) - c2(2.0 * d, 1.0)) / 3.0, (4.0 * c2(d, iy) - c2(2.0 * d, iy)) / 3.0};
}

}  // namespace detail

inline Wirtinger wirtinger(const DiscMap& F, Complex z, double h = 1e-3) {
  if (F.wirtinger) return F.wirtinger(z);
  const bool grid = F.grid_step > 0.0;
  const auto [fx, fy] = detail::complex_gradient([&](Complex p) { return F(p); }, z, grid ? F.grid_step : h, grid);
  const Complex I(0, 1);
  return {0.5 * (fx - I * fy), 0.5 * (fx + I * fy)};
}

// rho^2(F) F_z conj(F_zbar), the coefficient of dz^2.
inline Complex hopf_differential(const DiscMap& F, Complex z, const MetricPreset& m = MetricPreset::standard(),
                                 double h = 1e-3) {
  const Complex w = F(z);
  const double rho = disc_density(w, m);
  const Wirtinger wd = wirtinger(F, z, h);
  return rho * rho * wd.d * std::conj(wd.dbar);
}

// |dbar Hopf(F)(z)| by finite differences with step h (the grid step for
// grid fields).
inline double hopf_holomorphy_residual(const DiscMap& F, Complex z, double h = 1e-3,
                                       const MetricPreset& m = MetricPreset::standard()) {
  const bool grid = F.grid_step > 0.0;
  auto H = [&](Complex p) { return hopf_differential(F, p, m, h); };
  const auto [gx, gy] = detail::complex_gradient(H, z, grid ? F.grid_step : h, grid);
  return std::abs(0.5 * (gx + Complex(0, 1) * gy));
}

// ---- the phi_n family ------------------------------------------------------------

inline std::complex<long double> phi_n_ld(int n, std::complex<long double> z) {
  if (n < 2) throw domain_error("phi_n: n must be >= 2");
  std::complex<long double> p(1.0L, 0.0L);
  for (int k = 0; k < n - 2; ++k) p *= 2.0L * z;
  return p;
}

// 2^{n-2} z^{n-2}.
inline Complex phi_n(int n, Complex z) {
  const auto v = phi_n_ld(n, {z.real(), z.imag()});
  return {static_cast<double>(v.real()), static_cast<double>(v.imag())};
}

// |phi_n(R z) R'^2 - phi_n(z)| with R the rotation by 2 pi / n.
inline double rotation_identity_residual(int n, Complex z) {
  if (!(std::abs(z) <= 1.0 + 1e-15)) throw domain_error("rotation_identity_residual: |z| must be <= 1");
  const long double pi = 3.141592653589793238462643383279502884L;
  const std::complex<long double> R = std::polar(1.0L, 2.0L * pi / n);
  const std::complex<long double> zl(z.real(), z.imag());
  return static_cast<double>(std::abs(phi_n_ld(n, R * zl) * R * R - phi_n_ld(n, zl)));
}

// ---- circle maps and their extension ------------------------------------------------

struct CircleMap {
  std::string name;
  std::function<Complex(double)> fn;  // theta -> point on the unit circle

  static CircleMap trace(const DiscMap& F) {
    return {"trace(" + F.name + ")", [F](double t) { return F.fn(std::polar(1.0, t)); }};
  }
  // theta -> exp(i (theta + a sin(k theta))), a homeomorphism for |a k| < 1.
  static CircleMap wobble(double a, int k) {
    if (!(std::abs(a * k) < 1.0)) throw domain_error("wobble: |a k| must be < 1");
    return {fmt::format("wobble({}, {})", a, k), [a, k](double t) { return std::polar(1.0, t + a * std::sin(k * t)); }};
  }
};

// identity | rotation(theta) | mobius(a_re, a_im, theta) | wobble(a, k)
inline CircleMap parse_circle_map(const std::string& text) {
  static const std::regex call(R"(^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, call)) throw config_error("circle map '" + text + "': malformed");
  const std::string name = m[1];
  std::vector<double> args;
  if (m[2].matched) {
    std::stringstream ss(m[2].str());
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
      const std::string tok = b == std::string::npos ? "" : item.substr(b, e - b + 1);
      double v = 0.0;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v))
        throw config_error("circle map '" + text + "': expected a number, got '" + item + "'");
      args.push_back(v);
    }
  }
  auto want = [&](std::size_t n) {
    if (args.size() != n) throw config_error(fmt::format("circle map '{}': {} takes {} parameters", text, name, n));
  };
  if (name == "identity") {
    want(0);
    return CircleMap::trace(DiscMap::identity());
  }
  if (name == "rotation") {
    want(1);
    return CircleMap::trace(DiscMap::rotation(args[0]));
  }
  if (name == "mobius") {
    want(3);
    if (!(std::hypot(args[0], args[1]) < 1.0)) throw config_error("circle map '" + text + "': need |a| < 1");
    return CircleMap::trace(DiscMap::mobius({args[0], args[1]}, args[2]));
  }
  if (name == "wobble") {
    want(2);
    if (args[1] != std::round(args[1]) || args[1] < 1) throw config_error("circle map '" + text + "': k must be a positive integer");
    if (!(std::abs(args[0] * args[1]) < 1.0)) throw config_error("circle map '" + text + "': need |a k| < 1");
    return CircleMap::wobble(args[0], static_cast<int>(args[1]));
  }
  throw config_error("circle map '" + text + "': unknown map '" + name + "'");
}

// Conformally natural (barycentric) extension: the w with
// sum_k P(z, theta_k) (phi_k - w) / (1 - conj(w) phi_k) = 0, by Newton.
class BarycentricExtension {
 public:
  BarycentricExtension(const CircleMap& phi, int nodes = 512) : name_(phi.name) {
    if (nodes < 8) throw config_error("barycentric extension needs at least 8 circle nodes");
    for (int k = 0; k < nodes; ++k) {
      const double t = 2.0 * kPi * k / nodes;
      ang_.push_back(std::polar(1.0, t));
      val_.push_back(phi.fn(t));
    }
  }

  Complex operator()(Complex z) const {
    if (!(std::abs(z) < 1.0)) throw domain_error("barycentric extension: |z| must be < 1");
    const std::size_t n = ang_.size();
    std::vector<double> P(n);
    const double pz = 1.0 - std::norm(z);
    Complex w = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      P[k] = pz / std::norm(ang_[k] - z) / n;
      w += P[k] * val_[k];
    }
    for (int it = 0; it < 60; ++it) {
      Complex G = 0.0, A = 0.0, B = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const Complex den = 1.0 - std::conj(w) * val_[k];
        G += P[k] * (val_[k] - w) / den;
        A -= P[k] / den;
        B += P[k] * (val_[k] - w) * val_[k] / (den * den);
      }
      const double det = std::norm(A) - std::norm(B);
      if (!(std::abs(det) > 0.0)) throw degenerate_error("barycentric extension: singular Newton system");
      Complex dw = (-G * std::conj(A) + B * std::conj(G)) / det;
      while (std::abs(w + dw) >= 1.0) dw *= 0.5;
      w += dw;
      if (std::abs(dw) < 1e-16) return w;
    }
    if (std::abs(w) < 1.0) return w;
    throw degenerate_error(fmt::format("barycentric extension of {} did not converge", name_));
  }

 private:
  std::string name_;
  std::vector<Complex> ang_, val_;
};

// ---- disc grid and flow ----------------------------------------------------------------

class DiscGrid {
 public:
  DiscGrid(double r, int n) : r_(r), n_(n) {
    if (!(r > 0.0 && r < 1.0)) throw domain_error("disc grid radius must lie in (0, 1)");
    if (n < 5) throw config_error("disc grid needs at least 5 nodes per axis");
    h_ = 2.0 * r / (n - 1);
    kinds_.assign(n * n, NodeKind::outside);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (std::abs(coords(index(i, j))) <= r * (1.0 + 1e-12)) kinds_[index(i, j)] = NodeKind::boundary;
    for (int j = 1; j + 1 < n; ++j)
      for (int i = 1; i + 1 < n; ++i) {
        const int idx = index(i, j);
        if (kinds_[idx] == NodeKind::outside) continue;
        if (in_domain(idx + 1) && in_domain(idx - 1) && in_domain(idx + n) && in_domain(idx - n)) {
          kinds_[idx] = NodeKind::interior;
        }
      }
    for (int idx = 0; idx < n * n; ++idx)
      if (kinds_[idx] == NodeKind::interior) interior_.push_back(idx);
  }

  double radius() const { return r_; }
  int n() const { return n_; }
  double step() const { return h_; }
  int size() const { return n_ * n_; }
  int index(int i, int j) const { return j * n_ + i; }
  Complex coords(int idx) const { return {-r_ + h_ * (idx % n_), -r_ + h_ * (idx / n_)}; }
  bool in_domain(int idx) const { return idx >= 0 && idx < size() && kinds_[idx] != NodeKind::outside; }
  NodeKind kind(int idx) const { return kinds_[idx]; }
  const std::vector<int>& interior_nodes() const { return interior_; }
  // Neighbour along axis a (0 = x, 1 = y) at offset s, or -1 off the grid.
  int neighbour(int idx, int a, int s) const {
    int i = idx % n_, j = idx / n_;
    (a == 0 ? i : j) += s;
    if (i < 0 || j < 0 || i >= n_ || j >= n_) return -1;
    return index(i, j);
  }

 private:
  double r_, h_;
  int n_;
  std::vector<NodeKind> kinds_;
  std::vector<int> interior_;
};

struct DiscField {
  DiscGrid grid;
  std::vector<Complex> values;
};

namespace detail {

// Tension at an interior node: lambda_s^{-2} 4 (f_{z zbar} + 2 conj(w) f_z f_zbar / (1 - |w|^2)),
// fourth-order differences where the wider stencil fits.
inline Complex disc_node_tension(const DiscField& f, int idx) {
  const DiscGrid& g = f.grid;
  const double h = g.step();
  const Complex v = f.values[idx];
  Complex d[2], lap = 0.0;
  for (int a = 0; a < 2; ++a) {
    const Complex p1 = f.values[g.neighbour(idx, a, 1)], m1 = f.values[g.neighbour(idx, a, -1)];
    const int ip2 = g.neighbour(idx, a, 2), im2 = g.neighbour(idx, a, -2);
    if (g.in_domain(ip2) && g.in_domain(im2)) {
      const Complex p2 = f.values[ip2], m2 = f.values[im2];
      d[a] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
      lap += (-p2 + 16.0 * p1 - 30.0 * v + 16.0 * m1 - m2) / (12.0 * h * h);
    } else {
      d[a] = (p1 - m1) / (2.0 * h);
      lap += (p1 - 2.0 * v + m1) / (h * h);
    }
  }
  const Complex I(0, 1);
  const Complex fz = 0.5 * (d[0] - I * d[1]), fzb = 0.5 * (d[0] + I * d[1]);
  const double lam = disc_density(g.coords(idx));
  return (lap + 8.0 * std::conj(v) * fz * fzb / (1.0 - std::norm(v))) / (lam * lam);
}

}  // namespace detail

inline std::vector<Complex> disc_tension(const DiscField& f) {
  std::vector<Complex> tau(f.values.size(), 0.0);
  for (int idx : f.grid.interior_nodes()) tau[idx] = detail::disc_node_tension(f, idx);
  return tau;
}

inline double disc_sup_tension(const DiscField& f, const std::vector<Complex>& tau) {
  double s = 0.0;
  for (int idx : f.grid.interior_nodes()) {
    const double n = disc_density(f.values[idx]) * std::abs(tau[idx]);
    if (!std::isfinite(n)) return std::numeric_limits<double>::infinity();
    s = std::max(s, n);
  }
  return s;
}

// Bilinear interpolation; exact at nodes.
inline DiscMap disc_field_map(const DiscField& f) {
  auto field = std::make_shared<DiscField>(f);
  DiscMap F;
  F.name = "disc grid field";
  F.grid_step = f.grid.step();
  F.fn = [field](Complex z) -> Complex {
    const DiscGrid& g = field->grid;
    double u[2] = {(z.real() + g.radius()) / g.step(), (z.imag() + g.radius()) / g.step()};
    int base[2];
    double frac[2];
    for (int a = 0; a < 2; ++a) {
      if (std::abs(u[a] - std::round(u[a])) < 1e-9) u[a] = std::round(u[a]);
      int i = static_cast<int>(std::floor(u[a]));
      if (i == g.n() - 1) i -= 1;
      if (i < 0 || i + 1 >= g.n()) throw domain_error("disc grid field: point outside the grid");
      base[a] = i;
      frac[a] = u[a] - i;
    }
    Complex acc = 0.0;
    for (int c = 0; c < 4; ++c) {
      const int bi = c & 1, bj = c >> 1;
      const double w = (bi ? frac[0] : 1.0 - frac[0]) * (bj ? frac[1] : 1.0 - frac[1]);
      if (w == 0.0) continue;
      const int idx = g.index(base[0] + bi, base[1] + bj);
      if (!g.in_domain(idx)) throw domain_error("disc grid field: interpolation cell leaves the domain");
      acc += w * field->values[idx];
    }
    return acc;
  };
  return F;
}

struct DiscFlowOptions {
  double radius = 0.6;
  int resolution = 41;
  double tol = 1e-8;
  int max_iter = 200000;
  // Delta s = cfl * (smallest hyperbolic spacing)^2; explicit limit 3/16.
  double cfl = 0.15;
  int circle_nodes = 512;
};

inline constexpr double kDiscStabilityLimit = 3.0 / 16.0;

struct DiscFlowResult {
  DiscField field;
  FlowReport report;
  DiscMap map() const { return disc_field_map(field); }
};

// Barycentric extension on the truncated disc, relaxed by the heat flow with
// the outer nodes fixed.
inline DiscFlowResult disc_flow(const CircleMap& phi, const DiscFlowOptions& o = {}) {
  if (o.cfl > kDiscStabilityLimit) {
    throw config_error(fmt::format("cfl {} exceeds the explicit stability limit {}", o.cfl, kDiscStabilityLimit));
  }
  if (!(o.tol > 0.0)) throw domain_error("disc_flow: tolerance must be positive");
  const DiscGrid grid(o.radius, o.resolution);
  const BarycentricExtension ext(phi, o.circle_nodes);
  DiscFlowResult out{DiscField{grid, std::vector<Complex>(grid.size(), 0.0)}, {}};
  for (int idx = 0; idx < grid.size(); ++idx)
    if (grid.in_domain(idx)) out.field.values[idx] = ext(grid.coords(idx));

  FlowReport& rep = out.report;
  const double hh = disc_density(0.0) * grid.step();
  rep.step = o.cfl * hh * hh;
  std::vector<Complex> tau = disc_tension(out.field);
  rep.initial_tension = rep.final_tension = disc_sup_tension(out.field, tau);
  if (rep.initial_tension < o.tol) {
    rep.converged = true;
    return out;
  }
  for (int it = 0; it < o.max_iter; ++it) {
    std::vector<Complex> next = out.field.values;
    for (;;) {
      bool ok = true;
      for (int idx : grid.interior_nodes()) {
        const Complex w = out.field.values[idx];
        const Vec3 e = exp_map(Chart::ball, Vec3(w.real(), w.imag(), 0.0),
                               rep.step * Vec3(tau[idx].real(), tau[idx].imag(), 0.0));
        next[idx] = {e.x(), e.y()};
        if (!(std::norm(next[idx]) < 1.0)) {
          ok = false;
          break;
        }
      }
      if (ok) break;
      if (++rep.rejections > 20) throw domain_error("disc_flow: step rejected too many times");
      rep.step *= 0.5;
    }
    out.field.values = std::move(next);
    tau = disc_tension(out.field);
    rep.final_tension = disc_sup_tension(out.field, tau);
    rep.history.push_back(rep.final_tension);
    rep.iterations = it + 1;
    if (!std::isfinite(rep.final_tension)) break;
    if (rep.final_tension < o.tol) {
      rep.converged = true;
      break;
    }
  }
  return out;
}

// Largest holomorphy residual over grid nodes with |z| <= frac * radius; the
// nested difference stencils need about 4 grid steps of room.
inline double disc_holomorphy_sup(const DiscFlowResult& res, double frac = 0.5) {
  const DiscMap F = res.map();
  const DiscGrid& g = res.field.grid;
  double worst = 0.0;
  for (int idx : g.interior_nodes()) {
    const Complex z = g.coords(idx);
    if (std::abs(z) <= frac * g.radius()) worst = std::max(worst, hopf_holomorphy_residual(F, z));
  }
  return worst;
}

// |Hopf(F)| on an n x n grid over [-r, r]^2, NaN outside the disc of radius r.
inline void write_hopf_grid(std::ostream& os, const DiscMap& F, double r, int n, double h = 1e-3) {
  os << "x,y,abs_hopf\n";
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Complex z(-r + 2.0 * r * i / (n - 1), -r + 2.0 * r * j / (n - 1));
      double v = std::numeric_limits<double>::quiet_NaN();
      if (std::abs(z) <= r) {
        try {
          v = std::abs(hopf_differential(F, z, MetricPreset::standard(), h));
        } catch (const domain_error&) {
        }
      }
      os << fmt::format("{},{},{}\n", z.real(), z.imag(), v);
    }
}

}  // namespace hypharm
