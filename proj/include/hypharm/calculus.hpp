#pragma once

// Finite-difference differential geometry of maps between conformal models
// of hyperbolic 3-space: energy density, tension field, scalar Laplacian,
// distortion, the distance function between two maps, the geodesic frame
// coefficients and the Laplacian comparison inequality.

#include "hypharm/boundary.hpp"
#include "hypharm/core.hpp"
#include "hypharm/extension.hpp"
#include "hypharm/geometry.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>

namespace hypharm {

enum class MapKind { closed_form, quadrature, grid_field };

// Map between model charts given by its chart expression.
struct InteriorMap {
  std::string name;
  MapKind kind = MapKind::closed_form;
  Chart source = Chart::halfspace;
  Chart target = Chart::halfspace;
  std::function<Vec3(const Vec3&)> fn;
  // Off-node values of grid fields are interpolated.
  bool approximate = false;

  Vec3 operator()(const Vec3& p) const {
    require_inside(source, p);
    Vec3 q = fn(p);
    if (!inside_model(target, q)) {
      throw domain_error(fmt::format("map '{}' left the model at ({}, {}, {})", name, p.x(), p.y(), p.z()));
    }
    return q;
  }
  ModelPoint operator()(const ModelPoint& p) const {
    const ModelPoint s = to_chart(p, source);
    return {target, (*this)(s.coords)};
  }

  static InteriorMap identity(Chart c) { return {"identity", MapKind::closed_form, c, c, [](const Vec3& p) { return p; }}; }

  static InteriorMap linear_harmonic(const LinearMap& L) {
    return {"H(" + BoundaryMap(L).to_string() + ")", MapKind::closed_form, Chart::halfspace, Chart::halfspace,
            [L](const Vec3& z) { return hypharm::linear_harmonic(L, z); }};
  }

  static InteriorMap good_extension(const BoundaryMap& f, const QuadratureSpec& q = {}) {
    auto g = std::make_shared<GoodExtensionMap>(f, q);
    return {"good(" + f.to_string() + ")", MapKind::quadrature, Chart::halfspace, Chart::halfspace,
            [g](const Vec3& z) { return g->eval(z); }};
  }

  // (x, t) -> (x, lambda t); harmonic only for lambda = 1.
  static InteriorMap vertical_scaling(double lambda) {
    if (!(lambda > 0.0)) throw domain_error("vertical scaling factor must be positive");
    return {fmt::format("vertical_scaling({})", lambda), MapKind::closed_form, Chart::halfspace, Chart::halfspace,
            [lambda](const Vec3& z) { return Vec3(z.x(), z.y(), lambda * z.z()); }};
  }

  static InteriorMap isometry(const IsometryElement& g, Chart c) {
    return {"isometry", MapKind::closed_form, c, c, [g, c](const Vec3& p) {
              return to_chart(g.apply(ModelPoint{c, p}), c).coords;
            }};
  }

  static InteriorMap closed_form(std::string name, Chart source, Chart target, std::function<Vec3(const Vec3&)> fn) {
    return {std::move(name), MapKind::closed_form, source, target, std::move(fn)};
  }

  // The same map expressed in other charts, conjugating by Cayley.
  InteriorMap in_charts(Chart src, Chart tgt) const {
    InteriorMap self = *this;
    InteriorMap out = self;
    out.source = src;
    out.target = tgt;
    out.fn = [self, src, tgt](const Vec3& p) {
      const Vec3 s = to_chart(ModelPoint{src, p}, self.source).coords;
      return to_chart(ModelPoint{self.target, self(s)}, tgt).coords;
    };
    return out;
  }

  // post o this o pre, all acting in this map's charts.
  InteriorMap conjugated(const IsometryElement& post, const IsometryElement& pre) const {
    InteriorMap self = *this;
    InteriorMap out = self;
    out.name = "I o " + name + " o J";
    out.fn = [self, post, pre](const Vec3& p) {
      const Vec3 s = to_chart(pre.apply(ModelPoint{self.source, p}), self.source).coords;
      return to_chart(post.apply(ModelPoint{self.target, self(s)}), self.target).coords;
    };
    return out;
  }
};

struct FdOptions {
  double h = 1e-3;
  bool richardson = true;
  // Fixed chart step when positive; used for grid-backed fields.
  double absolute = 0.0;
};

// Chart step of hyperbolic size about h.
inline double chart_step(Chart c, const Vec3& p, double h) {
  if (c == Chart::halfspace) return h * p.z();
  const double r = p.norm();
  return h * (1.0 - r) * (1.0 + r);
}

// First derivatives (columns d_i F) and the Euclidean Laplacian of F at p
// from central differences, optionally Richardson-extrapolated.
struct Jet {
  Vec3 value = Vec3::Zero();
  Mat3 jacobian = Mat3::Zero();
  Vec3 laplacian = Vec3::Zero();
};

namespace detail {

template <class Fn>
Jet central_jet(const Fn& f, const Vec3& p, double d) {
  Jet j;
  j.value = f(p);
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = d;
    const Vec3 fp = f(p + e), fm = f(p - e);
    j.jacobian.col(i) = (fp - fm) / (2.0 * d);
    j.laplacian += (fp - 2.0 * j.value + fm) / (d * d);
  }
  return j;
}

}  // namespace detail

template <class Fn>
Jet compute_jet(const Fn& f, Chart source, const Vec3& p, const FdOptions& fd) {
  const double d = fd.absolute > 0.0 ? fd.absolute : chart_step(source, p, fd.h);
  Jet fine = detail::central_jet(f, p, d);
  if (!fd.richardson) return fine;
  const Jet coarse = detail::central_jet(f, p, 2.0 * d);
  fine.jacobian = (4.0 * fine.jacobian - coarse.jacobian) / 3.0;
  fine.laplacian = (4.0 * fine.laplacian - coarse.laplacian) / 3.0;
  if (!fine.jacobian.allFinite() || !fine.laplacian.allFinite()) {
    throw domain_error(fmt::format("non-finite finite differences at ({}, {}, {}) with step {}", p.x(), p.y(), p.z(), d));
  }
  return fine;
}

inline Jet compute_jet(const InteriorMap& F, const Vec3& p, const FdOptions& fd) {
  return compute_jet([&](const Vec3& x) { return F(x); }, F.source, p, fd);
}

// Matrix of F_* in orthonormal frames of the source and target metrics
// (columns are images of the source frame vectors).
inline Mat3 frame_matrix(const MetricPreset& m, const InteriorMap& F, const Jet& j, const Vec3& p) {
  return m.density(F.target, j.value) / m.density(F.source, p) * j.jacobian;
}

inline double interior_energy(const MetricPreset& m, const InteriorMap& F, const Vec3& p, const FdOptions& fd = {}) {
  const Jet j = compute_jet(F, p, fd);
  return 0.5 * frame_matrix(m, F, j, p).squaredNorm();
}

inline double interior_energy(const MetricPreset& m, const InteriorMap& F, const ModelPoint& p, const FdOptions& fd = {}) {
  return interior_energy(m, F, to_chart(p, F.source).coords, fd);
}

struct TensionResult {
  TangentVector vector;  // chart components at F(p)
  double norm = 0.0;     // hyperbolic norm
};

// Tension field from a precomputed jet. Both charts are conformal, so
// Delta_g F + g^{ij} Gamma(F)(d_i F, d_j F) reduces to
// lambda_s^{-2} [Delta F + (n-2) DF grad phi_s
//                + sum_i (2 (d_i F . grad phi_t) d_i F - |d_i F|^2 grad phi_t)]
// with phi = log(density).
inline TensionResult tension_from_jet(const MetricPreset& m, Chart source, Chart target, const Vec3& p, const Jet& j) {
  const Vec3 gs = MetricPreset::grad_log_density(source, p);
  const Vec3 gt = MetricPreset::grad_log_density(target, j.value);
  Vec3 acc = j.laplacian + j.jacobian * gs;
  for (int i = 0; i < 3; ++i) {
    const Vec3 di = j.jacobian.col(i);
    acc += 2.0 * di.dot(gt) * di - di.squaredNorm() * gt;
  }
  const double ls = m.density(source, p);
  const Vec3 tau = acc / (ls * ls);
  TensionResult r;
  r.vector = TangentVector{ModelPoint{target, j.value}, tau};
  r.norm = m.density(target, j.value) * tau.norm();
  if (!std::isfinite(r.norm)) {
    throw domain_error(fmt::format("non-finite tension at ({}, {}, {})", p.x(), p.y(), p.z()));
  }
  return r;
}

inline TensionResult tension(const MetricPreset& m, const InteriorMap& F, const Vec3& p, const FdOptions& fd = {}) {
  return tension_from_jet(m, F.source, F.target, p, compute_jet(F, p, fd));
}

inline TensionResult tension(const MetricPreset& m, const InteriorMap& F, const ModelPoint& p, const FdOptions& fd = {}) {
  return tension(m, F, to_chart(p, F.source).coords, fd);
}

// Laplace-Beltrami operator of a scalar field in chart c:
// lambda^{-2} (Delta u + (n-2) grad phi . grad u).
template <class Fn>
double laplacian_scalar(const MetricPreset& m, Chart c, const Fn& u, const Vec3& p, const FdOptions& fd = {}) {
  auto lift = [&](const Vec3& x) { return Vec3(u(x), 0.0, 0.0); };
  const Jet j = compute_jet(lift, c, p, fd);
  const double lam = m.density(c, p);
  const Vec3 grad = j.jacobian.row(0).transpose();
  return (j.laplacian.x() + MetricPreset::grad_log_density(c, p).dot(grad)) / (lam * lam);
}

// sigma_max / sigma_min of the frame matrix; +inf when rank deficient.
inline double distortion_of(const Mat3& a) {
  const Eigen::JacobiSVD<Mat3> svd(a);
  const Vec3 s = svd.singularValues();
  if (!(s(2) > 1e-14 * s(0))) return std::numeric_limits<double>::infinity();
  return s(0) / s(2);
}

inline double interior_distortion(const MetricPreset& m, const InteriorMap& F, const Vec3& p, const FdOptions& fd = {}) {
  const Jet j = compute_jet(F, p, fd);
  return distortion_of(frame_matrix(m, F, j, p));
}

// Pointwise local report used by the CLI and the X-set machinery.
struct LocalReport {
  Vec3 image;
  double energy = 0.0;
  double tension = 0.0;
  double distortion = 0.0;
  double jacobian = 0.0;
};

inline LocalReport local_report(const MetricPreset& m, const InteriorMap& F, const Vec3& p, const FdOptions& fd = {}) {
  const Jet j = compute_jet(F, p, fd);
  const Mat3 a = frame_matrix(m, F, j, p);
  LocalReport r;
  r.image = j.value;
  r.energy = 0.5 * a.squaredNorm();
  r.tension = tension_from_jet(m, F.source, F.target, p, j).norm;
  r.distortion = distortion_of(a);
  r.jacobian = a.determinant();
  return r;
}

inline double distance_field(const MetricPreset& m, const InteriorMap& F, const InteriorMap& G, const Vec3& p) {
  if (F.target != G.target) throw domain_error("distance_field: maps have different target charts");
  const ModelPoint fp{F.target, F(p)};
  const ModelPoint gp{G.target, G(to_chart(ModelPoint{F.source, p}, G.source).coords)};
  return distance(m, fp, gp);
}

struct FrameCoefficients {
  Mat3 alpha = Mat3::Zero();  // alpha(i, j) = <F_* u_i, v_j>
  Mat3 beta = Mat3::Zero();   // beta(i, j) = <G_* u_i, w_j>
  double d = 0.0;

  double alpha_planar() const { return alpha.leftCols<2>().squaredNorm(); }
  double beta_planar() const { return beta.leftCols<2>().squaredNorm(); }
};

// Orthonormal basis whose third vector is e3; the first is Gram-Schmidt of
// the smallest-index axis not parallel to e3.
inline Mat3 frame_with_third(const Vec3& e3) {
  int k = 0;
  for (; k < 3; ++k)
    if (std::abs(e3[k]) < 0.9) break;
  Vec3 e1 = Vec3::Unit(k) - e3[k] * e3;
  e1.normalize();
  Mat3 b;
  b.col(0) = e1;
  b.col(1) = e3.cross(e1);
  b.col(2) = e3;
  return b;
}

inline FrameCoefficients frame_coefficients(const MetricPreset& m, const InteriorMap& F, const InteriorMap& G,
                                            const Vec3& p, const FdOptions& fd = {}) {
  if (F.source != G.source || F.target != G.target) throw domain_error("frame_coefficients: chart mismatch");
  const Jet jf = compute_jet(F, p, fd), jg = compute_jet(G, p, fd);
  FrameCoefficients fc;
  fc.d = distance(m, {F.target, jf.value}, {G.target, jg.value});
  if (!(fc.d > 0.0)) throw degenerate_error("frame_coefficients: F(p) = G(p), the geodesic frame is undefined");
  const Vec3 v3 = -geodesic_direction(F.target, jf.value, jg.value);
  const Vec3 w3 = -geodesic_direction(G.target, jg.value, jf.value);
  fc.alpha = frame_matrix(m, F, jf, p).transpose() * frame_with_third(v3);
  fc.beta = frame_matrix(m, G, jg, p).transpose() * frame_with_third(w3);
  return fc;
}

struct ComparisonRecord {
  double d = 0.0;
  double lhs = 0.0;          // Delta d^2
  double tension_F = 0.0;
  double tension_G = 0.0;
  double energy_F = 0.0;
  double planar_sum = 0.0;   // sum_{i, j<=2} alpha^2 + beta^2
  double rhs_full = 0.0;     // tension term plus frame term
  double rhs_1 = 0.0;        // -2 d (|tau F| + |tau G|)
  double rhs_2 = 0.0;        // tension term plus 2 q d e(F) tanh(d/2)
  double margin_full() const { return lhs - rhs_full; }
  double margin_1() const { return lhs - rhs_1; }
  double margin_2() const { return lhs - rhs_2; }
};

// Laplacian comparison for d = dist(F, G). Curvature -1 constants, so the
// preset must be STANDARD.
inline ComparisonRecord comparison_check(const MetricPreset& m, const InteriorMap& F, const InteriorMap& G,
                                         const Vec3& p, double q_const, const FdOptions& fd = {}) {
  if (m.id() != Preset::standard) throw domain_error("comparison_check requires the STANDARD preset");
  ComparisonRecord r;
  const FrameCoefficients fc = frame_coefficients(m, F, G, p, fd);
  r.d = fc.d;
  auto d2 = [&](const Vec3& x) {
    const double d = distance_field(m, F, G, x);
    return d * d;
  };
  r.lhs = laplacian_scalar(m, F.source, d2, p, fd);
  r.tension_F = tension(m, F, p, fd).norm;
  r.tension_G = tension(m, G, p, fd).norm;
  r.energy_F = interior_energy(m, F, p, fd);
  r.planar_sum = fc.alpha_planar() + fc.beta_planar();
  const double th = std::tanh(0.5 * r.d);
  r.rhs_1 = -2.0 * r.d * (r.tension_F + r.tension_G);
  r.rhs_full = r.rhs_1 + 2.0 * r.d * r.planar_sum * th;
  r.rhs_2 = r.rhs_1 + 2.0 * q_const * r.d * r.energy_F * th;
  return r;
}

}  // namespace hypharm
