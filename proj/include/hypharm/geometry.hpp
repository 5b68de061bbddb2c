#pragma once

// Ball and upper half-space models of hyperbolic 3-space: metric presets,
// distances, the exponential and logarithm maps, Cayley transform,
// isometries, the measure lambda and the radial Green functions.

#include "hypharm/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace hypharm {

enum class Chart { ball, halfspace };

inline std::string_view chart_name(Chart c) { return c == Chart::ball ? "ball" : "halfspace"; }

enum class Preset { paper_ball, standard };

// Conformal density of the hyperbolic metric in either chart.
//
// STANDARD is the curvature -1 metric, 2/(1-|x|^2) on the ball and 1/t on
// the half-space. PAPER_BALL is half of it everywhere, 1/(1-|x|^2) and
// 1/(2t), which is the normalization under which the ball Green function
// G_r(x) = (1/3) int_{|x|}^r (1-s^2)/s^2 ds inverts the Laplacian.
// The Cayley transform is an isometry for both.
class MetricPreset {
 public:
  constexpr MetricPreset() = default;
  constexpr explicit MetricPreset(Preset id) : id_(id) {}

  static constexpr MetricPreset standard() { return MetricPreset(Preset::standard); }
  static constexpr MetricPreset paper_ball() { return MetricPreset(Preset::paper_ball); }

  constexpr Preset id() const { return id_; }
  std::string_view name() const { return id_ == Preset::standard ? "STANDARD" : "PAPER_BALL"; }

  // Multiple of the curvature -1 metric.
  constexpr double scale() const { return id_ == Preset::standard ? 1.0 : 0.5; }

  double ball_density_at(const Vec3& x) const {
    const double rho = x.norm();
    return scale() * 2.0 / ((1.0 - rho) * (1.0 + rho));
  }
  double halfspace_density_at(const Vec3& z) const { return scale() / z.z(); }

  double density(Chart c, const Vec3& p) const {
    return c == Chart::ball ? ball_density_at(p) : halfspace_density_at(p);
  }

  // Gradient of log(density); independent of the preset scale.
  static Vec3 grad_log_density(Chart c, const Vec3& p) {
    if (c == Chart::ball) {
      const double rho = p.norm();
      return 2.0 * p / ((1.0 - rho) * (1.0 + rho));
    }
    return Vec3(0.0, 0.0, -1.0 / p.z());
  }

  bool operator==(const MetricPreset&) const = default;

 private:
  Preset id_ = Preset::standard;
};

inline MetricPreset parse_preset(std::string_view s) {
  if (s == "STANDARD" || s == "standard") return MetricPreset::standard();
  if (s == "PAPER_BALL" || s == "paper_ball") return MetricPreset::paper_ball();
  throw config_error("unknown metric preset '" + std::string(s) + "'");
}

// Chart coordinates of an interior point. Ball points satisfy |x| < 1,
// half-space points (x1, x2, t) satisfy t > 0.
struct ModelPoint {
  Chart chart = Chart::ball;
  Vec3 coords = Vec3::Zero();

  static ModelPoint ball(const Vec3& x) {
    if (!all_finite(x) || !(x.norm() < 1.0)) throw domain_error("point is not inside the unit ball");
    return {Chart::ball, x};
  }
  static ModelPoint halfspace(const Vec3& z) {
    if (!all_finite(z) || !(z.z() > 0.0)) throw domain_error("point is not in the upper half-space (t <= 0)");
    return {Chart::halfspace, z};
  }
  static ModelPoint halfspace(const Vec2& x, double t) { return halfspace(Vec3(x.x(), x.y(), t)); }

  Vec2 horizontal() const { return coords.head<2>(); }
  double height() const { return coords.z(); }
};

inline bool inside_model(Chart c, const Vec3& p) {
  if (!all_finite(p)) return false;
  return c == Chart::ball ? p.norm() < 1.0 : p.z() > 0.0;
}

inline void require_inside(Chart c, const Vec3& p) {
  if (!inside_model(c, p)) {
    throw domain_error(c == Chart::ball ? "point is not inside the unit ball"
                                        : "point is not in the upper half-space (t <= 0)");
  }
}

// A point of the ideal boundary: the unit sphere for the ball, the extended
// plane R^2 u {inf} for the half-space (coords.z() is zero).
struct BoundaryPoint {
  Chart chart = Chart::halfspace;
  Vec3 coords = Vec3::Zero();
  bool at_infinity = false;

  static BoundaryPoint plane(const Vec2& x) { return {Chart::halfspace, Vec3(x.x(), x.y(), 0.0), false}; }
  static BoundaryPoint infinity() { return {Chart::halfspace, Vec3::Zero(), true}; }
  static BoundaryPoint sphere(const Vec3& zeta) { return {Chart::ball, zeta.normalized(), false}; }

  Vec2 planar() const { return coords.head<2>(); }
};

struct TangentVector {
  ModelPoint base;
  Vec3 components = Vec3::Zero();

  double hyperbolic_norm(const MetricPreset& m) const {
    return m.density(base.chart, base.coords) * components.norm();
  }
};

namespace detail {

// Curvature -1 distance; callers multiply by the preset scale.
inline double standard_distance(Chart c, const Vec3& p, const Vec3& q) {
  const double gap = (p - q).norm();
  if (c == Chart::ball) {
    const double rp = p.norm(), rq = q.norm();
    const double den = std::sqrt((1.0 - rp) * (1.0 + rp) * (1.0 - rq) * (1.0 + rq));
    return 2.0 * std::asinh(gap / den);
  }
  return 2.0 * std::asinh(gap / (2.0 * std::sqrt(p.z() * q.z())));
}

inline double standard_density(Chart c, const Vec3& p) {
  return MetricPreset::standard().density(c, p);
}

}  // namespace detail

inline double distance(const MetricPreset& m, const ModelPoint& p, const ModelPoint& q) {
  if (p.chart != q.chart) throw domain_error("distance: points are in different charts");
  require_inside(p.chart, p.coords);
  require_inside(q.chart, q.coords);
  return m.scale() * detail::standard_distance(p.chart, p.coords, q.coords);
}

// Moebius translation of the ball taking the origin to a; also valid on the
// unit sphere. T_{-a} is the inverse of T_a and both have scalar derivative
// at the origin (resp. at a).
inline Vec3 ball_translate(const Vec3& a, const Vec3& x) {
  const double ax = a.dot(x);
  const double aa = a.squaredNorm();
  const double xx = x.squaredNorm();
  const double den = 1.0 + 2.0 * ax + aa * xx;
  return ((1.0 + 2.0 * ax + xx) * a + (1.0 - aa) * x) / den;
}

// ---- Cayley transform -----------------------------------------------------
//
// Half-space to ball: (x, t) -> (2x, |z|^2 - 1) / (|x|^2 + (t+1)^2).
// (0,0,1) goes to the origin, the plane origin to the south pole and
// infinity to the north pole.

inline Vec3 halfspace_to_ball(const Vec3& z) {
  const double den = z.x() * z.x() + z.y() * z.y() + (z.z() + 1.0) * (z.z() + 1.0);
  return Vec3(2.0 * z.x(), 2.0 * z.y(), z.squaredNorm() - 1.0) / den;
}

inline Vec3 ball_to_halfspace(const Vec3& w) {
  const double den = w.x() * w.x() + w.y() * w.y() + (1.0 - w.z()) * (1.0 - w.z());
  const double r = w.norm();
  return Vec3(2.0 * w.x(), 2.0 * w.y(), (1.0 - r) * (1.0 + r)) / den;
}

inline ModelPoint cayley(const ModelPoint& p) {
  require_inside(p.chart, p.coords);
  if (p.chart == Chart::halfspace) return ModelPoint::ball(halfspace_to_ball(p.coords));
  return ModelPoint::halfspace(ball_to_halfspace(p.coords));
}

inline BoundaryPoint cayley(const BoundaryPoint& b) {
  if (b.chart == Chart::halfspace) {
    if (b.at_infinity) return BoundaryPoint::sphere(Vec3(0, 0, 1));
    const Vec2 x = b.planar();
    const double xx = x.squaredNorm();
    return {Chart::ball, Vec3(2.0 * x.x(), 2.0 * x.y(), xx - 1.0) / (xx + 1.0), false};
  }
  const Vec3& w = b.coords;
  const double den = 1.0 - w.z();
  if (den <= 1e-300 || w.head<2>().norm() / den > 1e300) return BoundaryPoint::infinity();
  return BoundaryPoint::plane(Vec2(w.x() / den, w.y() / den));
}

inline ModelPoint to_chart(const ModelPoint& p, Chart c) { return p.chart == c ? p : cayley(p); }

// ---- geodesics ------------------------------------------------------------

// Euclidean unit vector at p tangent to the geodesic from p towards q.
inline Vec3 geodesic_direction(Chart c, const Vec3& p, const Vec3& q) {
  if (c == Chart::ball) {
    const Vec3 w = ball_translate(-p, q);
    const double n = w.norm();
    if (n == 0.0) throw degenerate_error("geodesic direction between coincident points");
    return w / n;
  }
  const Vec2 delta = q.head<2>() - p.head<2>();
  const double gap = delta.norm();
  const double tp = p.z(), tq = q.z();
  if (gap <= 1e-15 * (tp + tq)) {
    if (tq == tp) throw degenerate_error("geodesic direction between coincident points");
    return Vec3(0.0, 0.0, tq > tp ? 1.0 : -1.0);
  }
  const Vec2 e = delta / gap;
  // Centre of the semicircle through p and q, measured from p along e.
  const double centre = (gap * gap + tq * tq - tp * tp) / (2.0 * gap);
  Vec3 dir(tp * e.x(), tp * e.y(), centre);
  return dir / dir.norm();
}

// Chart-coordinate tangent vector at p with exp_p(v) = q. Independent of the
// preset since constant rescaling of a metric leaves its geodesics fixed.
inline Vec3 log_map(Chart c, const Vec3& p, const Vec3& q) {
  if (p == q) return Vec3::Zero();
  const double d = detail::standard_distance(c, p, q);
  if (d == 0.0) return Vec3::Zero();
  return d / detail::standard_density(c, p) * geodesic_direction(c, p, q);
}

// Exponential map in chart coordinates: the point at parameter 1 on the
// geodesic with initial velocity v.
inline Vec3 exp_map(Chart c, const Vec3& p, const Vec3& v) {
  const double speed = v.norm();
  if (speed == 0.0) return p;
  const Vec3 u = v / speed;
  const double d = detail::standard_density(c, p) * speed;  // curvature -1 length
  if (c == Chart::ball) return ball_translate(p, std::tanh(0.5 * d) * u);

  // Half-space: rescale p to (0,0,1) and run the geodesic in the vertical
  // plane spanned by u, written as a rotation of the imaginary axis.
  const double t0 = p.z();
  const double horiz = u.head<2>().norm();
  if (horiz < 1e-15) return Vec3(p.x(), p.y(), t0 * std::exp(d * (u.z() > 0 ? 1.0 : -1.0)));
  const double theta = 0.5 * std::atan2(-horiz, u.z());
  const double cs = std::cos(theta), sn = std::sin(theta);
  const Complex I(0.0, 1.0);
  Complex z;
  if (d > 0.0) {
    const double e = std::exp(-d);
    z = (cs * I + sn * e) / (-sn * I + cs * e);
  } else {
    const double e = std::exp(d);
    z = (cs * I * e + sn) / (-sn * I * e + cs);
  }
  const Vec2 dir = u.head<2>() / horiz;
  const Vec2 x = p.head<2>() + t0 * z.real() * dir;
  return Vec3(x.x(), x.y(), t0 * z.imag());
}

// Point at hyperbolic distance s*|v| from p along the geodesic with initial
// direction v.
inline ModelPoint geodesic_step(const MetricPreset&, const ModelPoint& p, const TangentVector& v, double s) {
  if (!all_finite(p.coords) || !all_finite(v.components) || !std::isfinite(s)) {
    throw domain_error("geodesic_step: non-finite input");
  }
  if (v.base.chart != p.chart || v.base.coords != p.coords) {
    throw domain_error("geodesic_step: tangent vector is not based at p");
  }
  require_inside(p.chart, p.coords);
  if (s == 0.0 || v.components.norm() == 0.0) return p;
  const Vec3 q = exp_map(p.chart, p.coords, s * v.components);
  require_inside(p.chart, q);
  return {p.chart, q};
}

// ---- isometries -----------------------------------------------------------

// (x, t) -> (scale * Q(angle) x + shift, scale * t); fixes infinity.
struct HalfSpaceSimilarity {
  double scale = 1.0;
  double angle = 0.0;
  Vec2 shift = Vec2::Zero();

  Vec2 apply_plane(const Vec2& x) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return scale * Vec2(c * x.x() - s * x.y(), s * x.x() + c * x.y()) + shift;
  }
  Vec3 apply(const Vec3& z) const {
    const Vec2 x = apply_plane(z.head<2>());
    return Vec3(x.x(), x.y(), scale * z.z());
  }
};

// Moebius translation of the ball sending the origin to target.
struct BallTranslation {
  Vec3 target = Vec3::Zero();
};

// Switches between the half-space and ball charts.
struct CayleyTransform {};

class IsometryElement {
 public:
  using Composition = std::vector<IsometryElement>;
  using Variant = std::variant<HalfSpaceSimilarity, BallTranslation, CayleyTransform, Composition>;

  IsometryElement() : v_(Composition{}) {}
  IsometryElement(HalfSpaceSimilarity s) : v_(s) {
    if (!(s.scale > 0.0) || !std::isfinite(s.scale)) throw domain_error("similarity scale must be positive");
  }
  IsometryElement(BallTranslation b) : v_(b) {
    if (!(b.target.norm() < 1.0)) throw domain_error("ball translation target must lie in the ball");
  }
  IsometryElement(CayleyTransform c) : v_(c) {}
  // Applied in list order: the first element acts first.
  IsometryElement(Composition list) : v_(std::move(list)) {}

  static IsometryElement identity() { return IsometryElement(); }

  const Variant& variant() const { return v_; }

  ModelPoint apply(const ModelPoint& p) const {
    return std::visit(
        [&](const auto& g) -> ModelPoint {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, HalfSpaceSimilarity>) {
            const ModelPoint h = to_chart(p, Chart::halfspace);
            const ModelPoint img = ModelPoint::halfspace(g.apply(h.coords));
            return to_chart(img, p.chart);
          } else if constexpr (std::is_same_v<T, BallTranslation>) {
            const ModelPoint b = to_chart(p, Chart::ball);
            const ModelPoint img{Chart::ball, ball_translate(g.target, b.coords)};
            require_inside(Chart::ball, img.coords);
            return to_chart(img, p.chart);
          } else if constexpr (std::is_same_v<T, CayleyTransform>) {
            return cayley(p);
          } else {
            ModelPoint q = p;
            for (const auto& e : g) q = e.apply(q);
            return q;
          }
        },
        v_);
  }

  BoundaryPoint apply(const BoundaryPoint& b) const {
    return std::visit(
        [&](const auto& g) -> BoundaryPoint {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, HalfSpaceSimilarity>) {
            const BoundaryPoint h = b.chart == Chart::halfspace ? b : cayley(b);
            const BoundaryPoint img = h.at_infinity ? h : BoundaryPoint::plane(g.apply_plane(h.planar()));
            return img.chart == b.chart ? img : cayley(img);
          } else if constexpr (std::is_same_v<T, BallTranslation>) {
            const BoundaryPoint s = b.chart == Chart::ball ? b : cayley(b);
            const BoundaryPoint img = BoundaryPoint::sphere(ball_translate(g.target, s.coords));
            return img.chart == b.chart ? img : cayley(img);
          } else if constexpr (std::is_same_v<T, CayleyTransform>) {
            return cayley(b);
          } else {
            BoundaryPoint q = b;
            for (const auto& e : g) q = e.apply(q);
            return q;
          }
        },
        v_);
  }

  IsometryElement inverse() const {
    return std::visit(
        [](const auto& g) -> IsometryElement {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, HalfSpaceSimilarity>) {
            HalfSpaceSimilarity inv;
            inv.scale = 1.0 / g.scale;
            inv.angle = -g.angle;
            const double c = std::cos(-g.angle), s = std::sin(-g.angle);
            inv.shift = -inv.scale * Vec2(c * g.shift.x() - s * g.shift.y(), s * g.shift.x() + c * g.shift.y());
            return inv;
          } else if constexpr (std::is_same_v<T, BallTranslation>) {
            return BallTranslation{-g.target};
          } else if constexpr (std::is_same_v<T, CayleyTransform>) {
            return g;
          } else {
            Composition inv;
            for (auto it = g.rbegin(); it != g.rend(); ++it) inv.push_back(it->inverse());
            return inv;
          }
        },
        v_);
  }

 private:
  Variant v_;
};

inline ModelPoint apply_isometry(const IsometryElement& g, const ModelPoint& p) { return g.apply(p); }
inline BoundaryPoint apply_isometry(const IsometryElement& g, const BoundaryPoint& b) { return g.apply(b); }

// Ball isometry moving the boundary point xi to the north pole (the image of
// infinity under Cayley), built from at most two Moebius translations.
inline IsometryElement ball_isometry_to_north_pole(const Vec3& xi_in) {
  const Vec3 north(0, 0, 1);
  IsometryElement::Composition steps;
  Vec3 xi = xi_in.normalized();
  // Translations move points along great circles through +-a towards a, so
  // an antipodal start needs a preliminary step off the axis.
  if (xi.dot(north) < -0.5) {
    const Vec3 a(0.5, 0.0, 0.0);
    steps.push_back(BallTranslation{a});
    xi = ball_translate(a, xi).normalized();
  }
  const double psi = std::acos(std::clamp(xi.dot(north), -1.0, 1.0));
  if (psi > 1e-15) {
    // In the plane of xi and north: xi at angle 0, north at psi, the
    // attracting fixed point a-hat at beta with psi < beta < pi.
    Vec3 perp = north - xi.dot(north) * xi;
    perp.normalize();
    const double beta = 0.5 * (psi + kPi);
    const Vec3 ahat = std::cos(beta) * xi + std::sin(beta) * perp;
    const double k = std::tan(0.5 * (beta - psi)) / std::tan(0.5 * beta);
    const double s = (1.0 - k) / (1.0 + k);
    steps.push_back(BallTranslation{s * ahat});
  }
  return IsometryElement(std::move(steps));
}

// ---- potential theory on the ball -----------------------------------------

// Green function of the ball of radius r (0 < r <= 1) with pole at the
// origin, (1/3)(1/rho + rho - 1/r - r) for rho <= r and zero beyond.
// At rho = 0 it returns +infinity; integrate against it with open rules.
inline double green_r(double r, double rho) {
  if (!(r > 0.0 && r <= 1.0)) throw domain_error("green_r: radius must lie in (0, 1]");
  if (!(rho >= 0.0 && rho < 1.0)) throw domain_error("green_r: |x| must lie in [0, 1)");
  if (rho == 0.0) return std::numeric_limits<double>::infinity();
  if (rho >= r) return 0.0;
  return (r - rho) * (1.0 - rho * r) / (3.0 * rho * r);
}

inline double green_r(double r, const Vec3& x) { return green_r(r, x.norm()); }

// Whole-ball Green function (1 - rho)^2 / (3 rho).
inline double green(double rho) { return green_r(1.0, rho); }

// Density of lambda against the normalized Lebesgue measure mu.
inline double lambda_weight(const Vec3& x) {
  require_inside(Chart::ball, x);
  const double rho = x.norm();
  const double s = (1.0 - rho) * (1.0 + rho);
  return 1.0 / (s * s * s);
}

// Radial weight of lambda in polar form, 3 rho^2 / (1 - rho^2)^3.
inline double lambda_radial_weight(double rho) {
  const double s = (1.0 - rho) * (1.0 + rho);
  return 3.0 * rho * rho / (s * s * s);
}

}  // namespace hypharm
