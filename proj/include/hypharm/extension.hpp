#pragma once

// The good extension of a boundary map to the upper half-space: the
// horizontal part is the Gauss-Weierstrass transform of f at scale t, the
// height is (t / sqrt 2) sqrt(GW[e(f)]). Linear maps also have the closed
// form H(L)(x, t) = (L x, sqrt(e(L)/2) t).

#include "hypharm/boundary.hpp"
#include "hypharm/core.hpp"
#include "hypharm/geometry.hpp"
#include "hypharm/quadrature.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace hypharm {

struct QuadratureSpec {
  int nodes_per_axis = 32;
  // Nodes closer than this (relative to t) to a singular point are moved by
  // jitter * t.
  double jitter = 1e-9;
  // Stop doubling once successive values differ by less than this.
  double refine_target = 1e-10;
  int max_nodes = 128;

  void validate() const {
    if (nodes_per_axis < 4) throw config_error("quadrature nodes_per_axis must be at least 4");
    if (!(jitter > 0.0)) throw config_error("quadrature jitter must be positive");
    if (!(refine_target > 0.0)) throw config_error("quadrature refine_target must be positive");
    if (max_nodes < nodes_per_axis) throw config_error("quadrature max_nodes must be >= nodes_per_axis");
  }

  std::string describe() const {
    return fmt::format("gauss-hermite {}x{}, jitter {}, refine_target {}, max_nodes {}", nodes_per_axis,
                       nodes_per_axis, jitter, refine_target, max_nodes);
  }
};

namespace detail {

inline Vec2 jittered(const Vec2& y, double t, const QuadratureSpec& q, const std::vector<Vec2>& singular) {
  for (const auto& s : singular) {
    if ((y - s).norm() <= 1e-12 * std::max(1.0, t)) return y + q.jitter * t * Vec2(0.6, 0.8);
  }
  return y;
}

}  // namespace detail

// Gaussian average int g(x + t y) phi(y) dy with phi(y) = exp(-|y|^2/2)/(2 pi),
// by a tensor Gauss-Hermite rule after y = sqrt(2) u. Value is any type
// supporting scalar multiplication and addition (double, Eigen vectors).
template <class Fn>
auto gauss_weierstrass(const Fn& g, const Vec2& x, double t, const QuadratureSpec& q,
                       const std::vector<Vec2>& singular = {}) -> decltype(g(x)) {
  using Value = decltype(g(x));
  if (!(t > 0.0) || !std::isfinite(t)) throw domain_error("gauss_weierstrass: t must be positive");
  const Rule1D& rule = gauss_hermite(q.nodes_per_axis);
  const double scale = std::sqrt(2.0) * t;
  const int n = q.nodes_per_axis;
  Value acc{};
  bool first = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec2 y = detail::jittered(x + scale * Vec2(rule.nodes[i], rule.nodes[j]), t, q, singular);
      Value v;
      try {
        v = g(y);
      } catch (const not_differentiable_error&) {
        v = g(y + q.jitter * t * Vec2(0.6, 0.8));
      }
      const double w = rule.weights[i] * rule.weights[j] / kPi;
      if constexpr (std::is_arithmetic_v<Value>) {
        if (!std::isfinite(v)) {
          throw integration_error(fmt::format("non-finite integrand at node ({}, {})", y.x(), y.y()));
        }
        acc += w * v;
      } else {
        if (!v.allFinite()) throw integration_error(fmt::format("non-finite integrand at node ({}, {})", y.x(), y.y()));
        if (first) {
          acc = w * v;
          first = false;
        } else {
          acc += w * v;
        }
      }
    }
  }
  return acc;
}

struct GoodExtensionDetail {
  Vec3 value;
  double smoothed_energy = 0.0;  // GW[e(f)](x, t)
  bool clamped = false;          // negative round-off under the root was set to 0
};

class GoodExtensionMap {
 public:
  GoodExtensionMap(BoundaryMap f, QuadratureSpec q = {}) : f_(std::move(f)), q_(q), singular_(f_.singular_points()) {
    q_.validate();
  }

  const BoundaryMap& boundary() const { return f_; }
  const QuadratureSpec& quad() const { return q_; }

  GoodExtensionDetail eval_detail(const Vec3& z) const { return eval_with(z, q_.nodes_per_axis); }

  Vec3 operator()(const Vec3& z) const { return eval_detail(z).value; }
  Vec3 eval(const Vec3& z) const { return eval_detail(z).value; }

  // Double the node count until successive values agree to refine_target.
  GoodExtensionDetail eval_refined(const Vec3& z, int* nodes_used = nullptr) const {
    int n = q_.nodes_per_axis;
    GoodExtensionDetail cur = eval_with(z, n);
    while (2 * n <= q_.max_nodes) {
      GoodExtensionDetail next = eval_with(z, 2 * n);
      const double change = (next.value - cur.value).norm() / std::max(1.0, next.value.norm());
      cur = next;
      n *= 2;
      if (change < q_.refine_target) break;
    }
    if (nodes_used) *nodes_used = n;
    return cur;
  }

  GoodExtensionDetail eval_with(const Vec3& z, int nodes) const {
    if (!(z.z() > 0.0) || !all_finite(z)) throw domain_error("good extension: point is not in the upper half-space");
    QuadratureSpec q = q_;
    q.nodes_per_axis = nodes;
    const double t = z.z();
    auto integrand = [&](const Vec2& y) -> Eigen::Vector3d {
      const BoundaryDerivative d = f_.differential(y);
      const Vec2 v = f_.eval(y);
      return Eigen::Vector3d(v.x(), v.y(), d.energy());
    };
    const Eigen::Vector3d m = gauss_weierstrass(integrand, z.head<2>(), t, q, singular_);
    GoodExtensionDetail out;
    out.smoothed_energy = m.z();
    double e = m.z();
    if (e < 0.0) {
      out.clamped = true;
      e = 0.0;
    }
    out.value = Vec3(m.x(), m.y(), t / std::sqrt(2.0) * std::sqrt(e));
    return out;
  }

 private:
  BoundaryMap f_;
  QuadratureSpec q_;
  std::vector<Vec2> singular_;
};

inline GoodExtensionMap good_extension(const BoundaryMap& f, const QuadratureSpec& q = {}) { return {f, q}; }

inline Vec3 good_extension(const BoundaryMap& f, const Vec3& z, const QuadratureSpec& q = {}) {
  return GoodExtensionMap(f, q).eval(z);
}

inline Vec3 linear_harmonic(const LinearMap& L, const Vec3& z) {
  if (!(z.z() > 0.0)) throw domain_error("linear_harmonic: point is not in the upper half-space");
  const Vec2 x = L.apply(z.head<2>());
  const double e = L.matrix().squaredNorm();
  return Vec3(x.x(), x.y(), std::sqrt(0.5 * e) * z.z());
}

}  // namespace hypharm
