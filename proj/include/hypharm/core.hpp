#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace hypharm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Complex = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// A point left the model (|x| >= 1 in the ball, t <= 0 in the half-space)
// or an input was not finite.
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A boundary map was asked for its differential on its singular set.
class not_differentiable_error : public domain_error {
 public:
  using domain_error::domain_error;
};

// Quadrature produced non-finite samples.
class integration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Geometric configuration where the requested quantity is undefined
// (coincident images, rank-deficient samples, constant maps).
class degenerate_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or command-line usage.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

inline Vec2 to_vec(Complex z) { return {z.real(), z.imag()}; }
inline Complex to_complex(const Vec2& v) { return {v.x(), v.y()}; }

}  // namespace hypharm
