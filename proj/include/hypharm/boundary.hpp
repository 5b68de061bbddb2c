#pragma once

// Quasiconformal self-maps of the boundary plane from closed families with
// analytic differentials: affine maps, radial stretches z|z|^{k-1}, plane
// Moebius maps and compositions of these. A sampled variant with
// finite-difference derivatives is available for experiments.

#include "hypharm/core.hpp"
#include "hypharm/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace hypharm {

// x -> A x + shift with A = [[a, b], [c, d]], det A > 0.
struct LinearMap {
  double a = 1, b = 0, c = 0, d = 1;
  Vec2 shift = Vec2::Zero();

  Mat2 matrix() const { return (Mat2() << a, b, c, d).finished(); }
  double det() const { return a * d - b * c; }
  Vec2 apply(const Vec2& x) const { return matrix() * x + shift; }
  bool conformal() const { return a == d && b == -c; }
};

// z -> z |z|^{k-1}; not differentiable at the origin unless k = 1.
struct RadialPower {
  double k = 1.0;
};

// z -> (alpha z + beta) / (gamma z + delta), alpha delta - beta gamma != 0.
struct MobiusBoundary {
  Complex alpha{1, 0}, beta{0, 0}, gamma{0, 0}, delta{1, 0};

  Complex det() const { return alpha * delta - beta * gamma; }
  bool affine() const { return gamma == Complex(0, 0); }
  MobiusBoundary inverse() const { return {delta, -beta, -gamma, alpha}; }
  // this after other.
  MobiusBoundary after(const MobiusBoundary& o) const {
    return {alpha * o.alpha + beta * o.gamma, alpha * o.beta + beta * o.delta, gamma * o.alpha + delta * o.gamma,
            gamma * o.beta + delta * o.delta};
  }
  std::optional<Complex> pole() const {
    if (affine()) return std::nullopt;
    return -delta / gamma;
  }
};

// Similarity z -> s e^{i theta} z + b as a Moebius map.
inline MobiusBoundary similarity_mobius(double s, double theta, const Vec2& b) {
  return {std::polar(s, theta), to_complex(b), {0, 0}, {1, 0}};
}

// Arbitrary plane map with finite-difference derivatives. Not serializable.
struct SampledMap {
  std::string name;
  std::function<Vec2(const Vec2&)> fn;
};

class BoundaryMap;

// Applied left to right: maps.front() acts first.
struct BoundaryComposition {
  std::vector<BoundaryMap> maps;
};

struct BoundaryDerivative {
  Mat2 matrix = Mat2::Identity();
  double sigma1 = 1.0;
  double sigma2 = 1.0;

  static BoundaryDerivative from(const Mat2& m) {
    // Split into conformal and anticonformal parts; their moduli give the
    // singular values without an SVD and make conformal matrices exact.
    const double e = 0.5 * (m(0, 0) + m(1, 1)), f = 0.5 * (m(0, 0) - m(1, 1));
    const double g = 0.5 * (m(1, 0) + m(0, 1)), h = 0.5 * (m(1, 0) - m(0, 1));
    const double conf = std::hypot(e, h), anti = std::hypot(f, g);
    return {m, conf + anti, std::abs(conf - anti)};
  }

  double det() const { return matrix.determinant(); }
  double energy() const { return matrix.squaredNorm(); }
  double distortion() const {
    if (!(sigma2 > 0.0)) throw degenerate_error("boundary differential is not of maximal rank");
    return sigma1 / sigma2;
  }
};

class BoundaryMap {
 public:
  using Variant = std::variant<LinearMap, RadialPower, MobiusBoundary, BoundaryComposition, SampledMap>;

  BoundaryMap() : v_(LinearMap{}) {}
  BoundaryMap(LinearMap m) : v_(m) {
    if (!(m.det() > 0.0)) throw domain_error("linear boundary map must have positive determinant");
  }
  BoundaryMap(RadialPower m) : v_(m) {
    if (!(m.k > 0.0) || !std::isfinite(m.k)) throw domain_error("radial power exponent must be positive");
  }
  BoundaryMap(MobiusBoundary m) : v_(m) {
    if (std::abs(m.det()) == 0.0) throw domain_error("Moebius map is singular");
  }
  BoundaryMap(BoundaryComposition m) : v_(std::move(m)) {}
  BoundaryMap(SampledMap m) : v_(std::move(m)) {}

  static BoundaryMap identity() { return LinearMap{}; }
  static BoundaryMap linear(double a, double b, double c, double d) { return LinearMap{a, b, c, d, Vec2::Zero()}; }
  static BoundaryMap radial_power(double k) { return RadialPower{k}; }
  static BoundaryMap compose(std::vector<BoundaryMap> maps) { return BoundaryComposition{std::move(maps)}; }

  const Variant& variant() const { return v_; }
  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&v_);
  }

  bool serializable() const {
    if (std::holds_alternative<SampledMap>(v_)) return false;
    if (auto* c = get_if<BoundaryComposition>()) {
      for (const auto& m : c->maps)
        if (!m.serializable()) return false;
    }
    return true;
  }

  bool conformal() const {
    return std::visit(
        [](const auto& m) -> bool {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, LinearMap>) return m.conformal();
          else if constexpr (std::is_same_v<T, RadialPower>) return m.k == 1.0;
          else if constexpr (std::is_same_v<T, MobiusBoundary>) return true;
          else if constexpr (std::is_same_v<T, BoundaryComposition>) {
            for (const auto& x : m.maps)
              if (!x.conformal()) return false;
            return true;
          } else return false;
        },
        v_);
  }

  // Value on the extended plane; infinity is BoundaryPoint::infinity().
  BoundaryPoint eval_extended(const BoundaryPoint& p) const {
    return std::visit(
        [&](const auto& m) -> BoundaryPoint {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, BoundaryComposition>) {
            BoundaryPoint q = p;
            for (const auto& x : m.maps) q = x.eval_extended(q);
            return q;
          } else if constexpr (std::is_same_v<T, MobiusBoundary>) {
            if (p.at_infinity) return m.affine() ? p : BoundaryPoint::plane(to_vec(m.alpha / m.gamma));
            const Complex z = to_complex(p.planar());
            const Complex den = m.gamma * z + m.delta;
            if (den == Complex(0, 0)) return BoundaryPoint::infinity();
            return BoundaryPoint::plane(to_vec((m.alpha * z + m.beta) / den));
          } else {
            if (p.at_infinity) return p;
            return BoundaryPoint::plane(eval_plane(m, p.planar()));
          }
        },
        v_);
  }

  Vec2 eval(const Vec2& x) const {
    const BoundaryPoint q = eval_extended(BoundaryPoint::plane(x));
    if (q.at_infinity) throw domain_error(fmt::format("boundary map sends ({}, {}) to infinity", x.x(), x.y()));
    return q.planar();
  }

  BoundaryDerivative differential(const Vec2& x) const { return BoundaryDerivative::from(jacobian(x)); }

  Mat2 jacobian(const Vec2& x) const {
    return std::visit(
        [&](const auto& m) -> Mat2 {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, LinearMap>) {
            return m.matrix();
          } else if constexpr (std::is_same_v<T, RadialPower>) {
            if (m.k == 1.0) return Mat2::Identity();
            const double r = x.norm();
            if (r == 0.0) throw not_differentiable_error("radial power is not differentiable at the origin");
            const double rk = std::pow(r, m.k - 1.0);
            return rk * Mat2::Identity() + (m.k - 1.0) * rk / (r * r) * x * x.transpose();
          } else if constexpr (std::is_same_v<T, MobiusBoundary>) {
            const Complex den = m.gamma * to_complex(x) + m.delta;
            if (den == Complex(0, 0)) throw not_differentiable_error("Moebius map is not differentiable at its pole");
            const Complex dz = m.det() / (den * den);
            return (Mat2() << dz.real(), -dz.imag(), dz.imag(), dz.real()).finished();
          } else if constexpr (std::is_same_v<T, BoundaryComposition>) {
            Mat2 acc = Mat2::Identity();
            Vec2 y = x;
            for (const auto& s : m.maps) {
              acc = s.jacobian(y) * acc;
              const BoundaryPoint img = s.eval_extended(BoundaryPoint::plane(y));
              if (img.at_infinity) {
                if (&s != &m.maps.back()) throw not_differentiable_error("composition passes through infinity");
                throw not_differentiable_error("boundary map sends the point to infinity");
              }
              y = img.planar();
            }
            return acc;
          } else {
            const double h = 1e-6 * std::max(1.0, x.norm());
            Mat2 j;
            for (int c = 0; c < 2; ++c) {
              Vec2 e = Vec2::Zero();
              e[c] = h;
              j.col(c) = (m.fn(x + e) - m.fn(x - e)) / (2.0 * h);
            }
            return j;
          }
        },
        v_);
  }

  // Inverse map; not available for sampled maps.
  BoundaryMap inverse() const {
    return std::visit(
        [](const auto& m) -> BoundaryMap {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, LinearMap>) {
            const Mat2 inv = m.matrix().inverse();
            const Vec2 s = -inv * m.shift;
            return LinearMap{inv(0, 0), inv(0, 1), inv(1, 0), inv(1, 1), s};
          } else if constexpr (std::is_same_v<T, RadialPower>) {
            return RadialPower{1.0 / m.k};
          } else if constexpr (std::is_same_v<T, MobiusBoundary>) {
            return m.inverse();
          } else if constexpr (std::is_same_v<T, BoundaryComposition>) {
            std::vector<BoundaryMap> inv;
            for (auto it = m.maps.rbegin(); it != m.maps.rend(); ++it) inv.push_back(it->inverse());
            return BoundaryComposition{std::move(inv)};
          } else {
            throw degenerate_error("sampled boundary maps have no inverse");
          }
        },
        v_);
  }

  // Finite points where the differential is undefined.
  std::vector<Vec2> singular_points() const {
    return std::visit(
        [](const auto& m) -> std::vector<Vec2> {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, RadialPower>) {
            if (m.k == 1.0) return {};
            return {Vec2::Zero()};
          } else if constexpr (std::is_same_v<T, MobiusBoundary>) {
            if (auto p = m.pole()) return {to_vec(*p)};
            return {};
          } else if constexpr (std::is_same_v<T, BoundaryComposition>) {
            std::vector<Vec2> out;
            for (std::size_t i = 0; i < m.maps.size(); ++i) {
              std::vector<BoundaryPoint> pts;
              for (const auto& s : m.maps[i].singular_points()) pts.push_back(BoundaryPoint::plane(s));
              for (std::size_t j = i; j-- > 0;) {
                const BoundaryMap inv = m.maps[j].inverse();
                for (auto& q : pts) q = inv.eval_extended(q);
              }
              for (const auto& q : pts)
                if (!q.at_infinity) out.push_back(q.planar());
              // Points sent to infinity before the last stage.
              if (i + 1 < m.maps.size()) {
                BoundaryPoint q = BoundaryPoint::infinity();
                for (std::size_t j = i + 1; j-- > 0;) q = m.maps[j].inverse().eval_extended(q);
                if (!q.at_infinity) out.push_back(q.planar());
              }
            }
            return out;
          } else {
            return {};
          }
        },
        v_);
  }

  std::string to_string() const;

 private:
  static Vec2 eval_plane(const LinearMap& m, const Vec2& x) { return m.apply(x); }
  static Vec2 eval_plane(const RadialPower& m, const Vec2& x) {
    if (m.k == 1.0) return x;
    const double r = x.norm();
    if (r == 0.0) return x;
    return std::pow(r, m.k - 1.0) * x;
  }
  static Vec2 eval_plane(const SampledMap& m, const Vec2& x) { return m.fn(x); }

  Variant v_;
};

inline double boundary_energy(const BoundaryMap& f, const Vec2& x) { return f.differential(x).energy(); }
inline double distortion_boundary(const BoundaryMap& f, const Vec2& x) { return f.differential(x).distortion(); }
inline BoundaryDerivative differential(const BoundaryMap& f, const Vec2& x) { return f.differential(x); }

// ---- Moebius maps from point data -----------------------------------------

// Moebius map sending w0, w1, winf to 0, 1, infinity.
inline MobiusBoundary mobius_to_standard(const BoundaryPoint& w0, const BoundaryPoint& w1, const BoundaryPoint& winf) {
  const Complex a = to_complex(w0.planar()), b = to_complex(w1.planar()), c = to_complex(winf.planar());
  MobiusBoundary m;
  if (winf.at_infinity) {
    m = {{1, 0}, -a, {0, 0}, b - a};
  } else if (w0.at_infinity) {
    m = {{0, 0}, b - c, {1, 0}, -c};
  } else if (w1.at_infinity) {
    m = {{1, 0}, -a, {1, 0}, -c};
  } else {
    m = {b - c, -a * (b - c), b - a, -c * (b - a)};
  }
  if (std::abs(m.det()) == 0.0 || !std::isfinite(std::abs(m.det()))) {
    throw degenerate_error("three-point Moebius fit needs distinct points");
  }
  return m;
}

// Boundary action of a half-space isometry that returns to the half-space
// chart, as a plane Moebius map fitted through the images of 0, 1, inf.
inline MobiusBoundary mobius_from_isometry(const IsometryElement& g) {
  auto img = [&](const BoundaryPoint& p) {
    BoundaryPoint q = g.apply(p);
    if (q.chart != Chart::halfspace) q = cayley(q);
    return q;
  };
  const BoundaryPoint w0 = img(BoundaryPoint::plane(Vec2::Zero()));
  const BoundaryPoint w1 = img(BoundaryPoint::plane(Vec2(1, 0)));
  const BoundaryPoint wi = img(BoundaryPoint::infinity());
  return mobius_to_standard(w0, w1, wi).inverse();
}

// ---- simplification and normalization ------------------------------------

namespace detail {

inline std::optional<MobiusBoundary> as_mobius(const BoundaryMap& f) {
  if (auto* m = f.get_if<MobiusBoundary>()) return *m;
  if (auto* l = f.get_if<LinearMap>(); l && l->conformal()) {
    return MobiusBoundary{Complex(l->a, l->c), to_complex(l->shift), {0, 0}, {1, 0}};
  }
  if (auto* r = f.get_if<RadialPower>(); r && r->k == 1.0) return MobiusBoundary{};
  return std::nullopt;
}

inline std::optional<LinearMap> as_linear(const BoundaryMap& f) {
  if (auto* l = f.get_if<LinearMap>()) return *l;
  if (auto* m = f.get_if<MobiusBoundary>(); m && m->affine()) {
    const Complex s = m->alpha / m->delta, b = m->beta / m->delta;
    return LinearMap{s.real(), -s.imag(), s.imag(), s.real(), to_vec(b)};
  }
  if (auto* r = f.get_if<RadialPower>(); r && r->k == 1.0) return LinearMap{};
  return std::nullopt;
}

inline void flatten(const BoundaryMap& f, std::vector<BoundaryMap>& out) {
  if (auto* c = f.get_if<BoundaryComposition>()) {
    for (const auto& m : c->maps) flatten(m, out);
  } else {
    out.push_back(f);
  }
}

}  // namespace detail

// Merge adjacent stages that stay inside one family (affine with affine,
// Moebius with Moebius) and drop identities.
inline BoundaryMap simplify(const BoundaryMap& f) {
  std::vector<BoundaryMap> flat;
  detail::flatten(f, flat);
  std::vector<BoundaryMap> out;
  for (const auto& m : flat) {
    if (!out.empty()) {
      const BoundaryMap& prev = out.back();
      const auto pl = detail::as_linear(prev), ml = detail::as_linear(m);
      const auto pm = detail::as_mobius(prev), mm = detail::as_mobius(m);
      if (pl && ml) {
        const Mat2 a = ml->matrix() * pl->matrix();
        const Vec2 s = ml->matrix() * pl->shift + ml->shift;
        out.back() = LinearMap{a(0, 0), a(0, 1), a(1, 0), a(1, 1), s};
        continue;
      }
      if (pm && mm) {
        out.back() = mm->after(*pm);
        continue;
      }
    }
    out.push_back(m);
  }
  std::vector<BoundaryMap> kept;
  for (auto& m : out) {
    if (auto* l = m.get_if<LinearMap>(); l && l->a == 1 && l->b == 0 && l->c == 0 && l->d == 1 && l->shift.isZero()) {
      continue;
    }
    if (auto* r = m.get_if<RadialPower>(); r && r->k == 1.0) continue;
    if (auto mb = m.get_if<MobiusBoundary>()) {
      // Moebius maps that are exactly affine are stored as affine maps.
      if (mb->affine()) {
        if (auto l = detail::as_linear(m)) {
          if (l->a == 1 && l->b == 0 && l->c == 0 && l->d == 1 && l->shift.isZero()) continue;
          kept.push_back(*l);
          continue;
        }
      }
    }
    kept.push_back(m);
  }
  if (kept.empty()) return BoundaryMap::identity();
  if (kept.size() == 1) return kept.front();
  return BoundaryMap::compose(std::move(kept));
}

// g = M o f with M a plane Moebius map chosen so that g fixes 0, (1,0) and
// infinity. For maps fixing infinity M is a similarity.
inline BoundaryMap normalize(const BoundaryMap& f) {
  const BoundaryPoint w0 = f.eval_extended(BoundaryPoint::plane(Vec2::Zero()));
  const BoundaryPoint w1 = f.eval_extended(BoundaryPoint::plane(Vec2(1, 0)));
  const BoundaryPoint wi = f.eval_extended(BoundaryPoint::infinity());
  if (w0.at_infinity == w1.at_infinity && (w0.at_infinity || w0.planar() == w1.planar())) {
    throw degenerate_error("normalize: f(0) and f(1) coincide");
  }
  const MobiusBoundary m = mobius_to_standard(w0, w1, wi);
  return simplify(BoundaryMap::compose({f, m}));
}

// ---- text form -------------------------------------------------------------
//
//   identity
//   linear(a, b, c, d)           affine(a, b, c, d, e1, e2)
//   radial_power(k)
//   similarity(s, theta, b1, b2)
//   mobius(ar, ai, br, bi, cr, ci, dr, di)
//   compose(map, map, ...)       first argument acts first

inline std::string BoundaryMap::to_string() const {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearMap>) {
          if (m.shift.isZero()) {
            if (m.a == 1 && m.b == 0 && m.c == 0 && m.d == 1) return "identity";
            return fmt::format("linear({}, {}, {}, {})", m.a, m.b, m.c, m.d);
          }
          return fmt::format("affine({}, {}, {}, {}, {}, {})", m.a, m.b, m.c, m.d, m.shift.x(), m.shift.y());
        } else if constexpr (std::is_same_v<T, RadialPower>) {
          return fmt::format("radial_power({})", m.k);
        } else if constexpr (std::is_same_v<T, MobiusBoundary>) {
          return fmt::format("mobius({}, {}, {}, {}, {}, {}, {}, {})", m.alpha.real(), m.alpha.imag(), m.beta.real(),
                             m.beta.imag(), m.gamma.real(), m.gamma.imag(), m.delta.real(), m.delta.imag());
        } else if constexpr (std::is_same_v<T, BoundaryComposition>) {
          std::string s = "compose(";
          for (std::size_t i = 0; i < m.maps.size(); ++i) {
            if (i) s += ", ";
            s += m.maps[i].to_string();
          }
          return s + ")";
        } else {
          return "sampled(" + m.name + ")";
        }
      },
      v_);
}

namespace detail {

class MapParser {
 public:
  explicit MapParser(std::string_view s) : s_(s) {}

  BoundaryMap parse() {
    BoundaryMap m = parse_map();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing text");
    return m;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw config_error(fmt::format("boundary map '{}': {} at column {}", s_, what, pos_ + 1));
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(fmt::format("expected '{}'", c));
  }
  std::string ident() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected a map name");
    return std::string(s_.substr(start, pos_ - start));
  }
  double number() {
    skip_ws();
    double v = 0.0;
    const char* first = s_.data() + pos_;
    const char* last = s_.data() + s_.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || !std::isfinite(v)) fail("expected a finite number");
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return v;
  }
  std::vector<double> numbers(std::size_t n, const std::string& name) {
    std::vector<double> v;
    expect('(');
    for (std::size_t i = 0; i < n; ++i) {
      if (i) expect(',');
      v.push_back(number());
    }
    if (!accept(')')) fail(fmt::format("{} takes {} parameters", name, n));
    return v;
  }

  BoundaryMap parse_map() {
    const std::string name = ident();
    try {
      if (name == "identity") {
        if (accept('(')) expect(')');
        return BoundaryMap::identity();
      }
      if (name == "linear") {
        auto v = numbers(4, name);
        return LinearMap{v[0], v[1], v[2], v[3], Vec2::Zero()};
      }
      if (name == "affine") {
        auto v = numbers(6, name);
        return LinearMap{v[0], v[1], v[2], v[3], Vec2(v[4], v[5])};
      }
      if (name == "radial_power") return RadialPower{numbers(1, name)[0]};
      if (name == "similarity") {
        auto v = numbers(4, name);
        if (!(v[0] > 0)) fail("similarity scale must be positive");
        return similarity_mobius(v[0], v[1], Vec2(v[2], v[3]));
      }
      if (name == "mobius") {
        auto v = numbers(8, name);
        return MobiusBoundary{{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}};
      }
      if (name == "compose") {
        expect('(');
        std::vector<BoundaryMap> maps;
        do {
          maps.push_back(parse_map());
        } while (accept(','));
        expect(')');
        return BoundaryMap::compose(std::move(maps));
      }
    } catch (const domain_error& e) {
      fail(e.what());
    }
    fail(fmt::format("unknown map '{}'", name));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline BoundaryMap parse_boundary_map(std::string_view text) { return detail::MapParser(text).parse(); }

}  // namespace hypharm
