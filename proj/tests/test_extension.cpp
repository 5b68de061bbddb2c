#include <catch_amalgamated.hpp>

#include "hypharm/extension.hpp"

using namespace hypharm;
using Catch::Approx;

namespace {

std::vector<Vec3> lattice5() {
  std::vector<Vec3> pts;
  for (double x : {-2.0, -1.0, 0.0, 0.5, 1.5})
    for (double y : {-1.5, -0.5, 0.0, 1.0, 2.0})
      for (double t : {0.05, 0.3, 1.0, 2.0, 5.0}) pts.emplace_back(x, y, t);
  return pts;
}

}  // namespace

TEST_CASE("Gauss-Weierstrass transform") {
  const QuadratureSpec q;
  for (const Vec3& z : lattice5()) {
    const double one = gauss_weierstrass([](const Vec2&) { return 1.0; }, z.head<2>(), z.z(), q);
    CHECK(std::abs(one - 1.0) < 1e-12);
    const double lin = gauss_weierstrass([](const Vec2& y) { return 3 * y.x() - 2 * y.y() + 1; }, z.head<2>(), z.z(), q);
    CHECK(lin == Approx(3 * z.x() - 2 * z.y() + 1).margin(1e-12));
  }
  CHECK(gauss_weierstrass([](const Vec2& y) { return y.squaredNorm(); }, Vec2::Zero(), 1.0, q) ==
        Approx(2.0).epsilon(1e-13));
  CHECK_THROWS_AS(gauss_weierstrass([](const Vec2&) { return 1.0; }, Vec2::Zero(), 0.0, q), domain_error);
  CHECK_THROWS_AS(
      gauss_weierstrass([](const Vec2& y) { return y.x() > 0 ? NAN : 1.0; }, Vec2::Zero(), 1.0, q), integration_error);
}

TEST_CASE("good extension of the identity and of linear maps") {
  const QuadratureSpec q;
  const GoodExtensionMap id(BoundaryMap::identity(), q);
  for (const Vec3& z : lattice5()) CHECK((id.eval(z) - z).norm() < 1e-12 * (1 + z.norm()));

  const LinearMap shear{1, 0.7, 0, 1, Vec2::Zero()};
  for (const LinearMap& L : {LinearMap{}, LinearMap{2, 0, 0, 1, Vec2::Zero()}, shear}) {
    const GoodExtensionMap psi(BoundaryMap(L), q);
    double worst = 0;
    for (const Vec3& z : lattice5()) {
      const auto m = MetricPreset::standard();
      worst = std::max(worst, distance(m, ModelPoint::halfspace(psi.eval(z)),
                                       ModelPoint::halfspace(linear_harmonic(L, z))));
    }
    CHECK(worst < 1e-6);
  }
  const Vec3 h = linear_harmonic(LinearMap{2, 0, 0, 1, Vec2::Zero()}, Vec3(0, 0, 1));
  CHECK((h - Vec3(0, 0, std::sqrt(2.5))).norm() < 1e-15);
}

TEST_CASE("exact polynomial oracle for z|z|^2") {
  // Gaussian moments give x(|x|^2 + 4t^2) and e(f) = 10|y|^4.
  const GoodExtensionMap psi(BoundaryMap::radial_power(3), QuadratureSpec{});
  for (const Vec3& z : lattice5()) {
    const Vec2 x = z.head<2>();
    const double t = z.z(), r2 = x.squaredNorm();
    const Vec2 horiz = x * (r2 + 4 * t * t);
    const double vert = t / std::sqrt(2.0) * std::sqrt(10.0 * (r2 * r2 + 8 * t * t * r2 + 8 * t * t * t * t));
    const Vec3 v = psi.eval(z);
    CHECK((v.head<2>() - horiz).norm() < 1e-10 * (1 + horiz.norm()));
    CHECK(v.z() == Approx(vert).epsilon(1e-11));
  }
}

TEST_CASE("singular nodes are jittered") {
  // With an odd node count the centre node lands on the origin.
  QuadratureSpec q;
  q.nodes_per_axis = 33;
  const GoodExtensionMap psi(BoundaryMap::radial_power(0.5), q);
  const Vec3 v = psi.eval(Vec3(0, 0, 1));
  CHECK(v.allFinite());
  CHECK(v.z() > 0);
}

TEST_CASE("conformal naturality under similarities") {
  // The tensor rule is not rotation invariant, so the inner similarity is
  // rotation-free for the non-polynomial map; rotations are exercised on the
  // polynomial case, where the rule is exact.
  const HalfSpaceSimilarity I{1.5, 0.4, Vec2(0.3, -0.2)};
  const HalfSpaceSimilarity J{0.7, 0.0, Vec2(-0.5, 0.25)}, Jrot{0.7, -1.1, Vec2(-0.5, 0.25)};
  const std::vector<std::pair<BoundaryMap, HalfSpaceSimilarity>> cases{
      {BoundaryMap::radial_power(2), J}, {BoundaryMap::radial_power(3), Jrot}};
  for (const auto& [f, inner] : cases) {
    const BoundaryMap conj = BoundaryMap::compose(
        {BoundaryMap(similarity_mobius(inner.scale, inner.angle, inner.shift)), f,
         BoundaryMap(similarity_mobius(I.scale, I.angle, I.shift))});
    const GoodExtensionMap pf(f), pc(conj);
    for (const Vec3& z : {Vec3(0.1, 0.2, 0.5), Vec3(-1, 0.3, 1.2), Vec3(2, -1, 0.2)}) {
      const Vec3 lhs = I.apply(pf.eval(inner.apply(z)));
      const Vec3 rhs = pc.eval(z);
      CHECK((lhs - rhs).norm() < 1e-8 * (1 + rhs.norm()));
    }
  }
}

TEST_CASE("refinement changes shrink") {
  const BoundaryMap f = BoundaryMap::radial_power(2);
  std::vector<double> changes;
  const std::vector<Vec3> pts{Vec3(0.2, 0.1, 0.3), Vec3(1, -1, 1), Vec3(0, 0.5, 2)};
  std::vector<Vec3> prev;
  for (int n : {8, 16, 32, 64}) {
    QuadratureSpec q;
    q.nodes_per_axis = n;
    q.max_nodes = 256;
    const GoodExtensionMap psi(f, q);
    std::vector<Vec3> cur;
    for (const auto& z : pts) cur.push_back(psi.eval(z));
    if (!prev.empty()) {
      double c = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) c = std::max(c, (cur[i] - prev[i]).norm());
      changes.push_back(c);
    }
    prev = cur;
  }
  for (std::size_t i = 1; i < changes.size(); ++i) CHECK(changes[i] < changes[i - 1]);

  QuadratureSpec q;
  q.refine_target = 1e-9;
  int used = 0;
  const auto d = GoodExtensionMap(f, q).eval_refined(Vec3(0.2, 0.1, 0.3), &used);
  CHECK(used >= 64);
  CHECK(d.value.allFinite());
}

TEST_CASE("vertical part is positive and tends to f") {
  const BoundaryMap f = BoundaryMap::radial_power(2);
  const GoodExtensionMap psi(f, QuadratureSpec{});
  const Vec2 x(0.6, -0.3);
  double prev = 1e9;
  for (double t : {0.5, 0.1, 0.02, 0.004}) {
    const Vec3 v = psi.eval(Vec3(x.x(), x.y(), t));
    CHECK(v.z() > 0);
    const double gap = (v.head<2>() - f.eval(x)).norm();
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 1e-4);
}
