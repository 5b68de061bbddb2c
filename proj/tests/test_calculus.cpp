#include <catch_amalgamated.hpp>

#include "hypharm/calculus.hpp"

#include <random>

using namespace hypharm;
using Catch::Approx;

namespace {

const LinearMap kDiag{2, 0, 0, 1, Vec2::Zero()};
const LinearMap kShear{1, 0.7, 0, 1, Vec2::Zero()};

std::vector<Vec3> sample_points() {
  return {Vec3(0, 0, 1), Vec3(0.3, -0.2, 0.4), Vec3(-1.5, 2, 3), Vec3(0.1, 0.1, 0.05)};
}

// Energy from the coordinate formula (1/2) g^{ij} h_ab dF^a/dx^i dF^b/dx^j.
double coordinate_energy(const MetricPreset& m, const InteriorMap& F, const Vec3& p) {
  const Jet j = compute_jet(F, p, FdOptions{});
  const double gs = std::pow(m.density(F.source, p), 2), ht = std::pow(m.density(F.target, j.value), 2);
  double e = 0;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a) e += ht / gs * j.jacobian(a, i) * j.jacobian(a, i);
  return 0.5 * e;
}

}  // namespace

TEST_CASE("energy density") {
  for (auto m : {MetricPreset::standard(), MetricPreset::paper_ball()}) {
    for (const Vec3& p : sample_points()) {
      CHECK(interior_energy(m, InteriorMap::identity(Chart::halfspace), p) == Approx(1.5).epsilon(1e-9));
      for (const auto& L : {kDiag, kShear}) {
        const double e = interior_energy(m, InteriorMap::linear_harmonic(L), p);
        CHECK(e == Approx(1.5).margin(1e-6));
        CHECK(e > 1.0);
      }
    }
    CHECK(interior_energy(m, InteriorMap::identity(Chart::ball), Vec3(0.2, 0.5, -0.1)) == Approx(1.5).epsilon(1e-9));
  }
  const auto m = MetricPreset::standard();
  const auto F = InteriorMap::isometry(BallTranslation{Vec3(0.3, -0.2, 0.4)}, Chart::ball);
  const Vec3 p(0.1, 0.5, -0.3);
  const Jet j = compute_jet(F, p, FdOptions{});
  const Eigen::JacobiSVD<Mat3> svd(frame_matrix(m, F, j, p));
  CHECK(0.5 * svd.singularValues().squaredNorm() == Approx(coordinate_energy(m, F, p)).epsilon(1e-9));
  const auto G = InteriorMap::vertical_scaling(2.0);
  const Vec3 z(0.2, 0.3, 0.7);
  CHECK(interior_energy(m, G, z) == Approx(coordinate_energy(m, G, z)).epsilon(1e-9));
}

TEST_CASE("tension field") {
  const auto m = MetricPreset::standard();
  for (const Vec3& p : sample_points()) {
    CHECK(tension(m, InteriorMap::identity(Chart::halfspace), p).norm < 1e-8);
    CHECK(tension(m, InteriorMap::linear_harmonic(kDiag), p).norm < 1e-6);
    CHECK(tension(m, InteriorMap::linear_harmonic(kShear), p).norm < 1e-6);
    // (x, 2t): |tau| = 2 |1 - lambda^2| / lambda^2 = 1.5 under curvature -1.
    CHECK(tension(m, InteriorMap::vertical_scaling(2.0), p).norm == Approx(1.5).epsilon(1e-8));
    CHECK(tension(MetricPreset::paper_ball(), InteriorMap::vertical_scaling(2.0), p).norm ==
          Approx(3.0).epsilon(1e-8));
  }
  const auto iso = InteriorMap::isometry(BallTranslation{Vec3(0.3, -0.2, 0.4)}, Chart::ball);
  CHECK(tension(m, iso, Vec3(0.1, 0.5, -0.3)).norm < 1e-8);
  const auto mixed = InteriorMap::isometry(
      IsometryElement::Composition{CayleyTransform{}, BallTranslation{Vec3(0.5, 0.1, 0)}, CayleyTransform{}},
      Chart::halfspace);
  CHECK(tension(m, mixed, Vec3(0.2, 0.1, 0.8)).norm < 1e-8);
  // The linear extension is harmonic in the ball chart too.
  const auto hb = InteriorMap::linear_harmonic(kDiag).in_charts(Chart::ball, Chart::ball);
  CHECK(tension(m, hb, Vec3(0.2, -0.1, 0.3)).norm < 1e-6);
}

TEST_CASE("finite-difference tension converges at second order") {
  // Without extrapolation the truncation error of a non-polynomial harmonic
  // map scales like h^2.
  const auto m = MetricPreset::standard();
  const auto F = InteriorMap::isometry(BallTranslation{Vec3(0.4, -0.3, 0.2)}, Chart::ball);
  const Vec3 p(0.2, 0.3, -0.1);
  std::vector<double> lh, le;
  for (double h : {0.08, 0.04, 0.02, 0.01}) {
    lh.push_back(std::log(h));
    le.push_back(std::log(tension(m, F, p, FdOptions{h, false}).norm));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = lh.size();
  for (std::size_t i = 0; i < lh.size(); ++i) {
    sx += lh[i];
    sy += le[i];
    sxx += lh[i] * lh[i];
    sxy += lh[i] * le[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(std::abs(slope - 2.0) < 0.3);
  CHECK(tension(m, F, p, FdOptions{0.01, true}).norm < tension(m, F, p, FdOptions{0.01, false}).norm);
}

TEST_CASE("scalar Laplacian") {
  CHECK(std::abs(laplacian_scalar(MetricPreset::standard(), Chart::halfspace, [](const Vec3&) { return 4.0; },
                                  Vec3(0, 0, 1))) < 1e-9);
  CHECK(laplacian_scalar(MetricPreset::standard(), Chart::halfspace, [](const Vec3& z) { return std::log(z.z()); },
                         Vec3(0.4, 1, 0.3)) == Approx(-2.0).epsilon(1e-8));
  CHECK(laplacian_scalar(MetricPreset::paper_ball(), Chart::ball, [](const Vec3& x) { return x.squaredNorm(); },
                         Vec3(0.3, 0.4, 0)) == Approx(4.125).epsilon(1e-9));
  // Delta x_1 = 2 (1 - rho^2) x_1 under PAPER_BALL.
  const Vec3 x(0.2, -0.4, 0.5);
  CHECK(laplacian_scalar(MetricPreset::paper_ball(), Chart::ball, [](const Vec3& y) { return y.x(); }, x) ==
        Approx(2 * (1 - x.squaredNorm()) * x.x()).epsilon(1e-8));
}

TEST_CASE("interior distortion") {
  const auto m = MetricPreset::standard();
  for (const Vec3& p : sample_points()) {
    CHECK(interior_distortion(m, InteriorMap::identity(Chart::halfspace), p) == Approx(1.0).epsilon(1e-9));
    CHECK(interior_distortion(m, InteriorMap::linear_harmonic(kDiag), p) == Approx(2.0).epsilon(1e-9));
    const double k = distortion_boundary(BoundaryMap(kShear), Vec2::Zero());
    CHECK(interior_distortion(m, InteriorMap::linear_harmonic(kShear), p) == Approx(k).epsilon(1e-9));
  }
  const auto flat = InteriorMap::closed_form("flat", Chart::halfspace, Chart::halfspace,
                                             [](const Vec3& z) { return Vec3(z.x(), 0.0, 1.0 + z.z() * 0); });
  CHECK(std::isinf(interior_distortion(m, flat, Vec3(0, 0, 1))));
  // Small heights approach the boundary distortion.
  const auto psi = InteriorMap::good_extension(BoundaryMap::radial_power(2));
  const double near = interior_distortion(m, psi, Vec3(0.7, 0.2, 0.005));
  const double far = interior_distortion(m, psi, Vec3(0.7, 0.2, 0.5));
  CHECK(std::abs(near - 2.0) < std::abs(far - 2.0));
  CHECK(std::abs(near - 2.0) < 0.05);
}

TEST_CASE("distance field and frame coefficients") {
  const auto m = MetricPreset::standard();
  const auto id = InteriorMap::identity(Chart::halfspace);
  const auto g2 = InteriorMap::vertical_scaling(2.0);
  for (const Vec3& p : sample_points()) {
    CHECK(distance_field(m, id, id, p) == 0.0);
    CHECK(distance_field(m, id, g2, p) == Approx(std::log(2.0)).epsilon(1e-13));
    CHECK(distance_field(m, g2, id, p) == distance_field(m, id, g2, p));
    const auto fc = frame_coefficients(m, id, g2, p);
    CHECK(fc.alpha_planar() == Approx(2.0).epsilon(1e-9));
    CHECK(fc.beta_planar() == Approx(0.5).epsilon(1e-9));
  }
  // G is F moved along a geodesic: third columns are opposite.
  const auto shifted = id.conjugated(HalfSpaceSimilarity{1.5, 0, Vec2::Zero()}, IsometryElement::identity());
  const Vec3 p(0, 0, 1);
  const auto fc = frame_coefficients(m, id, shifted, p);
  CHECK(fc.alpha(2, 2) == Approx(-fc.beta(2, 2)).epsilon(1e-9));
  CHECK_THROWS_AS(frame_coefficients(m, id, id, p), degenerate_error);

  // Rotating v1, v2 in their plane leaves the planar sums unchanged.
  const auto hl = InteriorMap::linear_harmonic(kShear);
  const Vec3 z(0.3, 0.2, 0.6);
  const auto base = frame_coefficients(m, hl, g2, z);
  for (double a : {0.3, 1.2, 2.9}) {
    Mat3 rot = Mat3::Identity();
    rot.topLeftCorner<2, 2>() << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const Mat3 alpha = base.alpha * rot;
    CHECK(std::abs(alpha.leftCols<2>().squaredNorm() - base.alpha_planar()) < 1e-12);
  }
}

TEST_CASE("comparison inequality") {
  const auto m = MetricPreset::standard();
  const auto id = InteriorMap::identity(Chart::halfspace);
  const auto g2 = InteriorMap::vertical_scaling(2.0);
  for (const Vec3& p : sample_points()) {
    const auto r = comparison_check(m, id, g2, p, 0.1);
    CHECK(std::abs(r.lhs) < 1e-6);
    CHECK(r.rhs_1 < 0);
    CHECK(r.margin_1() >= 0);
    CHECK(r.margin_full() >= -1e-6);
  }
  CHECK_THROWS_AS(comparison_check(m, id, id, Vec3(0, 0, 1), 0.1), degenerate_error);
  CHECK_THROWS_AS(comparison_check(MetricPreset::paper_ball(), id, g2, Vec3(0, 0, 1), 0.1), domain_error);

  const auto h1 = InteriorMap::linear_harmonic(kDiag);
  const auto h2 = InteriorMap::linear_harmonic(kShear);
  double worst = 1e9;
  for (double x : {-1.0, -0.3, 0.4, 1.2})
    for (double y : {-0.8, 0.1, 0.5, 1.5})
      for (double t : {0.2, 0.6, 1.3, 3.0}) {
        const auto r = comparison_check(m, h1, h2, Vec3(x, y, t), 0.1);
        worst = std::min(worst, r.margin_full());
      }
  CHECK(worst >= -1e-6);
}
