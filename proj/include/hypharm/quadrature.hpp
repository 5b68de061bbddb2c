#pragma once

// One-dimensional Gauss rules and point sets on the unit sphere.

#include "hypharm/core.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypharm {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre on [a, b]. Open: the endpoints are never sampled.
inline Rule1D gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  Rule1D r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
    }
    dp = n * (x * p0 - p1) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = mid - half * x;
    r.nodes[n - 1 - i] = mid + half * x;
    r.weights[i] = r.weights[n - 1 - i] = half * w;
  }
  return r;
}

namespace detail {

// Physicists' Gauss-Hermite rule for the weight exp(-x^2), by Newton
// iteration on orthonormal Hermite functions.
inline Rule1D compute_gauss_hermite(int n) {
  Rule1D r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double pim4 = 0.7511255444649425;  // pi^{-1/4}
  double z = 0.0;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * r.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * r.nodes[1];
    } else {
      z = 2.0 * z - r.nodes[i - 2];
    }
    double pp = 0.0;
    for (int it = 0; it < 200; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    double p1 = pim4, p2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
    }
    pp = std::sqrt(2.0 * n) * p2;
    r.nodes[i] = z;
    r.nodes[n - 1 - i] = -z;
    r.weights[i] = r.weights[n - 1 - i] = 2.0 / (pp * pp);
  }
  return r;
}

}  // namespace detail

// Cached Gauss-Hermite rule for the weight exp(-x^2); safe to call from
// several threads.
inline const Rule1D& gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Rule1D>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Rule1D>(detail::compute_gauss_hermite(n));
  return *slot;
}

enum class SphereScheme { fibonacci, random };

inline std::string scheme_name(SphereScheme s) { return s == SphereScheme::fibonacci ? "fibonacci" : "random"; }

// Equal-weight node set on S^2 representing the probability measure sigma.
class SphereSampler {
 public:
  static SphereSampler fibonacci(int count) {
    if (count < 1) throw std::invalid_argument("SphereSampler: count must be positive");
    SphereSampler s(SphereScheme::fibonacci, count, 0);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - (2.0 * i + 1.0) / count;
      const double rad = std::sqrt((1.0 - z) * (1.0 + z));
      const double phi = golden * i;
      s.nodes_.emplace_back(rad * std::cos(phi), rad * std::sin(phi), z);
    }
    return s;
  }

  static SphereSampler random(int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("SphereSampler: count must be positive");
    SphereSampler s(SphereScheme::random, count, seed);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    while (static_cast<int>(s.nodes_.size()) < count) {
      Vec3 v(normal(gen), normal(gen), normal(gen));
      const double n = v.norm();
      if (n > 1e-12) s.nodes_.push_back(v / n);
    }
    return s;
  }

  SphereScheme scheme() const { return scheme_; }
  int count() const { return count_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  double weight() const { return 1.0 / count_; }

  std::string describe() const {
    std::string d = scheme_name(scheme_) + "(" + std::to_string(count_);
    if (scheme_ == SphereScheme::random) d += ", seed=" + std::to_string(seed_);
    return d + ")";
  }

 private:
  SphereSampler(SphereScheme sc, int count, std::uint64_t seed) : scheme_(sc), count_(count), seed_(seed) {
    nodes_.reserve(count);
  }

  SphereScheme scheme_;
  int count_;
  std::uint64_t seed_;
  std::vector<Vec3> nodes_;
};

}  // namespace hypharm
