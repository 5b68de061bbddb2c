#pragma once

// Harmonic map heat flow on truncated grid domains with Dirichlet data,
// explicit Jacobi updates along geodesics of the target.

#include "hypharm/boundary.hpp"
#include "hypharm/calculus.hpp"
#include "hypharm/core.hpp"
#include "hypharm/extension.hpp"
#include "hypharm/geometry.hpp"

#include <fmt/format.h>

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace hypharm {

enum class NodeKind : std::int8_t { outside = -1, interior = 0, boundary = 1 };

// Uniform Cartesian grid over a box (half-space chart) or a ball of radius
// r < 1 (ball chart). Boundary nodes are the in-domain nodes with a missing
// axis neighbour.
class GridDomain {
 public:
  static GridDomain ball(double r, int n) {
    if (!(r > 0.0 && r < 1.0)) throw domain_error("ball grid radius must lie in (0, 1)");
    if (n < 3) throw domain_error("ball grid needs at least 3 nodes per axis");
    GridDomain g;
    g.chart_ = Chart::ball;
    g.radius_ = r;
    g.dims_ = {n, n, n};
    g.origin_ = Vec3::Constant(-r);
    g.spacing_ = Vec3::Constant(2.0 * r / (n - 1));
    g.classify();
    return g;
  }

  // [x0, x1] x [y0, y1] x [t0, t1] with t0 > 0.
  static GridDomain halfspace_box(const Vec3& lo, const Vec3& hi, std::array<int, 3> dims) {
    if (!(lo.z() > 0.0)) throw domain_error("half-space grid needs t_min > 0");
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 3) throw domain_error("half-space grid needs at least 3 nodes per axis");
      if (!(hi[a] > lo[a])) throw domain_error("half-space grid box is empty");
    }
    GridDomain g;
    g.chart_ = Chart::halfspace;
    g.dims_ = dims;
    g.origin_ = lo;
    for (int a = 0; a < 3; ++a) g.spacing_[a] = (hi[a] - lo[a]) / (dims[a] - 1);
    g.classify();
    return g;
  }

  // Rebuild from stored metadata without recomputing the spacing.
  static GridDomain from_metadata(Chart c, std::array<int, 3> dims, const Vec3& origin, const Vec3& spacing,
                                  double radius) {
    GridDomain g = c == Chart::ball ? ball(radius, dims[0])
                                    : halfspace_box(origin, origin + Vec3::Ones(), dims);
    g.dims_ = dims;
    g.origin_ = origin;
    g.spacing_ = spacing;
    g.classify();
    return g;
  }

  Chart chart() const { return chart_; }
  double radius() const { return radius_; }
  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& origin() const { return origin_; }
  const Vec3& spacing() const { return spacing_; }
  int size() const { return dims_[0] * dims_[1] * dims_[2]; }

  int index(int i, int j, int k) const { return (k * dims_[1] + j) * dims_[0] + i; }
  std::array<int, 3> ijk(int idx) const {
    return {idx % dims_[0], (idx / dims_[0]) % dims_[1], idx / (dims_[0] * dims_[1])};
  }
  Vec3 coords(int i, int j, int k) const {
    return origin_ + Vec3(i * spacing_.x(), j * spacing_.y(), k * spacing_.z());
  }
  Vec3 coords(int idx) const {
    const auto c = ijk(idx);
    return coords(c[0], c[1], c[2]);
  }
  NodeKind kind(int idx) const { return kinds_[idx]; }
  bool in_domain(int idx) const { return kinds_[idx] != NodeKind::outside; }

  // Neighbour along axis a at offset s, or -1 outside the array.
  int neighbour(int idx, int a, int s) const {
    auto c = ijk(idx);
    c[a] += s;
    if (c[a] < 0 || c[a] >= dims_[a]) return -1;
    return index(c[0], c[1], c[2]);
  }

  const std::vector<int>& interior_nodes() const { return interior_; }
  const std::vector<int>& boundary_nodes() const { return boundary_; }

  // Smallest hyperbolic spacing over interior nodes.
  double min_hyperbolic_spacing(const MetricPreset& m) const {
    double best = std::numeric_limits<double>::infinity();
    const double h = spacing_.minCoeff();
    for (int idx : interior_) best = std::min(best, m.density(chart_, coords(idx)) * h);
    return best;
  }

  std::string describe() const {
    if (chart_ == Chart::ball) return fmt::format("ball r={} n={}", radius_, dims_[0]);
    const Vec3 hi = origin_ + Vec3((dims_[0] - 1) * spacing_.x(), (dims_[1] - 1) * spacing_.y(),
                                   (dims_[2] - 1) * spacing_.z());
    return fmt::format("halfspace box [{}, {}]x[{}, {}]x[{}, {}] n={}x{}x{}", origin_.x(), hi.x(), origin_.y(), hi.y(),
                       origin_.z(), hi.z(), dims_[0], dims_[1], dims_[2]);
  }

 private:
  bool inside(const Vec3& p) const {
    if (chart_ == Chart::ball) return p.norm() <= radius_ * (1.0 + 1e-12);
    return true;
  }

  void classify() {
    kinds_.assign(size(), NodeKind::outside);
    for (int idx = 0; idx < size(); ++idx)
      if (inside(coords(idx))) kinds_[idx] = NodeKind::interior;
    for (int idx = 0; idx < size(); ++idx) {
      if (kinds_[idx] == NodeKind::outside) continue;
      bool full = true;
      for (int a = 0; a < 3 && full; ++a)
        for (int s : {-1, 1}) {
          const int nb = neighbour(idx, a, s);
          if (nb < 0 || kinds_[nb] == NodeKind::outside) full = false;
        }
      if (!full) kinds_[idx] = NodeKind::boundary;
    }
    interior_.clear();
    boundary_.clear();
    for (int idx = 0; idx < size(); ++idx) {
      if (kinds_[idx] == NodeKind::interior) interior_.push_back(idx);
      if (kinds_[idx] == NodeKind::boundary) boundary_.push_back(idx);
    }
  }

  Chart chart_ = Chart::ball;
  double radius_ = 0.0;
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 origin_ = Vec3::Zero();
  Vec3 spacing_ = Vec3::Ones();
  std::vector<NodeKind> kinds_;
  std::vector<int> interior_, boundary_;
};

// Target points at every in-domain node; boundary values stay frozen.
struct MapField {
  GridDomain grid;
  Chart target = Chart::ball;
  MetricPreset preset = MetricPreset::standard();
  std::vector<Vec3> values;
};

// Discrete tension operator.
//   fd4: fourth-order central differences of the chart expression inserted
//        in the conformal tension formula (second order next to the
//        boundary); exact for maps that are affine in chart coordinates.
//   fd2: second-order version of the same.
//   geodesic: sum of weighted logarithms to the six neighbours divided by
//        the node volume; the exact gradient of discrete_energy.
enum class Stencil { fd4, fd2, geodesic };

inline std::string_view stencil_name(Stencil s) {
  switch (s) {
    case Stencil::fd4: return "fd4";
    case Stencil::fd2: return "fd2";
    default: return "geodesic";
  }
}

inline Stencil parse_stencil(std::string_view s) {
  if (s == "fd4") return Stencil::fd4;
  if (s == "fd2") return Stencil::fd2;
  if (s == "geodesic") return Stencil::geodesic;
  throw config_error("unknown stencil '" + std::string(s) + "'");
}

struct FlowOptions {
  Stencil stencil = Stencil::fd4;
  // Delta s = cfl * (smallest hyperbolic spacing)^2.
  double cfl = 0.1;
  int max_rejections = 20;
};

// Explicit stability limit of the coefficient in front of h_hyp^2.
inline double stability_limit(Stencil s) { return s == Stencil::fd4 ? 0.125 : 1.0 / 6.0; }

inline double default_time_step(const MapField& f, const FlowOptions& o) {
  const double h = f.grid.min_hyperbolic_spacing(f.preset);
  return o.cfl * h * h;
}

namespace detail {

inline Vec3 node_tension(const MapField& f, int idx, Stencil st) {
  const GridDomain& g = f.grid;
  const Vec3 x = g.coords(idx);
  const Vec3& v = f.values[idx];
  if (st == Stencil::geodesic) {
    const MetricPreset& m = f.preset;
    const Vec3 h = g.spacing();
    Vec3 acc = Vec3::Zero();
    for (int a = 0; a < 3; ++a) {
      const double face = h[(a + 1) % 3] * h[(a + 2) % 3] / h[a];
      for (int s : {-1, 1}) {
        const int nb = g.neighbour(idx, a, s);
        Vec3 mid = x;
        mid[a] += 0.5 * s * h[a];
        acc += m.density(g.chart(), mid) * face * log_map(f.target, v, f.values[nb]);
      }
    }
    const double lam = m.density(g.chart(), x);
    return acc / (lam * lam * lam * h.prod());
  }
  Jet jet;
  jet.value = v;
  for (int a = 0; a < 3; ++a) {
    const double h = g.spacing()[a];
    const Vec3& p1 = f.values[g.neighbour(idx, a, 1)];
    const Vec3& m1 = f.values[g.neighbour(idx, a, -1)];
    const int ip2 = st == Stencil::fd4 ? g.neighbour(idx, a, 2) : -1;
    const int im2 = st == Stencil::fd4 ? g.neighbour(idx, a, -2) : -1;
    if (ip2 >= 0 && im2 >= 0 && g.in_domain(ip2) && g.in_domain(im2)) {
      const Vec3& p2 = f.values[ip2];
      const Vec3& m2 = f.values[im2];
      jet.jacobian.col(a) = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
      jet.laplacian += (-p2 + 16.0 * p1 - 30.0 * v + 16.0 * m1 - m2) / (12.0 * h * h);
    } else {
      jet.jacobian.col(a) = (p1 - m1) / (2.0 * h);
      jet.laplacian += (p1 - 2.0 * v + m1) / (h * h);
    }
  }
  return tension_from_jet(f.preset, g.chart(), f.target, x, jet).vector.components;
}

}  // namespace detail

// Discrete tension (chart components in the target) at every interior node;
// zero elsewhere.
inline std::vector<Vec3> discrete_tension(const MapField& f, Stencil st) {
  std::vector<Vec3> tau(f.values.size(), Vec3::Zero());
  for (int idx : f.grid.interior_nodes()) tau[idx] = detail::node_tension(f, idx, st);
  return tau;
}

inline double sup_tension(const MapField& f, const std::vector<Vec3>& tau) {
  double s = 0.0;
  for (int idx : f.grid.interior_nodes()) {
    const double n = f.preset.density(f.target, f.values[idx]) * tau[idx].norm();
    if (!std::isfinite(n)) return std::numeric_limits<double>::infinity();
    s = std::max(s, n);
  }
  return s;
}

inline double sup_tension(const MapField& f, Stencil st) { return sup_tension(f, discrete_tension(f, st)); }

// Sup tension split between interior nodes within `layers` grid steps of the
// ball sphere and the rest. Ball grids only.
struct TensionSplit {
  double core = 0.0;
  double layer = 0.0;
  int core_nodes = 0;
  int layer_nodes = 0;
};

inline TensionSplit tension_split(const MapField& f, Stencil st, int layers = 2) {
  if (f.grid.chart() != Chart::ball) throw domain_error("tension_split needs a ball grid");
  const std::vector<Vec3> tau = discrete_tension(f, st);
  const double cut = f.grid.radius() - layers * f.grid.spacing().maxCoeff();
  TensionSplit s;
  for (int idx : f.grid.interior_nodes()) {
    const double n = f.preset.density(f.target, f.values[idx]) * tau[idx].norm();
    if (f.grid.coords(idx).norm() > cut) {
      s.layer = std::max(s.layer, n);
      ++s.layer_nodes;
    } else {
      s.core = std::max(s.core, n);
      ++s.core_nodes;
    }
  }
  return s;
}

// Sum over grid edges inside the domain of (1/2) w d^2 with
// w = density(midpoint) * (face area / edge length).
inline double discrete_energy(const MapField& f) {
  const GridDomain& g = f.grid;
  const Vec3 h = g.spacing();
  double e = 0.0;
  for (int idx = 0; idx < g.size(); ++idx) {
    if (!g.in_domain(idx)) continue;
    const Vec3 x = g.coords(idx);
    for (int a = 0; a < 3; ++a) {
      const int nb = g.neighbour(idx, a, 1);
      if (nb < 0 || !g.in_domain(nb)) continue;
      Vec3 mid = x;
      mid[a] += 0.5 * h[a];
      const double w = f.preset.density(g.chart(), mid) * h[(a + 1) % 3] * h[(a + 2) % 3] / h[a];
      const double d = distance(f.preset, {f.target, f.values[idx]}, {f.target, f.values[nb]});
      e += 0.5 * w * d * d;
    }
  }
  return e;
}

// Field of F's values at the grid nodes; F maps grid chart to target chart.
inline MapField sample_field(const InteriorMap& F, const GridDomain& grid, const MetricPreset& m, Chart target) {
  MapField f{grid, target, m, std::vector<Vec3>(grid.size(), Vec3::Zero())};
  const InteriorMap G = F.in_charts(grid.chart(), target);
  for (int idx = 0; idx < grid.size(); ++idx) {
    if (!grid.in_domain(idx)) continue;
    try {
      f.values[idx] = G(grid.coords(idx));
    } catch (const std::exception& e) {
      const auto c = grid.ijk(idx);
      throw integration_error(fmt::format("field initialization failed at node ({}, {}, {}): {}", c[0], c[1], c[2],
                                          e.what()));
    }
  }
  return f;
}

// Good extension of f at every node (conjugated into the grid's chart).
inline MapField init_field(const BoundaryMap& f, const GridDomain& grid, const QuadratureSpec& q,
                           const MetricPreset& m = MetricPreset::standard()) {
  return sample_field(InteriorMap::good_extension(f, q), grid, m, grid.chart());
}

struct StepResult {
  MapField field;
  double sup_tension = 0.0;
  double step = 0.0;
  int rejections = 0;
};

// One Jacobi step F'(x) = exp_{F(x)}(ds tau(x)) at interior nodes; ds is
// halved while a node would leave the model.
inline StepResult flow_step(const MapField& f, double ds, const FlowOptions& o = {},
                            const std::vector<Vec3>* precomputed = nullptr) {
  if (!(ds >= 0.0) || !std::isfinite(ds)) throw domain_error("flow_step: time step must be finite and >= 0");
  StepResult r{f, 0.0, ds, 0};
  if (ds == 0.0) {
    r.sup_tension = sup_tension(f, o.stencil);
    return r;
  }
  const std::vector<Vec3> tau = precomputed ? *precomputed : discrete_tension(f, o.stencil);
  while (true) {
    bool ok = true;
    for (int idx : f.grid.interior_nodes()) {
      const Vec3 next = exp_map(f.target, f.values[idx], r.step * tau[idx]);
      if (!inside_model(f.target, next)) {
        ok = false;
        break;
      }
      r.field.values[idx] = next;
    }
    if (ok) break;
    if (++r.rejections > o.max_rejections) throw domain_error("flow_step: step rejected too many times");
    r.step *= 0.5;
  }
  r.sup_tension = sup_tension(r.field, o.stencil);
  return r;
}

struct FlowReport {
  int iterations = 0;
  std::vector<double> history;  // sup-tension after each step
  double initial_tension = 0.0;
  double final_tension = 0.0;
  double step = 0.0;
  bool converged = false;
  int rejections = 0;
  Stencil stencil = Stencil::fd4;
};

struct FlowResult {
  MapField field;
  FlowReport report;
};

inline FlowResult run_flow(const MapField& start, double tol, int max_iter, const FlowOptions& o = {},
                           double ds = 0.0) {
  if (!(tol > 0.0)) throw domain_error("run_flow: tolerance must be positive");
  if (o.cfl > stability_limit(o.stencil)) {
    throw config_error(fmt::format("cfl {} exceeds the explicit stability limit {} of the {} stencil", o.cfl,
                                   stability_limit(o.stencil), stencil_name(o.stencil)));
  }
  FlowResult out{start, {}};
  FlowReport& rep = out.report;
  rep.stencil = o.stencil;
  rep.step = ds > 0.0 ? ds : default_time_step(start, o);
  std::vector<Vec3> tau = discrete_tension(start, o.stencil);
  rep.initial_tension = rep.final_tension = sup_tension(start, tau);
  if (rep.initial_tension < tol) {
    rep.converged = true;
    return out;
  }
  for (int it = 0; it < max_iter; ++it) {
    StepResult s = flow_step(out.field, rep.step, o, &tau);
    rep.rejections += s.rejections;
    rep.step = s.step;
    out.field = std::move(s.field);
    tau = discrete_tension(out.field, o.stencil);
    rep.final_tension = sup_tension(out.field, tau);
    rep.history.push_back(rep.final_tension);
    rep.iterations = it + 1;
    if (!std::isfinite(rep.final_tension)) break;
    if (rep.final_tension < tol) {
      rep.converged = true;
      break;
    }
  }
  return out;
}

// Numerical H_r(f): good extension on the ball grid of radius r, relaxed by
// the heat flow with the outer nodes held fixed.
inline FlowResult solve_restricted(const BoundaryMap& f, double r, int resolution, double tol, int max_iter,
                                   const QuadratureSpec& q = {}, const MetricPreset& m = MetricPreset::standard(),
                                   const FlowOptions& o = {}) {
  const GridDomain grid = GridDomain::ball(r, resolution);
  return run_flow(init_field(f, grid, q, m), tol, max_iter, o);
}

// Trilinear interpolation of target chart coordinates; exact at nodes.
inline InteriorMap grid_field_map(const MapField& f) {
  auto field = std::make_shared<MapField>(f);
  InteriorMap F;
  F.name = "grid field";
  F.kind = MapKind::grid_field;
  F.source = f.grid.chart();
  F.target = f.target;
  F.approximate = true;
  F.fn = [field](const Vec3& p) -> Vec3 {
    const GridDomain& g = field->grid;
    std::array<int, 3> base{};
    Vec3 frac;
    for (int a = 0; a < 3; ++a) {
      double u = (p[a] - g.origin()[a]) / g.spacing()[a];
      if (std::abs(u - std::round(u)) < 1e-9) u = std::round(u);
      int i = static_cast<int>(std::floor(u));
      if (i == g.dims()[a] - 1 && u - i < 1e-9) i -= 1;
      if (i < 0 && u > -1e-9) i = 0;
      if (i < 0 || i + 1 >= g.dims()[a]) throw domain_error("grid field: point outside the grid");
      base[a] = i;
      frac[a] = std::clamp(u - i, 0.0, 1.0);
    }
    Vec3 acc = Vec3::Zero();
    for (int c = 0; c < 8; ++c) {
      double w = 1.0;
      std::array<int, 3> n = base;
      for (int a = 0; a < 3; ++a) {
        const int bit = (c >> a) & 1;
        n[a] += bit;
        w *= bit ? frac[a] : 1.0 - frac[a];
      }
      if (w == 0.0) continue;
      const int idx = g.index(n[0], n[1], n[2]);
      if (!g.in_domain(idx)) throw domain_error("grid field: interpolation cell leaves the domain");
      acc += w * field->values[idx];
    }
    return acc;
  };
  return F;
}

// ---- checkpoints -----------------------------------------------------------

inline void write_checkpoint(std::ostream& os, const MapField& f, const std::string& extra_header = {}) {
  const GridDomain& g = f.grid;
  os << "# hypharm checkpoint v1\n";
  os << fmt::format("# grid_chart {}\n", chart_name(g.chart()));
  os << fmt::format("# target_chart {}\n", chart_name(f.target));
  os << fmt::format("# preset {}\n", f.preset.name());
  os << fmt::format("# dims {} {} {}\n", g.dims()[0], g.dims()[1], g.dims()[2]);
  os << fmt::format("# origin {} {} {}\n", g.origin().x(), g.origin().y(), g.origin().z());
  os << fmt::format("# spacing {} {} {}\n", g.spacing().x(), g.spacing().y(), g.spacing().z());
  os << fmt::format("# radius {}\n", g.radius());
  os << extra_header;
  os << "# columns i,j,k,y1,y2,y3\n";
  for (int idx = 0; idx < g.size(); ++idx) {
    if (!g.in_domain(idx)) continue;
    const auto c = g.ijk(idx);
    const Vec3& v = f.values[idx];
    os << fmt::format("{},{},{},{},{},{}\n", c[0], c[1], c[2], v.x(), v.y(), v.z());
  }
}

namespace detail {

inline double parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc()) throw config_error("checkpoint: malformed number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace detail

inline MapField read_checkpoint(std::istream& is) {
  std::string line;
  std::string grid_chart, target_chart, preset;
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin = Vec3::Zero(), spacing = Vec3::Ones();
  double radius = 0.0;
  std::vector<std::array<double, 6>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      ss >> key;
      auto three = [&](Vec3& v) {
        std::string a, b, c;
        ss >> a >> b >> c;
        v = Vec3(detail::parse_double(a), detail::parse_double(b), detail::parse_double(c));
      };
      if (key == "grid_chart") ss >> grid_chart;
      else if (key == "target_chart") ss >> target_chart;
      else if (key == "preset") ss >> preset;
      else if (key == "dims") ss >> dims[0] >> dims[1] >> dims[2];
      else if (key == "origin") three(origin);
      else if (key == "spacing") three(spacing);
      else if (key == "radius") {
        std::string r;
        ss >> r;
        radius = detail::parse_double(r);
      }
      continue;
    }
    const auto parts = detail::split(line, ',');
    if (parts.size() != 6) throw config_error("checkpoint: expected 6 columns in '" + line + "'");
    std::array<double, 6> row{};
    for (int c = 0; c < 6; ++c) row[c] = detail::parse_double(parts[c]);
    rows.push_back(row);
  }
  if (grid_chart.empty() || dims[0] == 0) throw config_error("checkpoint: missing grid header");
  const GridDomain g = GridDomain::from_metadata(grid_chart == "ball" ? Chart::ball : Chart::halfspace, dims,
                                                 origin, spacing, radius);
  MapField f{g, target_chart == "ball" ? Chart::ball : Chart::halfspace, parse_preset(preset),
             std::vector<Vec3>(g.size(), Vec3::Zero())};
  for (const auto& row : rows) {
    const int idx = g.index(static_cast<int>(row[0]), static_cast<int>(row[1]), static_cast<int>(row[2]));
    f.values[idx] = Vec3(row[3], row[4], row[5]);
  }
  return f;
}

inline void save_checkpoint(const std::string& path, const MapField& f, const std::string& extra_header = {}) {
  std::ofstream os(path);
  if (!os) throw config_error("cannot write checkpoint '" + path + "'");
  write_checkpoint(os, f, extra_header);
}

inline MapField load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot read checkpoint '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace hypharm
