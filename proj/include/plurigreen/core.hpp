#pragma once
// Riemann-sphere geometry as two affine charts, the Fubini-Study reference
// form, square per-chart sample grids, and chart-synchronized scalar fields.
//
// Conventions used throughout the library:
//   chart 0 holds z = Z1/Z0, chart 1 holds w = Z0/Z1 (so w = 1/z),
//   phi(zeta) = (1/2) log(1 + |zeta|^2) in either chart,
//   rho = Laplace(phi) = 2 / (1 + |zeta|^2)^2, total mass 2*pi,
//   cocycle phi_0(z) - phi_1(1/z) = log|z| exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace plurigreen {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kValueCap = 1e6;  // finite stand-in for +inf inside solvers

// Configuration / input problems (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Numerical failures: divergence, degeneracy, overflow (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double sq(double x) { return x * x; }

inline bool finite(double x) { return std::isfinite(x); }

// ---------------------------------------------------------------------------
// Projective points

// A point of the sphere as homogeneous coordinates [z0 : z1], kept in the
// normalized representative: the component of largest modulus equals 1
// exactly (ties resolved toward z0), which makes equality tests and chart
// selection deterministic.
struct ProjPoint {
  cplx z0{1.0, 0.0};
  cplx z1{0.0, 0.0};

  static ProjPoint make(cplx a, cplx b) {
    if ((a == cplx{} && b == cplx{}) || !finite(std::abs(a)) || !finite(std::abs(b)))
      throw ConfigError("projective point needs finite, not both zero coordinates");
    ProjPoint p{a, b};
    p.normalize();
    return p;
  }
  static ProjPoint from_chart(int chart, cplx zeta) {
    return chart == 0 ? make(1.0, zeta) : make(zeta, 1.0);
  }

  void normalize() {
    if (std::abs(z1) > std::abs(z0)) {
      z0 /= z1;
      z1 = 1.0;
    } else {
      z1 /= z0;
      z0 = 1.0;
    }
  }
  // Chart where the affine coordinate has modulus <= 1 (ties -> chart 0).
  int chart() const { return std::abs(z1) > std::abs(z0) ? 1 : 0; }
  cplx coord(int c) const {
    if (c == 0) {
      if (z0 == cplx{}) throw ConfigError("point at infinity has no chart-0 coordinate");
      return z1 / z0;
    }
    if (z1 == cplx{}) throw ConfigError("origin has no chart-1 coordinate");
    return z0 / z1;
  }
  bool close_to(const ProjPoint& o, double tol = 1e-9) const {
    // Fubini-Study-comparable chordal gauge: |z0 w1 - z1 w0| on normalized reps.
    return std::abs(z0 * o.z1 - z1 * o.z0) <= tol;
  }
};

// chart index + affine coordinate in that chart, |coord| <= 1 guaranteed.
inline std::pair<int, cplx> chart_transition(const ProjPoint& p) {
  int c = p.chart();
  return {c, p.coord(c)};
}

// ---------------------------------------------------------------------------
// Reference form

inline double fs_potential(cplx zeta) { return 0.5 * std::log1p(std::norm(zeta)); }

inline double omega_density(cplx zeta) {
  double s = 1.0 + std::norm(zeta);
  return 2.0 / (s * s);
}

// A Kahler form given by chart potentials and densities.  The density must be
// the Laplacian of the potential in each chart; validate() spot-checks this
// with centered finite differences, and checks the potential cocycle.
struct OmegaSpec {
  std::function<double(cplx)> potential0, potential1;
  std::function<double(cplx)> density0, density1;
  std::string label;

  double potential(int c, cplx zeta) const { return c == 0 ? potential0(zeta) : potential1(zeta); }
  double density(int c, cplx zeta) const { return c == 0 ? density0(zeta) : density1(zeta); }

  static OmegaSpec fubini_study() {
    OmegaSpec w;
    w.potential0 = w.potential1 = [](cplx z) { return fs_potential(z); };
    w.density0 = w.density1 = [](cplx z) { return omega_density(z); };
    w.label = "fubini-study";
    return w;
  }

  struct Validation {
    double max_rel_laplace_err = 0.0;
    double max_cocycle_err = 0.0;
    double min_density = std::numeric_limits<double>::infinity();
  };
  // step: finite-difference step; pass the grid spacing when the potentials
  // are grid-backed interpolants so the stencil lands on nodes.
  Validation validate(const std::vector<std::pair<int, cplx>>& samples, double step) const {
    Validation r;
    for (auto [c, z] : samples) {
      const auto& pot = c == 0 ? potential0 : potential1;
      double lap = (pot(z + step) + pot(z - step) + pot(z + cplx(0, step)) + pot(z - cplx(0, step)) -
                    4.0 * pot(z)) /
                   (step * step);
      double den = density(c, z);
      r.min_density = std::min(r.min_density, den);
      double scale = std::max(1.0, std::abs(den));
      r.max_rel_laplace_err = std::max(r.max_rel_laplace_err, std::abs(lap - den) / scale);
      if (std::abs(z) > 0.25) {  // cocycle only away from the other chart's pole
        double err = std::abs(potential0(z) - potential1(1.0 / z) - std::log(std::abs(z)));
        if (c == 0) r.max_cocycle_err = std::max(r.max_cocycle_err, err);
      }
    }
    return r;
  }
};

// ---------------------------------------------------------------------------
// Grid

// One square node grid [-half_width, half_width]^2 per chart; the annulus
// 1/half_width <= |zeta| <= half_width is covered by both charts and is where
// seam synchronization happens.  Nodes are (n_cells+1)^2 per chart.
struct SphereGrid {
  double half_width = 1.25;
  int n_cells = 400;
  double h = 2.0 * 1.25 / 400;

  SphereGrid() { *this = SphereGrid(1.25, 400); }
  SphereGrid(double hw, int n) : half_width(hw), n_cells(n) {
    if (!(hw >= 1.1 && hw <= 2.0))
      throw ConfigError("grid.half_width must lie in [1.1, 2] so the charts overlap");
    if (n < 8 || n > 4096 || n % 2 != 0)
      throw ConfigError("grid.n_cells must be even and in [8, 4096]");
    h = 2.0 * hw / n;
  }

  int nodes() const { return n_cells + 1; }
  int node_count() const { return nodes() * nodes(); }
  int idx(int ix, int iy) const { return iy * nodes() + ix; }
  cplx node(int ix, int iy) const { return {-half_width + ix * h, -half_width + iy * h}; }
  bool interior(int ix, int iy) const {
    return ix > 0 && iy > 0 && ix < n_cells && iy < n_cells;
  }
  bool ring(int ix, int iy) const { return !interior(ix, iy); }
  // Both charts sample this sphere point iff |zeta| >= 1/half_width.
  bool in_overlap(cplx zeta) const { return std::abs(zeta) >= 1.0 / half_width; }
};

// Partition-of-unity weight of `chart` at its own coordinate zeta; the two
// chart weights of one sphere point sum to 1, and nodes beyond |zeta| =
// half_width get weight 0 (the other chart holds them in its interior).
inline double pou_weight(const SphereGrid& g, cplx zeta) {
  auto psi = [&](double r) {
    double t = (g.half_width - r) / (g.half_width - 1.0 / g.half_width);
    return std::clamp(t, 0.0, 1.0);
  };
  double r = std::abs(zeta);
  double a = psi(r);
  double b = psi(r > 0 ? 1.0 / r : std::numeric_limits<double>::infinity());
  return a + b > 0 ? a / (a + b) : 0.0;
}

// ---------------------------------------------------------------------------
// Fields

struct SeamReport {
  double discrepancy = 0.0;  // max |own - other interpolated| over the overlap
  int overlap_nodes = 0;
};

// A scalar function sampled on both chart grids.  Values may be +-inf where a
// weight is unbounded; arithmetic consumers cap via kValueCap.
struct GridField {
  SphereGrid grid;
  std::array<std::vector<double>, 2> v;

  GridField() : GridField(SphereGrid{}, 0.0) {}
  explicit GridField(const SphereGrid& g, double fill = 0.0) : grid(g) {
    v[0].assign(g.node_count(), fill);
    v[1].assign(g.node_count(), fill);
  }
  // Sample a chart-indexed function.
  GridField(const SphereGrid& g, const std::function<double(int, cplx)>& f) : GridField(g) {
    for (int c = 0; c < 2; ++c)
      for (int iy = 0; iy < g.nodes(); ++iy)
        for (int ix = 0; ix < g.nodes(); ++ix) v[c][g.idx(ix, iy)] = f(c, g.node(ix, iy));
  }

  double& at(int c, int ix, int iy) { return v[c][grid.idx(ix, iy)]; }
  double at(int c, int ix, int iy) const { return v[c][grid.idx(ix, iy)]; }

  // Clamped bilinear interpolation in one chart.  A non-finite corner makes
  // the result +-inf (sign of the offending corner) rather than NaN.
  double interp(int c, cplx zeta) const {
    const auto& g = grid;
    double fx = (zeta.real() + g.half_width) / g.h;
    double fy = (zeta.imag() + g.half_width) / g.h;
    int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, g.n_cells - 1);
    int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, g.n_cells - 1);
    double tx = std::clamp(fx - ix, 0.0, 1.0);
    double ty = std::clamp(fy - iy, 0.0, 1.0);
    double c00 = at(c, ix, iy), c10 = at(c, ix + 1, iy);
    double c01 = at(c, ix, iy + 1), c11 = at(c, ix + 1, iy + 1);
    if (!finite(c00) || !finite(c10) || !finite(c01) || !finite(c11)) {
      double m = std::max(std::max(c00, c10), std::max(c01, c11));
      return m > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    }
    double a = c00 + (c10 - c00) * tx;
    double b = c01 + (c11 - c01) * tx;
    return a + (b - a) * ty;
  }

  // Evaluate at a sphere point through the chart where |coord| <= 1.
  double interp_point(const ProjPoint& p) const {
    auto [c, zeta] = chart_transition(p);
    return interp(c, zeta);
  }

  double value_at_chart_origin(int c) const { return at(c, grid.n_cells / 2, grid.n_cells / 2); }
};

// Five-point Laplacian at an interior node.
inline double laplacian_at(const GridField& f, int c, int ix, int iy) {
  const auto& g = f.grid;
  return (f.at(c, ix - 1, iy) + f.at(c, ix + 1, iy) + f.at(c, ix, iy - 1) + f.at(c, ix, iy + 1) -
          4.0 * f.at(c, ix, iy)) /
         (g.h * g.h);
}

inline double seam_discrepancy(const GridField& f) {
  const auto& g = f.grid;
  double worst = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        cplx zeta = g.node(ix, iy);
        if (!g.in_overlap(zeta)) continue;
        double own = f.at(c, ix, iy);
        double other = f.interp(1 - c, 1.0 / zeta);
        if (finite(own) && finite(other)) worst = std::max(worst, std::abs(own - other));
      }
  return worst;
}

// Reconcile the two charts over the overlap annulus by pointwise minimum of
// the own value and the bilinear interpolation of the other chart (the
// minimum preserves downward envelope iterations).  Reports the discrepancy
// seen before reconciling.
inline std::pair<GridField, SeamReport> sync_seam(const GridField& f) {
  const auto& g = f.grid;
  if (g.half_width <= 1.0) throw ConfigError("sync_seam: overlap annulus is empty");
  GridField out = f;
  SeamReport rep;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        cplx zeta = g.node(ix, iy);
        if (!g.in_overlap(zeta)) continue;
        ++rep.overlap_nodes;
        double own = f.at(c, ix, iy);
        double other = f.interp(1 - c, 1.0 / zeta);
        if (finite(own) && finite(other))
          rep.discrepancy = std::max(rep.discrepancy, std::abs(own - other));
        out.at(c, ix, iy) = std::min(own, other);
      }
  return {std::move(out), rep};
}

// Partition-of-unity weighted surface sum of a per-node quantity; the measure
// element is h^2 in chart coordinates, each sphere point counted once.
inline double weighted_mass(const SphereGrid& g,
                            const std::function<double(int, int, int)>& node_value) {
  double total = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        double w = pou_weight(g, g.node(ix, iy));
        if (w > 0) total += w * node_value(c, ix, iy) * g.h * g.h;
      }
  return total;
}

inline double omega_total_mass(const OmegaSpec& omega, const SphereGrid& g) {
  return weighted_mass(
      g, [&](int c, int ix, int iy) { return omega.density(c, g.node(ix, iy)); });
}

// ---------------------------------------------------------------------------
// CSV serialization: columns chart, ix, iy, re(z), im(z), value.

inline std::string format_value(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "+inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_value(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

inline void write_field_csv(const GridField& f, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "chart,ix,iy,re(z),im(z),value\n";
  const auto& g = f.grid;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        cplx z = g.node(ix, iy);
        os << c << ',' << ix << ',' << iy << ',' << format_value(z.real()) << ','
           << format_value(z.imag()) << ',' << format_value(f.at(c, ix, iy)) << '\n';
      }
  // atomic publish: write a sibling temp file, then rename over the target
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open for writing: " + tmp.string());
    out << os.str();
  }
  std::filesystem::rename(tmp, path);
}

inline GridField read_field_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field csv: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("chart,ix,iy", 0) != 0)
    throw ConfigError("field csv missing header row: " + path.string());
  struct Row {
    int c, ix, iy;
    double re, val;
  };
  std::vector<Row> rows;
  int max_ix = 0;
  double max_re = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() != 6) throw ConfigError("field csv row with wrong column count");
    Row r{std::stoi(cols[0]), std::stoi(cols[1]), std::stoi(cols[2]), parse_value(cols[3]),
          parse_value(cols[5])};
    rows.push_back(r);
    max_ix = std::max(max_ix, r.ix);
    if (finite(r.re)) max_re = std::max(max_re, std::abs(r.re));
  }
  if (rows.empty()) throw ConfigError("field csv has no data rows");
  SphereGrid g(max_re, max_ix);
  GridField f(g, std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : rows) {
    if (r.c < 0 || r.c > 1 || r.ix > g.n_cells || r.iy > g.n_cells)
      throw ConfigError("field csv row out of range");
    f.at(r.c, r.ix, r.iy) = r.val;
  }
  return f;
}

}  // namespace plurigreen
