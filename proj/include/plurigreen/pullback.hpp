// Holomorphic self-maps of the sphere as rational maps: evaluation and fibers,
// pullback/pushforward of functions, empirical estimation of the constants in
// the pullback sandwich, and the sandwich / image-inequality verifications.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plurigreen/core.hpp"
#include "plurigreen/relax.hpp"
#include "plurigreen/sections.hpp"
#include "plurigreen/weights.hpp"

namespace plurigreen {

namespace detail {

// --- dense polynomial helpers, coefficients ascending ---

inline std::vector<cplx> trim_poly(std::vector<cplx> c, double rel = 1e-14) {
  double scale = 0.0;
  for (cplx v : c) scale = std::max(scale, std::abs(v));
  while (c.size() > 1 && std::abs(c.back()) <= rel * scale) c.pop_back();
  if (c.empty()) c.push_back(0.0);
  return c;
}

inline bool poly_is_zero(const std::vector<cplx>& c) {
  for (cplx v : c)
    if (v != cplx(0.0)) return false;
  return true;
}

inline std::vector<cplx> poly_mul(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  std::vector<cplx> out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline std::vector<cplx> poly_derivative(const std::vector<cplx>& a) {
  if (a.size() <= 1) return {cplx(0.0)};
  std::vector<cplx> out(a.size() - 1);
  for (size_t j = 1; j < a.size(); ++j) out[j - 1] = double(j) * a[j];
  return out;
}

// value and derivative in one Horner pass
inline std::pair<cplx, cplx> horner2(const std::vector<cplx>& c, cplx z) {
  cplx v = 0.0, dv = 0.0;
  for (int j = int(c.size()) - 1; j >= 0; --j) {
    dv = dv * z + v;
    v = v * z + c[j];
  }
  return {v, dv};
}

// |det| of the 2d x 2d Sylvester matrix of two degree-d coefficient lists,
// each normalized to unit max coefficient first.  Zero iff the homogeneous
// pair has a common root on the sphere (including at infinity).
inline double sylvester_resultant_mag(std::vector<cplx> p, std::vector<cplx> q) {
  auto normalize = [](std::vector<cplx>& c) {
    double s = 0.0;
    for (cplx v : c) s = std::max(s, std::abs(v));
    if (s > 0.0)
      for (cplx& v : c) v /= s;
    return s;
  };
  if (normalize(p) == 0.0 || normalize(q) == 0.0) return 0.0;
  int d = int(p.size()) - 1;
  int n = 2 * d;
  std::vector<cplx> m(size_t(n) * n, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= d; ++j) {
      m[size_t(i) * n + i + j] = p[d - j];
      m[size_t(d + i) * n + i + j] = q[d - j];
    }
  double mag = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(m[size_t(k) * n + k]);
    for (int r = k + 1; r < n; ++r) {
      double a = std::abs(m[size_t(r) * n + k]);
      if (a > best) {
        best = a;
        piv = r;
      }
    }
    if (best == 0.0) return 0.0;
    if (piv != k)
      for (int j = k; j < n; ++j) std::swap(m[size_t(piv) * n + j], m[size_t(k) * n + j]);
    mag *= best;
    cplx pv = m[size_t(k) * n + k];
    for (int r = k + 1; r < n; ++r) {
      cplx factor = m[size_t(r) * n + k] / pv;
      if (factor == cplx(0.0)) continue;
      for (int j = k; j < n; ++j) m[size_t(r) * n + j] -= factor * m[size_t(k) * n + j];
    }
  }
  return mag;
}

// homogeneous evaluation sum c_j Z1^j Z0^(d-j); branches on the larger
// coordinate so the Horner ratio stays inside the unit disk
inline cplx eval_homog(const std::vector<cplx>& c, cplx Z0, cplx Z1) {
  int d = int(c.size()) - 1;
  cplx acc = 0.0, lead = 1.0;
  if (std::abs(Z0) >= std::abs(Z1)) {
    cplx t = Z1 / Z0;
    for (int j = d; j >= 0; --j) acc = acc * t + c[j];
    for (int k = 0; k < d; ++k) lead *= Z0;
  } else {
    cplx t = Z0 / Z1;
    for (int j = 0; j <= d; ++j) acc = acc * t + c[j];
    for (int k = 0; k < d; ++k) lead *= Z1;
  }
  return acc * lead;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Rational maps

// rational self-map of the sphere, f = P/Qp in chart 0, handled homogeneously:
//   f([Z0 : Z1]) = [Qh(Z0,Z1) : Ph(Z0,Z1)],  Ph(Z0,Z1) = Z0^d P(Z1/Z0).
// Coprimality of the homogeneous pair (checked through the resultant) means
// the map has no base points and every fiber has exactly d points.
struct RationalMap {
  Polynomial P, Qp;
  int d = 0;
  std::vector<cplx> ph, qh;  // coefficients padded to length d + 1
  std::string label;

  static RationalMap make(std::vector<cplx> num, std::vector<cplx> den,
                          std::string name = "") {
    RationalMap f;
    f.P.coeffs = detail::trim_poly(std::move(num));
    f.Qp.coeffs = detail::trim_poly(std::move(den));
    if (detail::poly_is_zero(f.P.coeffs) || detail::poly_is_zero(f.Qp.coeffs))
      throw ConfigError("rational map needs nonzero numerator and denominator");
    f.d = std::max(f.P.degree(), f.Qp.degree());
    if (f.d < 1) throw ConfigError("constant maps are not admitted; need degree >= 1");
    f.ph = f.P.coeffs;
    f.ph.resize(f.d + 1, 0.0);
    f.qh = f.Qp.coeffs;
    f.qh.resize(f.d + 1, 0.0);
    double res = detail::sylvester_resultant_mag(f.ph, f.qh);
    if (!(res > 1e-10))
      throw ConfigError("numerator and denominator share a factor (resultant " +
                        format_value(res) + ")");
    f.label = name.empty() ? "rational(d=" + std::to_string(f.d) + ")" : std::move(name);
    return f;
  }

  static RationalMap identity() { return make({0.0, 1.0}, {1.0}, "id"); }
  static RationalMap power(int k) {
    if (k < 1) throw ConfigError("power map needs exponent >= 1");
    std::vector<cplx> num(k + 1, 0.0);
    num[k] = 1.0;
    return make(std::move(num), {1.0}, "z^" + std::to_string(k));
  }
  // (z cos t - sin t) / (z sin t + cos t), a sphere rotation
  static RationalMap rotation(double t) {
    double c = std::cos(t), s = std::sin(t);
    return make({-s, c}, {c, s}, "rot(" + format_value(t) + ")");
  }
};

inline ProjPoint eval_map(const RationalMap& f, const ProjPoint& x) {
  ProjPoint p = x;
  p.normalize();
  cplx a = detail::eval_homog(f.qh, p.z0, p.z1);
  cplx b = detail::eval_homog(f.ph, p.z0, p.z1);
  return ProjPoint::make(a, b);
}

// ---------------------------------------------------------------------------
// Fibers

namespace detail {

// all roots of a dense polynomial by simultaneous Aberth-Ehrlich iteration;
// deterministic through a fixed-seed jitter of the initial circle.  Multiple
// roots converge linearly and land as clusters; callers snap them.  The exit
// residual is a relative backward error, so it is scale free.
inline std::vector<cplx> aberth_roots(std::vector<cplx> c) {
  c = trim_poly(std::move(c));
  int n = int(c.size()) - 1;
  if (n == 0) return {};
  if (n == 1) return {-c[0] / c[1]};
  double s = 0.0;
  for (cplx v : c) s = std::max(s, std::abs(v));
  for (cplx& v : c) v /= s;

  double radius = 0.0;
  for (int j = 0; j < n; ++j) radius = std::max(radius, std::abs(c[j] / c[n]));
  radius = 1.0 + radius;

  std::mt19937 rng(987654321u);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  std::vector<cplx> z(n);
  for (int i = 0; i < n; ++i)
    z[i] = std::polar(radius * (0.7 + 0.3 * jitter(rng)),
                      2.0 * kPi * (i + 0.35 + 0.25 * jitter(rng)) / n);

  // absolute-perturbation backward error at unit coefficient scale: smallest
  // max |delta c_j| making zi exact.  (A relative-per-coefficient gauge would
  // report 1 for a multiple root at the origin, where the only nonzero
  // coefficient cannot be perturbed into vanishing.)
  auto backward = [&](cplx zi, cplx v) {
    double bound = 0.0, pw = 1.0, az = std::abs(zi);
    for (int j = 0; j <= n; ++j) {
      bound += pw;
      pw *= az;
    }
    return std::abs(v) / bound;
  };

  for (int sweep = 0; sweep < 500; ++sweep) {
    bool settled = true;
    for (int i = 0; i < n; ++i) {
      auto [v, dv] = horner2(c, z[i]);
      if (v == cplx(0.0)) continue;
      cplx w = dv == cplx(0.0) ? cplx(1e-3, 1e-3) : v / dv;
      cplx sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        cplx diff = z[i] - z[j];
        if (std::abs(diff) < 1e-14) diff = cplx(1e-14, 1e-14);
        sum += 1.0 / diff;
      }
      cplx denom = 1.0 - w * sum;
      cplx step = std::abs(denom) < 1e-12 ? w : w / denom;
      z[i] -= step;
      if (std::abs(step) > 5e-14 * (1.0 + std::abs(z[i]))) settled = false;
    }
    if (settled) break;
  }

  double worst = 0.0;
  for (cplx zi : z) worst = std::max(worst, backward(zi, horner2(c, zi).first));
  if (worst > 1e-10)
    throw NumericError("root finder stalled: worst relative residual " + format_value(worst) +
                       " after 500 sweeps at degree " + std::to_string(n));
  return z;
}

// snap clusters of nearly equal roots to their centroid; centroids of a
// symmetric Aberth splay around a multiple root are much closer to it
inline void snap_clusters(std::vector<cplx>& z, double tol = 1e-6) {
  int n = int(z.size());
  std::vector<int> group(n, -1);
  for (int i = 0; i < n; ++i) {
    if (group[i] >= 0) continue;
    group[i] = i;
    cplx sum = z[i];
    int count = 1;
    for (int j = i + 1; j < n; ++j)
      if (group[j] < 0 && std::abs(z[j] - z[i]) <= tol * (1.0 + std::abs(z[i]))) {
        group[j] = i;
        sum += z[j];
        ++count;
      }
    if (count > 1) {
      cplx mean = sum / double(count);
      for (int j = i; j < n; ++j)
        if (group[j] == i) z[j] = mean;
    }
  }
}

}  // namespace detail

// the full fiber f^{-1}(y), length d with multiplicity.  Finite preimages are
// the roots of P(z) y0 - Qp(z) y1; the degree drop of that polynomial is the
// multiplicity of the point at infinity in the fiber.
inline std::vector<ProjPoint> preimages(const RationalMap& f, const ProjPoint& y) {
  ProjPoint yn = y;
  yn.normalize();
  std::vector<cplx> c(f.d + 1);
  double scale = 0.0;
  for (int j = 0; j <= f.d; ++j) {
    c[j] = f.ph[j] * yn.z0 - f.qh[j] * yn.z1;
    scale = std::max(scale, std::abs(c[j]));
  }
  int e = f.d;
  while (e > 0 && std::abs(c[e]) <= 1e-12 * scale) --e;
  c.resize(e + 1);

  std::vector<ProjPoint> out;
  out.reserve(f.d);
  if (e > 0) {
    auto roots = detail::aberth_roots(c);
    detail::snap_clusters(roots);
    for (cplx r : roots) out.push_back(ProjPoint::from_chart(0, r));
  }
  for (int k = e; k < f.d; ++k) out.push_back(ProjPoint::make(0.0, 1.0));
  return out;
}

// ---------------------------------------------------------------------------
// Transport of functions

// (f^* u)(x) = u(f(x)) by chart-aware interpolation
inline GridField pullback_u(const RationalMap& f, const GridField& u) {
  return GridField(u.grid, [&](int c, cplx z) {
    return u.interp_point(eval_map(f, ProjPoint::from_chart(c, z)));
  });
}

// (f_* u)(x) = max over the fiber f^{-1}(x) of interpolated u
inline GridField pushforward_u(const RationalMap& f, const GridField& u) {
  return GridField(u.grid, [&](int c, cplx z) {
    double best = -kInf;
    for (const ProjPoint& p : preimages(f, ProjPoint::from_chart(c, z)))
      best = std::max(best, u.interp_point(p));
    return best;
  });
}

// ---------------------------------------------------------------------------
// The pulled-back form and the constant beta

// image seen from a source chart: the image chart with coordinate inside the
// closed unit disk and |m'|^2 of the local representative into that chart
struct LocalJet {
  int chart = 0;
  cplx w{};
  double deriv2 = 0.0;
};

inline LocalJet local_jet(const RationalMap& f, int c, cplx zeta) {
  std::vector<cplx> pc = f.ph, qc = f.qh;
  if (c == 1) {
    // source chart 1: f(1/zeta) has the reversed padded coefficients and the
    // common zeta^d factor cancels in the ratio
    std::reverse(pc.begin(), pc.end());
    std::reverse(qc.begin(), qc.end());
  }
  auto [p, dp] = detail::horner2(pc, zeta);
  auto [q, dq] = detail::horner2(qc, zeta);
  cplx wronskian = dp * q - p * dq;
  if (std::abs(p) <= std::abs(q)) return {0, p / q, std::norm(wronskian / (q * q))};
  return {1, q / p, std::norm(wronskian / (p * p))};
}

// f^* omega as chart data.  The densities are exact:
//   rho*(c, zeta) = rho(image chart, image coord) |m'(zeta)|^2
// and carry total mass d times the mass of omega.  The potential fields hold
// the composed potential of the nearer image chart; they are bounded and
// diagnostic grade only (a true local potential of f^* omega needs the
// degree-d cocycle), and nothing in the solvers reads them.
inline OmegaSpec pullback_form(const RationalMap& f, const OmegaSpec& omega) {
  OmegaSpec out;
  out.label = f.label + "^*" + omega.label;
  auto density = [f, omega](int c, cplx z) {
    LocalJet j = local_jet(f, c, z);
    return omega.density(j.chart, j.w) * j.deriv2;
  };
  auto potential = [f, omega](int c, cplx z) {
    LocalJet j = local_jet(f, c, z);
    return omega.potential(j.chart, j.w);
  };
  out.density0 = [density](cplx z) { return density(0, z); };
  out.density1 = [density](cplx z) { return density(1, z); };
  out.potential0 = [potential](cplx z) { return potential(0, z); };
  out.potential1 = [potential](cplx z) { return potential(1, z); };
  return out;
}

// sufficient candidate for the pullback constant: the sup over grid nodes of
// the density ratio of f^* omega to omega.  An upper bound for the class
// condition, not the minimal constant.
inline double estimate_beta(const RationalMap& f, const OmegaSpec& omega,
                            const SphereGrid& grid) {
  double best = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= grid.n_cells; ++iy)
      for (int ix = 0; ix <= grid.n_cells; ++ix) {
        cplx z = grid.node(ix, iy);
        double den = omega.density(c, z);
        if (!(den > 0.0)) continue;  // ratio parametrization degenerates here
        LocalJet j = local_jet(f, c, z);
        best = std::max(best, omega.density(j.chart, j.w) * j.deriv2 / den);
      }
  return best;
}

// ---------------------------------------------------------------------------
// Transport of sets and weights

// f^{-1}(K): membership through the map.  Curve parametrizations do not
// transport through fibers, so the preimage is membership-only.
inline CompactSet pullback_set(const RationalMap& f, const CompactSet& K) {
  CompactSet out;
  out.label = f.label + "^-1(" + K.label + ")";
  out.membership = [f, K](const ProjPoint& p) { return K.member(eval_map(f, p)); };
  return out;
}

// f(K): y lies in the image iff some point of the fiber over y lies in K
inline CompactSet image_set(const RationalMap& f, const CompactSet& K) {
  CompactSet out;
  out.label = f.label + "(" + K.label + ")";
  out.membership = [f, K](const ProjPoint& y) {
    for (const ProjPoint& p : preimages(f, y))
      if (K.member(p)) return true;
    return false;
  };
  return out;
}

// (f^* Q) / scale = Q(f(x)) / scale
inline Weight pullback_weight(const RationalMap& f, const Weight& Q, double scale = 1.0) {
  if (!(scale > 0.0)) throw ConfigError("weight scale must be positive");
  return {[f, Q, scale](const ProjPoint& p) { return Q.eval(eval_map(f, p)) / scale; },
          f.label + "^*" + Q.label + (scale == 1.0 ? "" : "/" + format_value(scale))};
}

// ---------------------------------------------------------------------------
// The constant alpha

using ChartFunction = std::function<double(int, cplx)>;

struct AlphaReport {
  double worst_residual = kInf;
  bool violation = false;
  int witness_chart = -1, witness_ix = -1, witness_iy = -1;
  int excluded_nodes = 0;    // interior nodes inside a critical-value collar
  int skipped_stencils = 0;  // stencils touching a non-finite value
  std::vector<ProjPoint> critical_values;
  std::vector<double> precondition_residuals;  // masked min of lap u + rho per input
};

namespace detail {

// critical values of f: images of the zeros of P'Qp - P Qp', plus the image
// of infinity when the degree drop of that Wronskian says infinity is
// critical.  Deduplicated.
inline std::vector<ProjPoint> critical_values(const RationalMap& f) {
  std::vector<cplx> wr;
  {
    auto dp = poly_derivative(f.P.coeffs);
    auto dq = poly_derivative(f.Qp.coeffs);
    auto a = poly_mul(dp, f.Qp.coeffs);
    auto b = poly_mul(f.P.coeffs, dq);
    wr.assign(std::max(a.size(), b.size()), 0.0);
    for (size_t j = 0; j < a.size(); ++j) wr[j] += a[j];
    for (size_t j = 0; j < b.size(); ++j) wr[j] -= b[j];
    wr = trim_poly(std::move(wr));
  }
  std::vector<ProjPoint> points;
  if (!poly_is_zero(wr)) {
    auto roots = aberth_roots(wr);
    snap_clusters(roots);
    for (cplx r : roots) points.push_back(ProjPoint::from_chart(0, r));
  }
  int finite_count = int(points.size());
  if (finite_count < 2 * f.d - 2) points.push_back(ProjPoint::make(0.0, 1.0));

  std::vector<ProjPoint> values;
  for (const ProjPoint& p : points) {
    ProjPoint v = eval_map(f, p);
    bool seen = false;
    for (const ProjPoint& u : values)
      if (u.close_to(v, 1e-9)) {
        seen = true;
        break;
      }
    if (!seen) values.push_back(v);
  }
  return values;
}

}  // namespace detail

// empirical test of the hypothesis "alpha f_* keeps functions omega-psh".
// Test functions are supplied as chart-aware formulas and evaluated exactly at
// fiber points: interpolating them instead injects O(|D^2 u|) noise into the
// five-point Laplacian, which would drown the residual (measured; see tests).
// f_* u is only continuous across argmax switches, and branches merge at
// critical values, so a 3-cell collar around the critical-value set is
// excluded.  A pass is evidence, not proof.
inline AlphaReport check_alpha(const RationalMap& f, double alpha,
                               const std::vector<ChartFunction>& test_functions,
                               const OmegaSpec& omega, const SphereGrid& grid,
                               double tol = 0.05) {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  AlphaReport rep;
  rep.critical_values = detail::critical_values(f);

  // collar mask: nodes within 3 cells (Chebyshev) of a critical value
  std::array<std::vector<std::uint8_t>, 2> collar;
  for (int c = 0; c < 2; ++c) collar[c].assign(grid.node_count(), 0);
  for (const ProjPoint& v : rep.critical_values)
    for (int c = 0; c < 2; ++c) {
      ProjPoint vn = v;
      vn.normalize();
      cplx denom = c == 0 ? vn.z0 : vn.z1;
      if (denom == cplx(0.0)) continue;
      cplx coord = (c == 0 ? vn.z1 : vn.z0) / denom;
      if (std::abs(coord.real()) > grid.half_width + 3.5 * grid.h ||
          std::abs(coord.imag()) > grid.half_width + 3.5 * grid.h)
        continue;
      for (int iy = 0; iy <= grid.n_cells; ++iy)
        for (int ix = 0; ix <= grid.n_cells; ++ix) {
          cplx nz = grid.node(ix, iy);
          double dist = std::max(std::abs(nz.real() - coord.real()),
                                 std::abs(nz.imag() - coord.imag()));
          if (dist <= 3.0 * grid.h + 1e-12) collar[c][grid.idx(ix, iy)] = 1;
        }
    }
  for (int c = 0; c < 2; ++c)
    for (int iy = 1; iy < grid.n_cells; ++iy)
      for (int ix = 1; ix < grid.n_cells; ++ix)
        if (collar[c][grid.idx(ix, iy)]) ++rep.excluded_nodes;

  GridField rho(grid, [&](int c, cplx z) { return omega.density(c, z); });

  for (const ChartFunction& u : test_functions) {
    // record how omega-psh the input itself looks at grid resolution
    GridField uf(grid, u);
    double pre = kInf;
    for (int c = 0; c < 2; ++c)
      for (int iy = 1; iy < grid.n_cells; ++iy)
        for (int ix = 1; ix < grid.n_cells; ++ix) {
          bool ok = finite(uf.at(c, ix, iy)) && finite(uf.at(c, ix - 1, iy)) &&
                    finite(uf.at(c, ix + 1, iy)) && finite(uf.at(c, ix, iy - 1)) &&
                    finite(uf.at(c, ix, iy + 1));
          if (!ok) continue;
          pre = std::min(pre, laplacian_at(uf, c, ix, iy) + rho.at(c, ix, iy));
        }
    rep.precondition_residuals.push_back(pre);

    // alpha f_* u with u evaluated exactly on each fiber
    GridField g(grid, [&](int c, cplx z) {
      double best = -kInf;
      for (const ProjPoint& p : preimages(f, ProjPoint::from_chart(c, z))) {
        auto [pc, pz] = chart_transition(p);
        best = std::max(best, u(pc, pz));
      }
      return alpha * best;
    });

    for (int c = 0; c < 2; ++c)
      for (int iy = 1; iy < grid.n_cells; ++iy)
        for (int ix = 1; ix < grid.n_cells; ++ix) {
          if (collar[c][grid.idx(ix, iy)]) continue;
          bool ok = finite(g.at(c, ix, iy)) && finite(g.at(c, ix - 1, iy)) &&
                    finite(g.at(c, ix + 1, iy)) && finite(g.at(c, ix, iy - 1)) &&
                    finite(g.at(c, ix, iy + 1));
          if (!ok) {
            ++rep.skipped_stencils;
            continue;
          }
          double res = laplacian_at(g, c, ix, iy) + rho.at(c, ix, iy);
          if (res < rep.worst_residual) {
            rep.worst_residual = res;
            rep.witness_chart = c;
            rep.witness_ix = ix;
            rep.witness_iy = iy;
          }
        }
  }
  rep.violation = rep.worst_residual < -tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Sandwich and image inequality

struct SandwichParams {
  double alpha = 1.0;
  double beta = 1.0;
  std::string provenance = "user";  // "estimated" | "user"

  static SandwichParams make(double a, double b, std::string prov) {
    if (!((a == 1.0 && b == 1.0) || (a > 1.0 && b >= a)))
      throw ConfigError("need 1 < alpha <= beta (alpha = beta = 1 only for identity fixtures)");
    if (prov != "estimated" && prov != "user")
      throw ConfigError("provenance must be 'estimated' or 'user'");
    return {a, b, std::move(prov)};
  }
};

namespace detail {

// V(f(x)) with the source chart preferred when the image stays inside it, so
// identity fixtures compare nodal values bitwise instead of paying the seam
inline double value_at_image(const GridField& F, const ProjPoint& y, int prefer) {
  ProjPoint yn = y;
  yn.normalize();
  cplx denom = prefer == 0 ? yn.z0 : yn.z1;
  if (denom != cplx(0.0)) {
    cplx coord = (prefer == 0 ? yn.z1 : yn.z0) / denom;
    if (std::abs(coord.real()) <= F.grid.half_width && std::abs(coord.imag()) <= F.grid.half_width)
      return F.interp(prefer, coord);
  }
  return F.interp_point(yn);
}

}  // namespace detail

struct SandwichReport {
  double lower_defect = -kInf;
  double upper_defect = -kInf;
  bool converged = false;
};

// solves the three envelopes of the pullback sandwich and reports the worst
// violation of each inequality (positive defect = violation by that much):
//   alpha V_{f^-1 K, f^*Q/alpha} <= V_{K,Q} o f <= beta V_{f^-1 K, f^*Q/beta}
inline SandwichReport verify_sandwich(const RationalMap& f, const CompactSet& K,
                                      const Weight& Q, const SandwichParams& params,
                                      const OmegaSpec& omega, const SphereGrid& grid,
                                      const SolveOptions& opts = {}) {
  auto base = solve_envelope(K, Q, omega, grid, opts);
  CompactSet Kpre = pullback_set(f, K);
  auto lo = solve_envelope(Kpre, pullback_weight(f, Q, params.alpha), omega, grid, opts);
  auto hi = solve_envelope(Kpre, pullback_weight(f, Q, params.beta), omega, grid, opts);

  SandwichReport r;
  r.converged = base.converged && lo.converged && hi.converged;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= grid.n_cells; ++iy)
      for (int ix = 0; ix <= grid.n_cells; ++ix) {
        ProjPoint y = eval_map(f, ProjPoint::from_chart(c, grid.node(ix, iy)));
        double W = detail::value_at_image(base.V, y, c);
        r.upper_defect = std::max(r.upper_defect, W - params.beta * hi.V.at(c, ix, iy));
        r.lower_defect = std::max(r.lower_defect, params.alpha * lo.V.at(c, ix, iy) - W);
      }
  return r;
}

struct ImageReport {
  double defect = -kInf;
  bool converged = false;
  double pullback_mass = 0.0;  // node-sum mass of f^* omega, expect d * mass(omega)
};

// verifies V_{f(K), omega, Q} o f <= V_{K, f^* omega, Q o f} on the grid.
// The pulled-back density is bounded (spherical-derivative form), so no nodes
// need exclusion.
inline ImageReport verify_image_inequality(const RationalMap& f, const CompactSet& K,
                                           const Weight& Q, const OmegaSpec& omega,
                                           const SphereGrid& grid,
                                           const SolveOptions& opts = {}) {
  OmegaSpec pulled = pullback_form(f, omega);
  auto left = solve_envelope(image_set(f, K), Q, omega, grid, opts);
  auto right = solve_envelope(K, pullback_weight(f, Q), pulled, grid, opts);

  ImageReport r;
  r.converged = left.converged && right.converged;
  r.pullback_mass = omega_total_mass(pulled, grid);
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= grid.n_cells; ++iy)
      for (int ix = 0; ix <= grid.n_cells; ++ix) {
        ProjPoint y = eval_map(f, ProjPoint::from_chart(c, grid.node(ix, iy)));
        double W = detail::value_at_image(left.V, y, c);
        r.defect = std::max(r.defect, W - right.V.at(c, ix, iy));
      }
  return r;
}

}  // namespace plurigreen
