// Dictionary between three presentations of the same object: functions on the
// sphere, logarithmically homogeneous functions on C^2 \ {0}, and metrics on
// the degree-1 bundle written as fiber norms.  Everything is kept in log
// scale, so the zero section and log poles show up as -inf rather than 0.

#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include "plurigreen/core.hpp"
#include "plurigreen/sections.hpp"
#include "plurigreen/weights.hpp"

namespace plurigreen {

namespace detail {

// scalings used by every homogeneity probe: real, pure phase, and a mixed one
// with modulus below 1, so neither phase nor modulus defects can hide
inline const cplx kScalings[3] = {cplx(2.0, 0.0), cplx(0.0, 1.0),
                                  std::polar(0.5, kPi / 3.0)};

// |scaled - (base + shift)| with -inf treated as a consistent value: a log
// pole must scale to itself, and disagreement with a finite value is fatal
inline double scaling_defect(double scaled, double base, double shift) {
  double expected = base + shift;
  if (std::isfinite(scaled) && std::isfinite(expected)) return std::abs(scaled - expected);
  return scaled == expected ? 0.0 : kInf;
}

}  // namespace detail

// tail of the ring probe used when homogenizing at a point with Z0 = 0; the
// two values agree once v has settled into logarithmic growth
struct HomogenizeTail {
  double prev = 0.0;
  double last = 0.0;
};

// v on chart 0 -> order-one log-homogeneous value at (Z0, Z1):
//   v(Z1/Z0) + log|Z0|                          for Z0 != 0
// At Z0 = 0 the upper limit is approximated along shrinking rings
// |Y0| = 2^-k, k = 1..40, eight phases per ring; the last ring maximum is
// returned and the last two are reported through `tail`.
inline double homogenize(const std::function<double(cplx)>& v, cplx Z0, cplx Z1,
                         HomogenizeTail* tail = nullptr) {
  if (Z0 == cplx(0.0) && Z1 == cplx(0.0))
    throw ConfigError("homogenize needs a nonzero point of C^2");
  if (Z0 != cplx(0.0)) {
    double val = v(Z1 / Z0) + std::log(std::abs(Z0));
    if (tail) *tail = {val, val};
    return val;
  }
  double prev = -kInf;
  double last = -kInf;
  for (int k = 1; k <= 40; ++k) {
    double eps = std::ldexp(1.0, -k);
    double ring = -kInf;
    for (int j = 0; j < 8; ++j) {
      cplx y0 = std::polar(eps, 2.0 * kPi * (j + 0.5) / 8.0);
      ring = std::max(ring, v(Z1 / y0) + std::log(eps));
    }
    prev = last;
    last = ring;
  }
  if (tail) *tail = {prev, last};
  return last;
}

// function on C^2 \ {0} obeying evaluator(lambda Z) = evaluator(Z) + d log|lambda|
struct HomogeneousFunction {
  std::function<double(cplx, cplx)> evaluator;
  double order = 1.0;  // d > 0, any positive real

  double value(cplx Z0, cplx Z1) const { return evaluator(Z0, Z1); }
};

// worst scaling defect over the samples and the three fixed scalings
inline double homogeneity_defect(const HomogeneousFunction& V,
                                 const std::vector<std::pair<cplx, cplx>>& samples) {
  double worst = 0.0;
  for (auto [z0, z1] : samples) {
    double base = V.value(z0, z1);
    for (cplx lam : detail::kScalings)
      worst = std::max(worst, detail::scaling_defect(V.value(lam * z0, lam * z1), base,
                                                     V.order * std::log(std::abs(lam))));
  }
  return worst;
}

// restrict an order-one homogeneous function to the slice Z = (1, z); inverse
// of homogenize there
inline std::function<double(cplx)> dehomogenize(const HomogeneousFunction& V) {
  if (V.order != 1.0)
    throw ConfigError("dehomogenize needs order 1; rescale the function by 1/d first");
  return [ev = V.evaluator](cplx z) { return ev(cplx(1.0), z); };
}

// metric potentials on the degree-1 bundle, one per chart, glued through
//   h_1(1/z) = h_0(z) - log|z|
// (same shape as the reference-potential cocycle)
struct MetricData {
  std::function<double(cplx)> h0;
  std::function<double(cplx)> h1;

  static MetricData from_omega(const OmegaSpec& omega) {
    return {[om = omega](cplx z) { return om.potential(0, z); },
            [om = omega](cplx w) { return om.potential(1, w); }};
  }
};

// worst |h_1(1/z) - h_0(z) + log|z|| over overlap samples (all nonzero)
inline double metric_cocycle_defect(const MetricData& m, const std::vector<cplx>& overlap) {
  double worst = 0.0;
  for (cplx z : overlap) {
    if (z == cplx(0.0)) throw ConfigError("cocycle samples must avoid the chart origin");
    worst = std::max(worst, std::abs(m.h1(1.0 / z) - m.h0(z) + std::log(std::abs(z))));
  }
  return worst;
}

// positivity certificate: smallest five-point Laplacian of the potentials over
// both chart interiors.  Pass the background form when the potentials are
// stored relative to it, so the quantity tested is Delta_h h_i + rho.
inline double metric_min_curvature(const MetricData& m, const SphereGrid& grid,
                                   const OmegaSpec* background = nullptr) {
  GridField f(grid, [&](int c, cplx z) { return c == 0 ? m.h0(z) : m.h1(z); });
  double worst = kInf;
  for (int c = 0; c < 2; ++c)
    for (int iy = 1; iy < grid.n_cells; ++iy)
      for (int ix = 1; ix < grid.n_cells; ++ix) {
        double val = laplacian_at(f, c, ix, iy);
        if (background) val += background->density(c, grid.node(ix, iy));
        worst = std::min(worst, val);
      }
  return worst;
}

// log of the order-d fiber norm induced by a metric:
//   log chi(theta_i^{-1}(x, t)) = d (h_i(x) + log|t|)
// chart-independent wherever the cocycle holds; t = 0 gives -inf
struct ChiFunction {
  MetricData metric;
  double order = 1.0;

  double log_value(const FiberPoint& f) const {
    if (f.chart != 0 && f.chart != 1) throw ConfigError("chart must be 0 or 1");
    cplx denom = f.chart == 0 ? f.base.z0 : f.base.z1;
    if (denom == cplx(0.0))
      throw DomainError("trivialization chart does not cover the base point");
    if (f.t == cplx(0.0)) return -kInf;
    cplx zeta = (f.chart == 0 ? f.base.z1 : f.base.z0) / denom;
    double h = f.chart == 0 ? metric.h0(zeta) : metric.h1(zeta);
    return order * (h + std::log(std::abs(f.t)));
  }

  std::function<double(const FiberPoint&)> as_function() const {
    return [copy = *this](const FiberPoint& f) { return copy.log_value(f); };
  }
};

inline ChiFunction metric_to_chi(const MetricData& m, double d) {
  if (!(d > 0.0)) throw ConfigError("bundle order must be positive");
  return {m, d};
}

// recover potentials from a fiber norm: h_i(x) = (1/d) log chi(theta_i^{-1}(x, 1)).
// Fiber homogeneity of the claimed order is probed first and mismatches are
// rejected; a fiber where chi vanishes identically passes through as -inf.
inline MetricData chi_to_metric(const std::function<double(const FiberPoint&)>& log_chi,
                                double d) {
  if (!(d > 0.0)) throw ConfigError("bundle order must be positive");
  const cplx probes[] = {cplx(0.3, -0.4), cplx(-0.75, 0.2), cplx(0.0, 0.9)};
  for (int chart = 0; chart < 2; ++chart)
    for (cplx zeta : probes) {
      FiberPoint unit{ProjPoint::from_chart(chart, zeta), cplx(1.0), chart};
      double base = log_chi(unit);
      for (cplx lam : detail::kScalings) {
        double defect = detail::scaling_defect(log_chi({unit.base, lam, chart}), base,
                                               d * std::log(std::abs(lam)));
        if (!(defect <= 1e-8))
          throw ConfigError("input is not fiber-homogeneous of the claimed order");
      }
    }
  return {[log_chi, d](cplx z) {
            return log_chi(FiberPoint{ProjPoint::from_chart(0, z), cplx(1.0), 0}) / d;
          },
          [log_chi, d](cplx w) {
            return log_chi(FiberPoint{ProjPoint::from_chart(1, w), cplx(1.0), 1}) / d;
          }};
}

}  // namespace plurigreen
