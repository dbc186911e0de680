#pragma once
// Weights Q on the sphere, compact sets K with grid rasterization, the
// mildness diagnostic, affine <-> projective weight translation, and gauge
// data for cohomologous reference forms.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plurigreen/core.hpp"

namespace plurigreen {

// Evaluation outside a function's natural domain (e.g. affine value at the
// point at infinity).
struct DomainError : ConfigError {
  using ConfigError::ConfigError;
};
struct InvalidGaugeError : ConfigError {
  using ConfigError::ConfigError;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Weights

// A weight is a deterministic function ProjPoint -> real with +-inf allowed;
// solvers clamp through capped().
struct Weight {
  std::function<double(const ProjPoint&)> evaluator;
  std::string label;

  double eval(const ProjPoint& p) const { return evaluator(p); }
  double eval_chart(int c, cplx zeta) const { return eval(ProjPoint::from_chart(c, zeta)); }
  double capped(const ProjPoint& p, double cap = kValueCap) const {
    return std::clamp(eval(p), -cap, cap);
  }

  struct FiniteMask {
    std::array<std::vector<std::uint8_t>, 2> finite;
    int finite_nodes = 0;
    int total_nodes = 0;
    double fraction() const { return total_nodes ? double(finite_nodes) / total_nodes : 0.0; }
  };
  FiniteMask finite_mask(const SphereGrid& g) const {
    FiniteMask m;
    for (int c = 0; c < 2; ++c) {
      m.finite[c].assign(g.node_count(), 0);
      for (int iy = 0; iy < g.nodes(); ++iy)
        for (int ix = 0; ix < g.nodes(); ++ix) {
          double q = eval_chart(c, g.node(ix, iy));
          ++m.total_nodes;
          if (q < kInf) {
            m.finite[c][g.idx(ix, iy)] = 1;
            ++m.finite_nodes;
          }
        }
    }
    return m;
  }
};

inline Weight weight_zero() {
  return {[](const ProjPoint&) { return 0.0; }, "zero"};
}

// Q([z0:z1]) = log(||Z|| / |z0|); on chart 0 this is (1/2)log(1+|z|^2), at
// the point at infinity it is +inf.
inline Weight weight_fs_potential() {
  return {[](const ProjPoint& p) {
            double a = std::abs(p.z0), b = std::abs(p.z1);
            if (a == 0.0) return kInf;
            return std::log(std::hypot(a, b) / a);
          },
          "fs_potential"};
}

// Q([1:z]) = -log|z - a|; +inf at z = a, -inf at the point at infinity
// (homogeneous form log|z0| - log|z1 - a z0| is scale invariant).
inline Weight weight_log_dist(cplx a) {
  return {[a](const ProjPoint& p) {
            double num = std::abs(p.z0), den = std::abs(p.z1 - a * p.z0);
            if (den == 0.0) return kInf;
            if (num == 0.0) return -kInf;
            return std::log(num) - std::log(den);
          },
          "log_dist(" + format_value(a.real()) + "," + format_value(a.imag()) + ")"};
}

inline Weight weight_radial_power(double p) {
  if (p == 0.0) throw ConfigError("radial_power needs a nonzero exponent");
  return {[p](const ProjPoint& pt) {
            double a = std::abs(pt.z0), b = std::abs(pt.z1);
            double t = a == 0.0 ? kInf : b / a;
            return std::pow(t, p) / p;
          },
          "radial_power(" + format_value(p) + ")"};
}

// Nearest-node lookup into a stored grid field (chart chosen by |coord| <= 1).
inline Weight weight_table(const std::filesystem::path& csv) {
  auto field = std::make_shared<GridField>(read_field_csv(csv));
  return {[field](const ProjPoint& p) {
            auto [c, zeta] = chart_transition(p);
            const auto& g = field->grid;
            int ix = std::clamp(int(std::lround((zeta.real() + g.half_width) / g.h)), 0, g.n_cells);
            int iy = std::clamp(int(std::lround((zeta.imag() + g.half_width) / g.h)), 0, g.n_cells);
            return field->at(c, ix, iy);
          },
          "table:" + csv.string()};
}

// Parse "name" or "name(arg,...)" with numeric args; "table:<path>" passes
// the path through verbatim.
inline std::vector<double> parse_args(const std::string& s, const std::string& name) {
  auto open = s.find('(');
  if (open == std::string::npos) {
    if (s != name) throw ConfigError("malformed catalog entry: " + s);
    return {};
  }
  if (s.back() != ')' || s.substr(0, open) != name)
    throw ConfigError("malformed catalog entry: " + s);
  std::vector<double> args;
  std::string body = s.substr(open + 1, s.size() - open - 2);
  std::stringstream ss(body);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    args.push_back(v);
  }
  return args;
}

inline Weight make_weight(const std::string& spec) {
  auto name = spec.substr(0, spec.find('('));
  if (spec.rfind("table:", 0) == 0) return weight_table(spec.substr(6));
  if (spec == "zero") return weight_zero();
  if (spec == "fs_potential") return weight_fs_potential();
  if (name == "log_dist") {
    auto a = parse_args(spec, name);
    if (a.empty() || a.size() > 2) throw ConfigError("log_dist takes (re) or (re,im)");
    return weight_log_dist(cplx(a[0], a.size() > 1 ? a[1] : 0.0));
  }
  if (name == "radial_power") {
    auto a = parse_args(spec, name);
    if (a.size() != 1) throw ConfigError("radial_power takes one exponent");
    return weight_radial_power(a[0]);
  }
  throw ConfigError("unknown weight catalog entry: " + spec);
}

inline Weight weight_plus_const(const Weight& q, double c, const std::string& label = "") {
  auto base = q.evaluator;
  return {[base, c](const ProjPoint& p) { return base(p) + c; },
          label.empty() ? q.label + (c >= 0 ? "+" : "") + format_value(c) : label};
}

// ---------------------------------------------------------------------------
// Compact sets

struct CompactSet {
  std::string label;
  std::function<bool(const ProjPoint&)> membership;
  // Optional curve parametrization for thin sets, t in [0,1); used when a
  // dense sample of K is needed (interpolation nodes, sandwich scans).
  std::function<ProjPoint(double)> param;
  bool has_param = false;
  bool param_periodic = false;  // param(0) and param(1) coincide (closed curve)
  // max |z| over K in chart 0 when known; +inf means unbounded / covers infinity
  double chart0_bound = kInf;

  bool member(const ProjPoint& p) const { return membership(p); }

  static CompactSet whole_sphere() {
    CompactSet k;
    k.label = "all";
    k.membership = [](const ProjPoint&) { return true; };
    return k;
  }
  static CompactSet circle(double r, cplx center = 0.0, double tol = 0.01) {
    if (!(r > 0) || !(tol > 0)) throw ConfigError("circle needs positive radius and tolerance");
    CompactSet k;
    k.label = "circle(r=" + format_value(r) + ")";
    k.membership = [r, center, tol](const ProjPoint& p) {
      if (p.z0 == cplx{}) return false;
      return std::abs(std::abs(p.coord(0) - center) - r) <= tol;
    };
    k.param = [r, center](double t) {
      return ProjPoint::from_chart(0, center + r * std::polar(1.0, 2.0 * kPi * t));
    };
    k.has_param = true;
    k.param_periodic = true;
    k.chart0_bound = std::abs(center) + r;
    return k;
  }
  static CompactSet disk(double r, cplx center = 0.0) {
    if (!(r > 0)) throw ConfigError("disk needs positive radius");
    CompactSet k;
    k.label = "disk(r=" + format_value(r) + ")";
    k.membership = [r, center](const ProjPoint& p) {
      if (p.z0 == cplx{}) return false;
      return std::abs(p.coord(0) - center) <= r;
    };
    k.chart0_bound = std::abs(center) + r;
    return k;
  }
  static CompactSet annulus(double r0, double r1, cplx center = 0.0) {
    if (!(0 < r0 && r0 < r1)) throw ConfigError("annulus needs 0 < r0 < r1");
    CompactSet k;
    k.label = "annulus(" + format_value(r0) + "," + format_value(r1) + ")";
    k.membership = [r0, r1, center](const ProjPoint& p) {
      if (p.z0 == cplx{}) return false;
      double d = std::abs(p.coord(0) - center);
      return r0 <= d && d <= r1;
    };
    k.chart0_bound = std::abs(center) + r1;
    return k;
  }
  static CompactSet segment(cplx a, cplx b, double tol = 0.01) {
    if (a == b || !(tol > 0)) throw ConfigError("segment needs distinct endpoints, positive tol");
    CompactSet k;
    k.label = "segment";
    k.membership = [a, b, tol](const ProjPoint& p) {
      if (p.z0 == cplx{}) return false;
      cplx z = p.coord(0), d = b - a;
      double t = std::clamp(((z - a) * std::conj(d)).real() / std::norm(d), 0.0, 1.0);
      return std::abs(z - (a + t * d)) <= tol;
    };
    k.param = [a, b](double t) { return ProjPoint::from_chart(0, a + t * (b - a)); };
    k.has_param = true;
    k.chart0_bound = std::max(std::abs(a), std::abs(b));
    return k;
  }
};

inline CompactSet make_set(const std::string& spec, double thin_tol) {
  auto name = spec.substr(0, spec.find('('));
  if (name == "all") return CompactSet::whole_sphere();
  auto a = parse_args(spec, name);
  auto center = [&](size_t i) { return a.size() > i ? cplx(a[i], a.size() > i + 1 ? a[i + 1] : 0.0) : cplx{}; };
  if (name == "circle") {
    if (a.empty()) throw ConfigError("circle needs a radius");
    return CompactSet::circle(a[0], center(1), thin_tol);
  }
  if (name == "disk") {
    if (a.empty()) throw ConfigError("disk needs a radius");
    return CompactSet::disk(a[0], center(1));
  }
  if (name == "annulus") {
    if (a.size() < 2) throw ConfigError("annulus needs two radii");
    return CompactSet::annulus(a[0], a[1], center(2));
  }
  if (name == "segment") {
    if (a.size() != 4) throw ConfigError("segment needs (ax,ay,bx,by)");
    return CompactSet::segment(cplx(a[0], a[1]), cplx(a[2], a[3]), thin_tol);
  }
  throw ConfigError("unknown set catalog entry: " + spec);
}

struct SetMask {
  std::array<std::vector<std::uint8_t>, 2> on;
  int count = 0;
  bool at(const SphereGrid& g, int c, int ix, int iy) const { return on[c][g.idx(ix, iy)] != 0; }
};

inline SetMask rasterize(const CompactSet& K, const SphereGrid& g) {
  SetMask m;
  for (int c = 0; c < 2; ++c) {
    m.on[c].assign(g.node_count(), 0);
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix)
        if (K.member(ProjPoint::from_chart(c, g.node(ix, iy)))) {
          m.on[c][g.idx(ix, iy)] = 1;
          ++m.count;
        }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Mildness diagnostic

// The diagnostic looks at g = exp(-Q + phi) through a cap: values of
// -Q + phi above log(10) saturate, which keeps g continuous where Q dives to
// -inf while still exposing genuine jumps.  The score is scale free: max
// adjacent-node increment over sqrt(h), normalized by the max of g.
struct MildReport {
  double continuity_score = 0.0;  // normalized; compared against `bound`
  double raw_score = 0.0;
  double max_g = 0.0;
  double finite_area_fraction = 0.0;
  int saturated_nodes = 0;
  bool verdict = false;
};

inline constexpr double kMildExpCap = 2.302585092994046;  // log(10)

inline MildReport mild_check(const Weight& Q, const OmegaSpec& omega, const SphereGrid& g,
                             double bound = 5.0, double area_floor = 0.01) {
  MildReport r;
  int finite_nodes = 0, total = 0;
  std::array<std::vector<double>, 2> gval;
  for (int c = 0; c < 2; ++c) {
    gval[c].assign(g.node_count(), 0.0);
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        cplx z = g.node(ix, iy);
        double q = Q.eval_chart(c, z);
        if (std::isnan(q)) throw ConfigError("weight evaluates to NaN at a grid node");
        ++total;
        if (q < kInf) ++finite_nodes;
        double e = -q + omega.potential(c, z);
        if (e >= kMildExpCap) ++r.saturated_nodes;
        gval[c][g.idx(ix, iy)] = q == kInf ? 0.0 : std::exp(std::min(e, kMildExpCap));
        r.max_g = std::max(r.max_g, gval[c][g.idx(ix, iy)]);
      }
  }
  double worst = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        double a = gval[c][g.idx(ix, iy)];
        if (ix + 1 <= g.n_cells) worst = std::max(worst, std::abs(a - gval[c][g.idx(ix + 1, iy)]));
        if (iy + 1 <= g.n_cells) worst = std::max(worst, std::abs(a - gval[c][g.idx(ix, iy + 1)]));
      }
  r.raw_score = worst / std::sqrt(g.h);
  r.continuity_score = r.max_g > 0 ? r.raw_score / r.max_g : 0.0;
  r.finite_area_fraction = total ? double(finite_nodes) / total : 0.0;
  r.verdict = r.continuity_score <= bound && r.finite_area_fraction >= area_floor;
  return r;
}

// ---------------------------------------------------------------------------
// Affine <-> projective translation

inline double affine_weight_value(const Weight& Q, const ProjPoint& p) {
  if (p.z0 == cplx{}) throw DomainError("affine weight undefined at the point at infinity");
  return Q.eval(p) - fs_potential(p.coord(0));
}

inline std::function<double(cplx)> translate_weight_to_affine(const Weight& Q) {
  return [Q](cplx z) { return affine_weight_value(Q, ProjPoint::from_chart(0, z)); };
}

struct TranslateReport {
  double liminf_estimate = 0.0;  // value assigned at the point at infinity
  bool capped = false;           // estimate diverged (reported +inf)
};

// Q([1:z]) = q(z) + (1/2)log(1+|z|^2); the value at [0:1] is a liminf
// estimate over rings |z| = 2^k with 8 phase samples each.  A ring sequence
// still climbing at the largest radii is classified as +inf.
inline Weight translate_weight_to_projective(const std::function<double(cplx)>& q,
                                             TranslateReport* report = nullptr) {
  constexpr int kMaxRing = 40, kPhases = 8;
  double prev10 = 0.0, last = 0.0, second_last = 0.0;
  for (int k = 1; k <= kMaxRing; ++k) {
    double ring = kInf;
    for (int j = 0; j < kPhases; ++j) {
      cplx z = std::polar(std::ldexp(1.0, k), 2.0 * kPi * (j + 0.5) / kPhases);
      ring = std::min(ring, q(z) + fs_potential(z));
    }
    if (k == kMaxRing - 10) prev10 = ring;
    if (k == kMaxRing - 1) second_last = ring;
    if (k == kMaxRing) last = ring;
  }
  double est = std::min(second_last, last);
  bool diverged = (last - prev10 > 2.0) || est >= kValueCap;
  double at_inf = diverged ? kInf : std::max(est, -kValueCap);
  if (report) *report = {diverged ? est : at_inf, diverged};
  return {[q, at_inf](const ProjPoint& p) {
            if (p.z0 == cplx{}) return at_inf;
            cplx z = p.coord(0);
            return q(z) + fs_potential(z);
          },
          "projective(q)"};
}

// ---------------------------------------------------------------------------
// Gauge data

// A gauge xi stores its node samples together with their exact five-point
// Laplacian, so the shifted density rho + lap(xi) satisfies the discrete
// identities of the solver to solver tolerance rather than to O(h^2).
struct GaugeFunction {
  GridField xi;
  GridField laplacian_xi;

  static GaugeFunction from_function(const SphereGrid& g,
                                     const std::function<double(int, cplx)>& f) {
    GaugeFunction out{GridField(g, f), GridField(g, 0.0)};
    for (int c = 0; c < 2; ++c)
      for (int iy = 1; iy < g.n_cells; ++iy)
        for (int ix = 1; ix < g.n_cells; ++ix)
          out.laplacian_xi.at(c, ix, iy) = laplacian_at(out.xi, c, ix, iy);
    return out;
  }
  static GaugeFunction zero(const SphereGrid& g) {
    return {GridField(g, 0.0), GridField(g, 0.0)};
  }
};

struct GaugeShift {
  Weight weight;          // Q + d*xi
  OmegaSpec omega_prime;  // omega + d*ddc(xi), densities rho + d*lap(xi)
};

// Shift weight and reference form together by direction d:
//   weight Q + d*xi,  companion omega + d*ddc(xi).
// The exchange identity these satisfy is
//   V_{K, omega + d ddc(xi), Q} = V_{K, omega, Q + d xi} - d*xi
// (substituting u -> u + d*xi is a bijection of the competitor classes).
// The companion form must stay nonnegative at interior nodes.
inline GaugeShift gauge_shift(const Weight& Q, const GaugeFunction& xi, int direction,
                              const OmegaSpec& omega) {
  if (direction != 1 && direction != -1) throw ConfigError("gauge direction must be +1 or -1");
  const auto& g = xi.xi.grid;
  double sgn = direction;
  for (int c = 0; c < 2; ++c)
    for (int iy = 1; iy < g.n_cells; ++iy)
      for (int ix = 1; ix < g.n_cells; ++ix) {
        cplx z = g.node(ix, iy);
        if (!finite(xi.xi.at(c, ix, iy)))
          throw InvalidGaugeError("gauge must be finite on the grid");
        if (omega.density(c, z) + sgn * xi.laplacian_xi.at(c, ix, iy) < 0.0)
          throw InvalidGaugeError("gauge makes the shifted form negative at a grid node");
      }
  auto base = Q.evaluator;
  auto xfield = std::make_shared<GridField>(xi.xi);
  Weight shifted{[base, xfield, sgn](const ProjPoint& p) {
                   double q = base(p);
                   if (!finite(q)) return q;
                   return q + sgn * xfield->interp_point(p);
                 },
                 Q.label + (direction > 0 ? "+xi" : "-xi")};

  auto lap = std::make_shared<GridField>(xi.laplacian_xi);
  OmegaSpec prime;
  prime.label = omega.label + (direction > 0 ? "+ddc(xi)" : "-ddc(xi)");
  prime.potential0 = [omega, xfield, sgn](cplx z) {
    return omega.potential(0, z) + sgn * xfield->interp(0, z);
  };
  prime.potential1 = [omega, xfield, sgn](cplx z) {
    return omega.potential(1, z) + sgn * xfield->interp(1, z);
  };
  prime.density0 = [omega, lap, sgn](cplx z) { return omega.density(0, z) + sgn * lap->interp(0, z); };
  prime.density1 = [omega, lap, sgn](cplx z) { return omega.density(1, z) + sgn * lap->interp(1, z); };
  return {std::move(shifted), std::move(prime)};
}

}  // namespace plurigreen
