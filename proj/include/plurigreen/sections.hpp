#pragma once

// Polynomial-family approach to the weighted envelope: degree-n families of
// renormalized Lagrange sections on weighted Leja nodes, a linear-programming
// oracle for the exact discrete optimum, and the lift of a converged envelope
// to the dual line bundle.
//
// The family for degree n consists of the n+1 Lagrange cardinals scaled by the
// allowance M_n = exp(n (Q+phi)) at their node, plus the Lagrange interpolant
// of the allowance itself. Every member is renormalized so that
//   max over K_sample of |p~| exp(-n (Q+phi)) <= 1,
// which makes (1/n) log sup over the family a certified lower bound for the
// sample-constrained optimum at every point. Evaluation works in log scale
// throughout so degree 40 on small sets stays in range.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "plurigreen/relax.hpp"

namespace plurigreen {

// degree-n polynomial in the chart-0 coordinate; coeffs[j] multiplies z^j.
// The chart-1 representative of the same degree-n section has the coefficient
// order reversed: p1(w) = sum_j coeffs[j] w^{n-j}.
struct Polynomial {
  std::vector<cplx> coeffs;

  int degree() const { return int(coeffs.size()) - 1; }

  cplx eval_chart(int chart, cplx zeta) const {
    if (coeffs.empty()) return 0.0;
    cplx acc = 0.0;
    if (chart == 0) {
      for (int j = degree(); j >= 0; --j) acc = acc * zeta + coeffs[j];
    } else {
      for (int j = 0; j <= degree(); ++j) acc = acc * zeta + coeffs[j];
    }
    return acc;
  }

  // log of the metric norm |p| exp(-n phi_chart); chart representatives agree
  // on the overlap because the potentials satisfy the log|z| cocycle
  double log_norm(int chart, cplx zeta, const OmegaSpec& omega) const {
    double a = std::abs(eval_chart(chart, zeta));
    if (a == 0.0) return -kInf;
    return std::log(a) - degree() * omega.potential(chart, zeta);
  }
};

namespace detail {

inline std::vector<int> leja_indices(const std::vector<cplx>& sample,
                                     const std::vector<double>& u, int count) {
  int m = int(sample.size());
  if (count < 1) throw ConfigError("node count must be positive");
  for (double w : u)
    if (!finite(w)) throw ConfigError("node weight must be finite on the sample");
  {
    std::vector<cplx> s = sample;
    std::sort(s.begin(), s.end(), [](cplx a, cplx b) {
      return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    int distinct = s.empty() ? 0 : 1;
    for (size_t i = 1; i < s.size(); ++i)
      if (s[i] != s[i - 1]) ++distinct;
    if (distinct < count)
      throw ConfigError("fewer distinct sample points than requested nodes");
  }
  std::vector<int> picked;
  picked.reserve(count);
  picked.push_back(0);  // the step-zero score carries no terms, so every sample ties
  std::vector<double> acc(m, 0.0);
  for (int k = 1; k < count; ++k) {
    cplx prev = sample[picked.back()];
    int best = -1;
    double best_score = -kInf;
    for (int s = 0; s < m; ++s) {
      acc[s] += std::log(std::abs(sample[s] - prev));
      double score = acc[s] - double(k) * u[s];
      if (score > best_score) {
        best_score = score;
        best = s;
      }
    }
    if (best < 0) throw NumericError("node selection degenerated");
    picked.push_back(best);
  }
  return picked;
}

}  // namespace detail

// greedy weighted Leja sequence over the sample: step k maximizes
// sum_{j<k} log|z - node_j| - k * weight_fn(z), ties resolved toward the
// lowest sample index, so the result is deterministic in the sample order
inline std::vector<cplx> leja_nodes(const std::vector<cplx>& sample,
                                    const std::function<double(cplx)>& weight_fn, int count) {
  std::vector<double> u(sample.size());
  for (size_t i = 0; i < sample.size(); ++i) u[i] = weight_fn(sample[i]);
  auto idx = detail::leja_indices(sample, u, count);
  std::vector<cplx> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = sample[idx[i]];
  return out;
}

struct SectionEnvelope {
  int n = 0;
  OmegaSpec omega;
  std::vector<cplx> nodes;         // chart-0 coordinates, n+1 entries
  std::vector<double> log_allow;   // log M_n(node_j) = n (Q+phi)(node_j)
  std::vector<double> log_c;       // log |M_n(node_j) w_j|, w_j barycentric
  std::vector<double> arg_c;       // phase of M_n(node_j) w_j
  std::vector<double> log_norm;    // cardinal normalizers, always >= 0
  double log_norm_interp = 0.0;    // interpolant normalizer, always >= 0
  double lead_interp_log = -kInf;  // log |sum_j M_j w_j|, interpolant leading coefficient
  std::vector<cplx> K_sample;      // chart-0 sample the constraints were enforced on

  // log of the family sup of |p~| in the chart-c representative at zeta;
  // callers route through ProjPoint::chart() so |zeta| <= 1 here
  double rep_log_sup(int chart, cplx zeta) const {
    int cnt = int(nodes.size());
    if (chart == 1 && zeta == cplx(0.0)) {
      // the point at infinity sees only leading coefficients
      double best = lead_interp_log - log_norm_interp;
      for (int j = 0; j < cnt; ++j) best = std::max(best, log_c[j] - log_norm[j]);
      return best;
    }
    for (int j = 0; j < cnt; ++j) {
      cplx fac = chart == 0 ? zeta - nodes[j] : cplx(1.0) - zeta * nodes[j];
      if (std::abs(fac) < 1e-14 * (1.0 + std::abs(nodes[j]))) {
        // at a node the whole family telescopes to the allowance
        double best = log_allow[j] - std::min(log_norm[j], log_norm_interp);
        return best + (chart == 1 ? n * std::log(std::abs(zeta)) : 0.0);
      }
    }
    double t = -kInf;
    for (double lc : log_c) t = std::max(t, lc);
    double T = 0.0;
    cplx S = 0.0;
    double best = -kInf;
    for (int j = 0; j < cnt; ++j) {
      cplx fac = chart == 0 ? zeta - nodes[j] : cplx(1.0) - zeta * nodes[j];
      double lf = std::log(std::abs(fac));
      T += lf;
      best = std::max(best, log_c[j] - log_norm[j] - lf);
      S += std::exp(log_c[j] - t) * cplx(std::cos(arg_c[j]), std::sin(arg_c[j])) / fac;
    }
    best += T;
    double interp = std::abs(S) > 0.0 ? T + t + std::log(std::abs(S)) - log_norm_interp : -kInf;
    return std::max(best, interp);
  }

  // value_n(x) = (1/n) log ( family sup of |p~| exp(-n phi) ) at x; the two
  // chart representatives give the same number by the potential cocycle
  double value(const ProjPoint& x) const {
    auto [c, zeta] = chart_transition(x);
    return rep_log_sup(c, zeta) / double(n) - omega.potential(c, zeta);
  }
};

// running best over a family of degrees
inline double combined_section_value(const std::vector<SectionEnvelope>& family,
                                     const ProjPoint& x) {
  if (family.empty()) throw ConfigError("empty section family");
  double best = -kInf;
  for (const auto& e : family) best = std::max(best, e.value(x));
  return best;
}

namespace detail {

inline std::vector<cplx> section_sample(const CompactSet& K, int target) {
  std::vector<cplx> sample;
  if (K.has_param) {
    sample.reserve(target);
    for (int i = 0; i < target; ++i) {
      double t = K.param_periodic ? double(i) / target : double(i) / (target - 1);
      ProjPoint p = K.param(t);
      if (p.z0 == cplx(0.0))
        throw ConfigError("section sample points must lie inside the first chart");
      sample.push_back(p.z1 / p.z0);
    }
    return sample;
  }
  if (!(K.chart0_bound < kInf))
    throw ConfigError("section envelopes need a set bounded in the first chart");
  double b = K.chart0_bound;
  for (int g = std::max(4, int(std::ceil(std::sqrt(2.0 * target)))); g <= 8192; g *= 2) {
    sample.clear();
    for (int iy = 0; iy < g; ++iy)
      for (int ix = 0; ix < g; ++ix) {
        cplx z(-b + 2.0 * b * (ix + 0.5) / g, -b + 2.0 * b * (iy + 0.5) / g);
        if (K.member(ProjPoint::from_chart(0, z))) sample.push_back(z);
      }
    if (int(sample.size()) >= target) return sample;
  }
  throw ConfigError("set too thin to sample on a lattice; supply a parametrized set");
}

}  // namespace detail

// builds the renormalized degree-n family on weighted Leja nodes; sample_size
// zero picks the 50*n default, floored at 4*(n+1) points either way
inline SectionEnvelope build_section_envelope(const CompactSet& K, const Weight& Q, int n,
                                              int sample_size = 0,
                                              const OmegaSpec& omega = OmegaSpec::fubini_study()) {
  if (n < 1) throw ConfigError("section degree must be at least 1");
  int target = std::max(sample_size > 0 ? sample_size : 50 * n, 4 * (n + 1));
  std::vector<cplx> sample = detail::section_sample(K, target);
  int m = int(sample.size());

  std::vector<double> u(m);
  for (int s = 0; s < m; ++s) {
    u[s] = Q.eval_chart(0, sample[s]) + omega.potential(0, sample[s]);
    if (!finite(u[s])) throw ConfigError("weight must be finite on the section sample");
  }
  auto idx = detail::leja_indices(sample, u, n + 1);

  SectionEnvelope env;
  env.n = n;
  env.omega = omega;
  env.nodes.resize(n + 1);
  env.log_allow.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    env.nodes[j] = sample[idx[j]];
    env.log_allow[j] = double(n) * u[idx[j]];
  }
  env.log_c.resize(n + 1);
  env.arg_c.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    double lb = 0.0, ab = 0.0;
    for (int k = 0; k <= n; ++k) {
      if (k == j) continue;
      cplx d = env.nodes[j] - env.nodes[k];
      lb -= std::log(std::abs(d));
      ab -= std::arg(d);
    }
    env.log_c[j] = env.log_allow[j] + lb;
    env.arg_c[j] = ab;
    if (!finite(env.log_c[j]) || std::abs(env.log_c[j]) > 600.0)
      throw NumericError("section basis is ill conditioned; use a smaller degree or a denser sample");
  }

  double t = -kInf;
  for (double lc : env.log_c) t = std::max(t, lc);
  cplx lead = 0.0;
  for (int j = 0; j <= n; ++j)
    lead += std::exp(env.log_c[j] - t) * cplx(std::cos(env.arg_c[j]), std::sin(env.arg_c[j]));
  env.lead_interp_log = std::abs(lead) > 0.0 ? t + std::log(std::abs(lead)) : -kInf;

  // renormalizers: sup over non-node samples; at the nodes themselves every
  // member equals the allowance exactly, contributing nothing above zero
  std::vector<char> is_node(m, 0);
  for (int i : idx) is_node[i] = 1;
  env.log_norm.assign(n + 1, 0.0);
  env.log_norm_interp = 0.0;
  std::vector<double> lf(n + 1);
  for (int s = 0; s < m; ++s) {
    if (is_node[s]) continue;
    double T = 0.0;
    cplx S = 0.0;
    for (int j = 0; j <= n; ++j) {
      cplx fac = sample[s] - env.nodes[j];
      lf[j] = std::log(std::abs(fac));
      T += lf[j];
      S += std::exp(env.log_c[j] - t) * cplx(std::cos(env.arg_c[j]), std::sin(env.arg_c[j])) / fac;
    }
    for (int j = 0; j <= n; ++j)
      env.log_norm[j] = std::max(env.log_norm[j], env.log_c[j] + T - lf[j] - double(n) * u[s]);
    if (std::abs(S) > 0.0)
      env.log_norm_interp =
          std::max(env.log_norm_interp, T + t + std::log(std::abs(S)) - double(n) * u[s]);
  }
  env.K_sample = std::move(sample);
  return env;
}

struct PhiOracleResult {
  double value = 0.0;         // (1/n) log of the certified bound, metric-normalized
  double phase_factor = 1.0;  // sec(pi/m), already folded into value
  int lp_iterations = 0;
};

namespace detail {

struct DenseLU {
  int d;
  std::vector<double> a;  // row-major, overwritten by the factorization
  std::vector<int> swaps;

  bool factor() {
    swaps.assign(d, 0);
    for (int col = 0; col < d; ++col) {
      int p = col;
      double best = std::abs(a[col * d + col]);
      for (int r = col + 1; r < d; ++r) {
        double v = std::abs(a[r * d + col]);
        if (v > best) {
          best = v;
          p = r;
        }
      }
      if (!(best > 1e-13)) return false;
      swaps[col] = p;
      if (p != col)
        for (int c2 = 0; c2 < d; ++c2) std::swap(a[col * d + c2], a[p * d + c2]);
      for (int r = col + 1; r < d; ++r) {
        double f = a[r * d + col] / a[col * d + col];
        a[r * d + col] = f;
        for (int c2 = col + 1; c2 < d; ++c2) a[r * d + c2] -= f * a[col * d + c2];
      }
    }
    return true;
  }

  void solve(std::vector<double>& x) const {
    for (int col = 0; col < d; ++col)
      if (swaps[col] != col) std::swap(x[col], x[swaps[col]]);
    for (int r = 1; r < d; ++r)
      for (int c = 0; c < r; ++c) x[r] -= a[r * d + c] * x[c];
    for (int r = d - 1; r >= 0; --r) {
      for (int c = r + 1; c < d; ++c) x[r] -= a[r * d + c] * x[c];
      x[r] /= a[r * d + r];
    }
  }
};

struct LpOutcome {
  double value = 0.0;
  int iterations = 0;
};

// minimize sum_q lambda_q cost(q) over lambda >= 0 subject to
// sum_q lambda_q col(q) = rhs; this is the dual of the few-variable primal
// max c.y s.t. A y <= b, so its optimum equals the primal optimum.
// Two-phase revised simplex with a dense basis, Dantzig pricing, and a Bland
// fallback once progress stalls.
inline LpOutcome solve_dual_lp(int d, int ncols,
                               const std::function<void(int, double*)>& col_fn,
                               const std::function<double(int)>& cost_fn,
                               const std::vector<double>& rhs) {
  std::vector<int> basis(d);
  std::vector<double> art_sign(d);
  for (int i = 0; i < d; ++i) {
    basis[i] = ncols + i;
    art_sign[i] = rhs[i] >= 0.0 ? 1.0 : -1.0;
  }
  auto get_col = [&](int q, double* out) {
    if (q >= ncols) {
      std::fill(out, out + d, 0.0);
      out[q - ncols] = art_sign[q - ncols];
    } else {
      col_fn(q, out);
    }
  };
  double cost_scale = 1.0, rhs_scale = 0.0;
  for (int q = 0; q < ncols; ++q) cost_scale = std::max(cost_scale, std::abs(cost_fn(q)));
  for (double r : rhs) rhs_scale = std::max(rhs_scale, std::abs(r));

  std::vector<double> colbuf(d), xB(d), cB(d), pi(d), w(d);
  int iters = 0;
  for (int phase = 1; phase <= 2; ++phase) {
    bool bland = false;
    int stall = 0;
    double last_obj = kInf;
    for (;;) {
      if (++iters > 50000)
        throw NumericError("optimization oracle exceeded its iteration budget");
      std::vector<double> B(d * d), BT(d * d);
      for (int i = 0; i < d; ++i) {
        get_col(basis[i], colbuf.data());
        for (int r = 0; r < d; ++r) {
          B[r * d + i] = colbuf[r];
          BT[i * d + r] = colbuf[r];
        }
      }
      DenseLU luB{d, std::move(B), {}};
      DenseLU luT{d, std::move(BT), {}};
      if (!luB.factor() || !luT.factor())
        throw NumericError("optimization oracle basis became singular");
      xB = rhs;
      luB.solve(xB);
      for (int i = 0; i < d; ++i)
        cB[i] = basis[i] >= ncols ? (phase == 1 ? 1.0 : 0.0)
                                  : (phase == 1 ? 0.0 : cost_fn(basis[i]));
      pi = cB;
      luT.solve(pi);
      double obj = 0.0;
      for (int i = 0; i < d; ++i) obj += cB[i] * xB[i];

      double tol = 1e-9 * (phase == 1 ? 1.0 + rhs_scale : cost_scale);
      int enter = -1;
      double best_red = 0.0;
      for (int q = 0; q < ncols; ++q) {
        get_col(q, colbuf.data());
        double red = phase == 1 ? 0.0 : cost_fn(q);
        for (int r = 0; r < d; ++r) red -= pi[r] * colbuf[r];
        if (red < -tol) {
          if (bland) {
            enter = q;
            break;
          }
          if (enter < 0 || red < best_red) {
            enter = q;
            best_red = red;
          }
        }
      }
      if (enter < 0) {
        if (phase == 1) {
          double infeas = 0.0;
          for (int i = 0; i < d; ++i)
            if (basis[i] >= ncols) infeas += std::max(xB[i], 0.0);
          if (infeas > 1e-7 * (1.0 + rhs_scale))
            throw NumericError("sample too sparse to bound this degree; enlarge the sample");
          break;
        }
        double val = 0.0;
        for (int i = 0; i < d; ++i)
          if (basis[i] < ncols) val += cost_fn(basis[i]) * xB[i];
        return {val, iters};
      }

      get_col(enter, w.data());
      luB.solve(w);
      int leave = -1;
      double best_ratio = kInf;
      for (int i = 0; i < d; ++i) {
        if (w[i] <= 1e-11) continue;
        double ratio = std::max(xB[i], 0.0) / w[i];
        bool better = leave < 0 || ratio < best_ratio - 1e-12;
        bool tied = leave >= 0 && ratio <= best_ratio + 1e-12;
        // on ties prefer ejecting artificials, then the lowest variable index
        if (tied && !better) {
          bool cand_art = basis[i] >= ncols, cur_art = basis[leave] >= ncols;
          if (cand_art != cur_art)
            better = cand_art;
          else
            better = basis[i] < basis[leave];
        }
        if (better) {
          leave = i;
          best_ratio = std::min(best_ratio, ratio);
        }
      }
      if (leave < 0) throw NumericError("optimization oracle lost boundedness numerically");
      basis[leave] = enter;

      if (obj > last_obj - 1e-12 * (1.0 + std::abs(obj))) {
        if (++stall > 300) bland = true;
      } else {
        stall = 0;
      }
      last_obj = obj;
    }
  }
  throw NumericError("optimization oracle fell through");  // unreachable
}

}  // namespace detail

// Exact discrete optimum for degree n at a chart-0 point x: maximizes
// Re(exp(i theta) p(x)) over coefficient vectors subject to the m-phase
// linearization Re(exp(i psi_k) p(z)) <= M_n(z) for every sample point,
// sweeping theta over the same m phases. The polygon relaxation admits
// polynomials up to a factor sec(pi/m) above the true constraint, so that
// factor is folded into the returned value, making it a certified upper bound
// for the sample-constrained optimum (and for every renormalized family
// member in particular).
inline PhiOracleResult oracle_phi_n(const std::vector<cplx>& K_sample, const Weight& Q, int n,
                                    cplx x, int phases,
                                    const OmegaSpec& omega = OmegaSpec::fubini_study()) {
  if (n < 1 || n > 20) throw ConfigError("oracle degree must be between 1 and 20");
  if (phases < 32) throw ConfigError("oracle needs at least 32 phases");
  int S = int(K_sample.size()), m = phases, d = 2 * (n + 1);
  if (S < n + 1) throw ConfigError("sample smaller than the coefficient count");

  std::vector<double> M(S);
  std::vector<cplx> pw(size_t(S) * (n + 1));
  for (int s = 0; s < S; ++s) {
    double u = Q.eval_chart(0, K_sample[s]) + omega.potential(0, K_sample[s]);
    if (!finite(u)) throw ConfigError("weight must be finite on the oracle sample");
    double e = double(n) * u;
    if (e > 600.0) throw NumericError("allowance overflows the optimization oracle");
    M[s] = std::exp(e);
    cplx p = 1.0;
    for (int j = 0; j <= n; ++j) {
      pw[size_t(s) * (n + 1) + j] = p;
      p *= K_sample[s];
    }
  }

  auto fill_col = [&](int q, double* out) {
    int s = q / m, k = q % m;
    cplx ph = std::polar(1.0, 2.0 * kPi * k / m);
    for (int j = 0; j <= n; ++j) {
      cplx a = ph * pw[size_t(s) * (n + 1) + j];
      out[2 * j] = a.real();
      out[2 * j + 1] = -a.imag();
    }
  };
  auto cost = [&](int q) { return M[q / m]; };

  std::vector<cplx> xp(n + 1);
  {
    cplx p = 1.0;
    for (int j = 0; j <= n; ++j) {
      xp[j] = p;
      p *= x;
    }
  }

  double best = -kInf;
  int iters = 0;
  for (int k = 0; k < m; ++k) {
    cplx ph = std::polar(1.0, 2.0 * kPi * k / m);
    std::vector<double> rhs(d);
    for (int j = 0; j <= n; ++j) {
      cplx a = ph * xp[j];
      rhs[2 * j] = a.real();
      rhs[2 * j + 1] = -a.imag();
    }
    auto out = detail::solve_dual_lp(d, S * m, fill_col, cost, rhs);
    iters += out.iterations;
    best = std::max(best, out.value);
  }

  PhiOracleResult r;
  r.phase_factor = 1.0 / std::cos(kPi / m);
  r.lp_iterations = iters;
  r.value = best > 0.0
                ? (std::log(best) + std::log(r.phase_factor)) / double(n) - omega.potential(0, x)
                : -kInf;
  return r;
}

// point of the dual line bundle in a chart trivialization; over [Z0:Z1] the
// fiber coordinate transforms by t1 = (Z1/Z0) t0
struct FiberPoint {
  ProjPoint base;
  cplx t{};
  int chart = 0;

  FiberPoint to_chart(int target) const {
    if (target != 0 && target != 1) throw ConfigError("chart must be 0 or 1");
    if (target == chart) return *this;
    cplx denom = chart == 0 ? base.z0 : base.z1;
    cplx numer = chart == 0 ? base.z1 : base.z0;
    if (denom == cplx(0.0) || numer == cplx(0.0))
      throw DomainError("fiber transition undefined where a chart misses the base point");
    return {base, t * (numer / denom), target};
  }
};

// lift of a converged envelope to the dual bundle:
//   H(x, t; chart i) = V(x) + log|t| + phi_i(x)
// log-homogeneous in the fiber by construction; t = 0 maps to -inf
struct BundleLift {
  GridField V;
  OmegaSpec omega;

  double value(const FiberPoint& f) const {
    if (f.chart != 0 && f.chart != 1) throw ConfigError("chart must be 0 or 1");
    cplx denom = f.chart == 0 ? f.base.z0 : f.base.z1;
    if (denom == cplx(0.0))
      throw DomainError("trivialization chart does not cover the base point");
    if (f.t == cplx(0.0)) return -kInf;
    cplx zeta = (f.chart == 0 ? f.base.z1 : f.base.z0) / denom;
    return V.interp_point(f.base) + std::log(std::abs(f.t)) + omega.potential(f.chart, zeta);
  }
};

inline BundleLift lift_to_bundle(const EnvelopeResult& res, const OmegaSpec& omega) {
  if (!res.converged) throw ConfigError("bundle lift needs a converged envelope");
  return {res.V, omega};
}

}  // namespace plurigreen
