#pragma once
// Obstacle-problem relaxation for weighted envelopes on the two-chart grid.
//
// The discrete envelope is the largest grid function v with
//   v <= Q at K-masked nodes   and   lap_h(v) + rho >= 0 at interior nodes,
// equivalently v <= neighbor_average(v) + (h^2/4) rho.  Two solution modes:
//
//   psor      projected successive over-relaxation (red-black order), valid
//             from any start; default.
//   monotone  pure downward iteration v <- min(v, target, Q) from a constant
//             start above the envelope; each sweep is nodewise non-increasing.
//             Slow (no over-relaxation), intended for cross-checks on small
//             grids.
//
// Both modes finish with downward-only certification passes so the two
// defining inequalities hold exact-sided in the arithmetic of the final
// field, not merely up to the stop tolerance.  Charts couple only through
// their boundary rings, which are closure data interpolated from the other
// chart (alternating Schwarz); interior overlap nodes remain independent
// unknowns and their residual disagreement is reported, never forced.

#include <atomic>
#include <barrier>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "plurigreen/core.hpp"
#include "plurigreen/weights.hpp"

namespace plurigreen {

enum class RelaxMode { psor, monotone };

struct SolveOptions {
  double update_tol = 1e-9;
  long max_sweeps = 1000000;
  int sync_interval = 16;     // sweeps between seam exchanges
  double sor_omega = 0.0;     // 0 -> 2/(1+sin(pi/n_cells))
  RelaxMode mode = RelaxMode::psor;
  double value_cap = kValueCap;
  int threads = 1;
  int certify_sweeps = 128;   // cap on final downward certification passes
};

struct EnvelopeResult {
  GridField V;
  GridField rho;  // density samples used by the run
  SetMask mask;
  long iterations = 0;
  double final_update = 0.0;
  double seam_discrepancy = 0.0;
  double ma_mass_total = 0.0;
  double min_psh_residual = 0.0;    // min over interior of lap_h(V) + rho
  double max_obstacle_excess = 0.0;  // max over K of V - capped Q
  bool converged = false;
  bool certified = false;  // a certification pass completed with zero changes
  struct Meta {
    std::string weight_label, omega_label, mode;
    double value_cap = kValueCap, start_value = 0.0, sor_omega = 0.0;
    int threads = 1;
  } meta;
};

namespace detail {

// Obstacle values: capped Q at K nodes, +inf (no constraint) elsewhere.
inline GridField obstacle_field(const Weight& Q, const SetMask& mask, const SphereGrid& g,
                                double cap) {
  GridField obs(g, kInf);
  int finite_on_K = 0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        if (!mask.at(g, c, ix, iy)) continue;
        double q = Q.eval_chart(c, g.node(ix, iy));
        if (std::isnan(q)) throw ConfigError("weight evaluates to NaN on K");
        if (q < kInf) {
          obs.at(c, ix, iy) = std::clamp(q, -cap, cap);
          ++finite_on_K;
        }
      }
  if (finite_on_K == 0) throw ConfigError("weight is +inf on every node of K");
  return obs;
}

// Ring nodes of each chart are closure data interpolated from the other
// chart's interior (every ring node lands in the far chart's interior
// because |z| >= half_width implies |1/z| <= 1/half_width).  Interior
// overlap nodes stay independent unknowns of their own chart; their residual
// disagreement is what seam_discrepancy reports.  Values are staged in a
// buffer so the exchange is order-independent.
struct RingClosure {
  struct Entry {
    int chart, id;
    cplx mirror;  // 1/z, the point in the other chart
  };
  std::vector<Entry> entries;
  std::vector<double> staged;

  explicit RingClosure(const SphereGrid& g) {
    for (int c = 0; c < 2; ++c)
      for (int iy = 0; iy < g.nodes(); ++iy)
        for (int ix = 0; ix < g.nodes(); ++ix)
          if (g.ring(ix, iy)) entries.push_back({c, g.idx(ix, iy), 1.0 / g.node(ix, iy)});
    staged.resize(entries.size());
  }
  // returns the largest ring change; obstacles are re-imposed on K ring nodes
  double exchange(GridField& v, const GridField& obs) {
    for (size_t i = 0; i < entries.size(); ++i)
      staged[i] = v.interp(1 - entries[i].chart, entries[i].mirror);
    double delta = 0.0;
    for (size_t i = 0; i < entries.size(); ++i) {
      double& cur = v.v[entries[i].chart][entries[i].id];
      double next = std::min(staged[i], obs.v[entries[i].chart][entries[i].id]);
      if (next != cur) {
        delta = std::max(delta, std::abs(next - cur));
        cur = next;
      }
    }
    return delta;
  }
};

}  // namespace detail

inline EnvelopeResult solve_envelope(const CompactSet& K, const Weight& Q, const OmegaSpec& omega,
                                     const SphereGrid& g, const SolveOptions& opts = {}) {
  auto mask = rasterize(K, g);
  if (mask.count == 0) throw ConfigError("set K misses every grid node");
  GridField obs = detail::obstacle_field(Q, mask, g, opts.value_cap);
  GridField rho(g, [&](int c, cplx z) { return omega.density(c, z); });
  for (int c = 0; c < 2; ++c)
    for (double r : rho.v[c])
      if (!finite(r) || r < 0) throw ConfigError("omega density must be finite and nonnegative");

  double start = -kInf;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix)
        if (mask.at(g, c, ix, iy) && obs.at(c, ix, iy) < kInf)
          start = std::max(start, obs.at(c, ix, iy));
  bool monotone = opts.mode == RelaxMode::monotone;
  if (monotone) start += 2.0 * std::log(double(g.n_cells)) + 4.0;  // clear the envelope from above

  EnvelopeResult res;
  res.V = GridField(g, start);
  res.rho = rho;
  res.mask = mask;
  res.meta.weight_label = Q.label;
  res.meta.omega_label = omega.label;
  res.meta.mode = monotone ? "monotone" : "psor";
  res.meta.value_cap = opts.value_cap;
  res.meta.start_value = start;
  res.meta.threads = std::max(1, opts.threads);

  double w = opts.sor_omega > 0 ? opts.sor_omega : 2.0 / (1.0 + std::sin(kPi / g.n_cells));
  if (monotone) w = 1.0;
  res.meta.sor_omega = w;
  const double hh4 = 0.25 * g.h * g.h;
  const int n = g.nodes();
  GridField& V = res.V;
  detail::RingClosure seam(g);

  const int nthreads = res.meta.threads;
  // contiguous interior row bands per thread; reductions combined in band order
  std::vector<std::pair<int, int>> bands;
  {
    int rows = g.n_cells - 1, base = rows / nthreads, extra = rows % nthreads;
    int row = 1;
    for (int t = 0; t < nthreads; ++t) {
      int len = base + (t < extra ? 1 : 0);
      bands.push_back({row, row + len});
      row += len;
    }
  }
  std::vector<double> band_update(nthreads, 0.0);

  // one red-black sweep over the band's rows of one chart; returns max change
  auto sweep_band = [&](int c, int row0, int row1, int color, bool own_min) {
    double upd = 0.0;
    const std::vector<double>& o = obs.v[c];
    std::vector<double>& x = V.v[c];
    const std::vector<double>& r = rho.v[c];
    for (int iy = row0; iy < row1; ++iy) {
      int ix0 = 1 + ((iy + 1 + color) & 1);
      for (int ix = ix0; ix < g.n_cells; ix += 2) {
        int id = iy * n + ix;
        double target = 0.25 * (x[id - 1] + x[id + 1] + x[id - n] + x[id + n]) + hh4 * r[id];
        double cur = x[id];
        double next;
        if (own_min)
          next = std::min({cur, target, o[id]});
        else
          next = std::min(cur + w * (target - cur), o[id]);
        if (next != cur) {
          upd = std::max(upd, std::abs(next - cur));
          x[id] = next;
        }
      }
    }
    return upd;
  };

  long sweeps = 0;
  double last_update = kInf, last_seam_delta = kInf;
  bool done = false;

  auto run_phase = [&](bool own_min, long phase_cap, bool stop_on_zero) {
    // worker pool; barrier phases: (sweep colors) x charts, then reduction
    long phase_sweeps = 0;
    std::barrier bar(nthreads);
    std::atomic<bool> stop{false};
    auto worker = [&](int t) {
      auto [row0, row1] = bands[t];
      while (!stop.load(std::memory_order_relaxed)) {
        double upd = 0.0;
        for (int color = 0; color < 2; ++color) {
          for (int c = 0; c < 2; ++c) upd = std::max(upd, sweep_band(c, row0, row1, color, own_min));
          bar.arrive_and_wait();  // color complete in both charts before the next
        }
        band_update[t] = upd;
        bar.arrive_and_wait();
        if (t == 0) {
          double total = 0.0;
          for (double u : band_update) total = std::max(total, u);
          last_update = total;
          ++sweeps;
          ++phase_sweeps;
          bool sync_now = phase_sweeps % opts.sync_interval == 0 || total < opts.update_tol ||
                          (stop_on_zero && total == 0.0) || phase_sweeps >= phase_cap;
          if (sync_now) {
            last_seam_delta = seam.exchange(V, obs);
            bool converged_now = stop_on_zero
                                     ? (total == 0.0 && last_seam_delta == 0.0)
                                     : (total < opts.update_tol && last_seam_delta < opts.update_tol);
            if (converged_now || phase_sweeps >= phase_cap) {
              done = converged_now;
              stop.store(true, std::memory_order_relaxed);
            }
          }
        }
        bar.arrive_and_wait();  // everyone sees seam + stop decision
      }
    };
    done = false;
    if (nthreads == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
      for (auto& th : pool) th.join();
    }
    return done;
  };

  res.converged = run_phase(monotone, opts.max_sweeps, /*stop_on_zero=*/false);
  res.iterations = sweeps;
  res.final_update = last_update;

  // certification: downward interior passes; a pass with zero changes and a
  // zero ring exchange proves v <= target and v <= Q exactly at every node
  res.certified = run_phase(/*own_min=*/true, opts.certify_sweeps, /*stop_on_zero=*/true);

  // measured certificates and mass
  res.min_psh_residual = kInf;
  res.max_obstacle_excess = -kInf;
  double mass = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        if (g.interior(ix, iy)) {
          double resid = laplacian_at(V, c, ix, iy) + rho.at(c, ix, iy);
          res.min_psh_residual = std::min(res.min_psh_residual, resid);
          double pw = pou_weight(g, g.node(ix, iy));
          if (pw > 0) mass += pw * resid * g.h * g.h;
        }
        if (mask.at(g, c, ix, iy) && obs.at(c, ix, iy) < kInf)
          res.max_obstacle_excess =
              std::max(res.max_obstacle_excess, V.at(c, ix, iy) - obs.at(c, ix, iy));
      }
  res.ma_mass_total = mass;
  res.seam_discrepancy = seam_discrepancy(V);
  return res;
}

// ---------------------------------------------------------------------------
// Monge-Ampere residual accounting

struct MaResidualReport {
  double off_K_max_residual = 0.0;
  double total_mass = 0.0;
  double mass_on_K_fraction = 0.0;
};

namespace detail {
// nodes within `steps` Chebyshev cells of the mask
inline std::array<std::vector<std::uint8_t>, 2> dilate_mask(const SetMask& m, const SphereGrid& g,
                                                            int steps) {
  auto cur = m.on;
  for (int s = 0; s < steps; ++s) {
    auto next = cur;
    for (int c = 0; c < 2; ++c)
      for (int iy = 0; iy < g.nodes(); ++iy)
        for (int ix = 0; ix < g.nodes(); ++ix) {
          if (cur[c][g.idx(ix, iy)]) continue;
          for (int dy = -1; dy <= 1 && !next[c][g.idx(ix, iy)]; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int jx = ix + dx, jy = iy + dy;
              if (jx < 0 || jy < 0 || jx >= g.nodes() || jy >= g.nodes()) continue;
              if (cur[c][g.idx(jx, jy)]) {
                next[c][g.idx(ix, iy)] = 1;
                break;
              }
            }
        }
    cur = std::move(next);
  }
  return cur;
}
}  // namespace detail

inline MaResidualReport ma_residual(const EnvelopeResult& r, int halo_cells = 3) {
  const auto& g = r.V.grid;
  auto near_K = detail::dilate_mask(r.mask, g, halo_cells);
  MaResidualReport rep;
  double near_mass = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 1; iy < g.n_cells; ++iy)
      for (int ix = 1; ix < g.n_cells; ++ix) {
        double resid = laplacian_at(r.V, c, ix, iy) + r.rho.at(c, ix, iy);
        double pw = pou_weight(g, g.node(ix, iy));
        double dm = pw * resid * g.h * g.h;
        rep.total_mass += dm;
        if (near_K[c][g.idx(ix, iy)])
          near_mass += dm;
        else
          rep.off_K_max_residual = std::max(rep.off_K_max_residual, std::abs(resid));
      }
  rep.mass_on_K_fraction = rep.total_mass != 0.0 ? near_mass / rep.total_mass : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Property drivers

struct DominationReport {
  double hypothesis_mass = 0.0;
  double min_gap = 0.0;
  bool consistent = false;
};

// Checks the implication "no mass on {u < v}  =>  u >= v" on finite fields.
inline DominationReport domination_check(const GridField& u, const GridField& v,
                                         const OmegaSpec& omega, double tol) {
  const auto& g = u.grid;
  if (v.grid.n_cells != g.n_cells) throw ConfigError("domination_check needs matching grids");
  GridField rho(g, [&](int c, cplx z) { return omega.density(c, z); });
  for (int c = 0; c < 2; ++c)
    for (int iy = 1; iy < g.n_cells; ++iy)
      for (int ix = 1; ix < g.n_cells; ++ix)
        for (const GridField* f : {&u, &v})
          if (laplacian_at(*f, c, ix, iy) + rho.at(c, ix, iy) < -tol)
            throw ConfigError("domination_check inputs must be discretely omega-subharmonic");

  DominationReport rep;
  rep.min_gap = kInf;
  for (int c = 0; c < 2; ++c)
    for (int iy = 1; iy < g.n_cells; ++iy)
      for (int ix = 1; ix < g.n_cells; ++ix) {
        double gap = u.at(c, ix, iy) - v.at(c, ix, iy);
        rep.min_gap = std::min(rep.min_gap, gap);
        if (gap < -tol) {
          double pw = pou_weight(g, g.node(ix, iy));
          rep.hypothesis_mass +=
              pw * (laplacian_at(u, c, ix, iy) + rho.at(c, ix, iy)) * g.h * g.h;
        }
      }
  rep.consistent = !(rep.hypothesis_mass <= tol && rep.min_gap < -10.0 * tol);
  return rep;
}

struct SweepEntry {
  int n = 0;
  double sup_diff_to_limit = 0.0;
  double monotonicity_violation = 0.0;
};

enum class SweepDirection { up, down };

// Envelopes along a monotone weight schedule Q_0, Q_1, ... -> Q_limit.
inline std::vector<SweepEntry> monotone_weight_sweep(const CompactSet& K, const Weight& Q_limit,
                                                     const OmegaSpec& omega, const SphereGrid& g,
                                                     const std::vector<Weight>& schedule,
                                                     SweepDirection dir,
                                                     const SolveOptions& opts = {}) {
  if (schedule.empty()) throw ConfigError("weight schedule is empty");
  double s = dir == SweepDirection::up ? 1.0 : -1.0;
  for (size_t i = 0; i + 1 <= schedule.size(); ++i) {
    const Weight& a = schedule[i];
    const Weight& b = i + 1 < schedule.size() ? schedule[i + 1] : Q_limit;
    for (int c = 0; c < 2; ++c)
      for (int iy = 0; iy < g.nodes(); iy += 3)
        for (int ix = 0; ix < g.nodes(); ix += 3) {
          cplx z = g.node(ix, iy);
          double qa = std::clamp(a.eval_chart(c, z), -kValueCap, kValueCap);
          double qb = std::clamp(b.eval_chart(c, z), -kValueCap, kValueCap);
          if (s * (qb - qa) < -1e-9)
            throw ConfigError("weight schedule is not monotone in the stated direction");
        }
  }
  auto limit = solve_envelope(K, Q_limit, omega, g, opts);
  std::vector<SweepEntry> out;
  GridField prev;
  bool have_prev = false;
  for (size_t i = 0; i < schedule.size(); ++i) {
    auto r = solve_envelope(K, schedule[i], omega, g, opts);
    SweepEntry e;
    e.n = int(i);
    for (int c = 0; c < 2; ++c)
      for (int iy = 0; iy < g.nodes(); ++iy)
        for (int ix = 0; ix < g.nodes(); ++ix) {
          e.sup_diff_to_limit = std::max(
              e.sup_diff_to_limit, std::abs(r.V.at(c, ix, iy) - limit.V.at(c, ix, iy)));
          if (have_prev) {
            // up: envelopes must not decrease step to step; down: not increase
            double viol = s * (prev.at(c, ix, iy) - r.V.at(c, ix, iy));
            e.monotonicity_violation = std::max(e.monotonicity_violation, viol);
          }
        }
    out.push_back(e);
    prev = r.V;
    have_prev = true;
  }
  return out;
}

struct GaugeCheckReport {
  double max_defect = 0.0;
};

// V_{K, omega + ddc(xi), Q} against V_{K, omega, Q + xi} - xi from two
// independent solver runs; the identity is exact in the discrete algebra
// because the companion density carries the same five-point Laplacian that
// the solver applies.
inline GaugeCheckReport gauge_invariance_check(const CompactSet& K, const Weight& Q,
                                               const OmegaSpec& omega, const GaugeFunction& xi,
                                               const SphereGrid& g, const SolveOptions& opts = {}) {
  auto shift = gauge_shift(Q, xi, +1, omega);
  auto left = solve_envelope(K, Q, shift.omega_prime, g, opts);
  auto right = solve_envelope(K, shift.weight, omega, g, opts);
  GaugeCheckReport rep;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); ++iy)
      for (int ix = 0; ix < g.nodes(); ++ix) {
        double lhs = left.V.at(c, ix, iy);
        double rhs = right.V.at(c, ix, iy) - xi.xi.at(c, ix, iy);
        rep.max_defect = std::max(rep.max_defect, std::abs(lhs - rhs));
      }
  return rep;
}

}  // namespace plurigreen
