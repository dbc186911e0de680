// Config-driven runs: a JSON schema with strict key validation, one entry
// point per command, deterministic artifact files (V.csv, summary.json,
// effective_config.json), and the cross-run report merger.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "plurigreen/hprinciple.hpp"
#include "plurigreen/pullback.hpp"

namespace plurigreen {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Artifact plumbing

// complete-or-absent files: write the temporary, then rename into place
inline void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    os << text;
    if (!os) throw ConfigError("cannot write file: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_field_csv_atomic(const GridField& f, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  write_field_csv(f, tmp);
  fs::rename(tmp, path);
}

inline std::string fnv1a_hex(const double* data, size_t count) {
  std::uint64_t h = 1469598103934665603ull;
  const unsigned char* bytes = reinterpret_cast<const unsigned char*>(data);
  for (size_t i = 0; i < count * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Config schema

struct RunOverrides {
  std::optional<std::string> out_dir;  // --out flag or OUTPUT_DIR
  std::optional<int> threads;          // THREADS (0 = auto)
  std::optional<int> verbosity;
};

// flag beats environment; environment beats config
inline RunOverrides overrides_from_env() {
  RunOverrides ov;
  if (const char* d = std::getenv("OUTPUT_DIR")) ov.out_dir = std::string(d);
  if (const char* t = std::getenv("THREADS")) {
    try {
      ov.threads = std::stoi(t);
    } catch (const std::exception&) {
      throw ConfigError("THREADS must be an integer, got: " + std::string(t));
    }
  }
  return ov;
}

namespace detail {

inline std::string dotted(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

inline void expect_keys(const nlohmann::json& obj, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown config key: " + dotted(where, it.key()));
  }
}

inline double get_num(const nlohmann::json& obj, const char* key, const std::string& where,
                      double def) {
  if (!obj.contains(key)) return def;
  if (!obj[key].is_number()) throw ConfigError("config key must be a number: " + dotted(where, key));
  return obj[key].get<double>();
}

inline long get_int(const nlohmann::json& obj, const char* key, const std::string& where,
                    long def) {
  if (!obj.contains(key)) return def;
  if (!obj[key].is_number_integer())
    throw ConfigError("config key must be an integer: " + dotted(where, key));
  return obj[key].get<long>();
}

inline std::string get_str(const nlohmann::json& obj, const char* key, const std::string& where,
                           const std::string& def) {
  if (!obj.contains(key)) return def;
  if (!obj[key].is_string()) throw ConfigError("config key must be a string: " + dotted(where, key));
  return obj[key].get<std::string>();
}

// coefficient entry: plain number (real) or [re, im]
inline std::vector<cplx> get_coeffs(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty())
    throw ConfigError("config key must be a nonempty coefficient array: " + where);
  std::vector<cplx> out;
  for (const auto& e : arr) {
    if (e.is_number()) {
      out.emplace_back(e.get<double>(), 0.0);
    } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
      out.emplace_back(e[0].get<double>(), e[1].get<double>());
    } else {
      throw ConfigError("coefficients must be numbers or [re, im] pairs: " + where);
    }
  }
  return out;
}

}  // namespace detail

struct RunConfig {
  std::string command;
  double half_width = 1.25;
  int n_cells = 200;
  std::string set_spec = "circle(1)";
  double set_tol = 0.01;
  std::string weight_spec = "zero";
  std::string method;  // materialized per command
  std::vector<int> degrees = {10, 20, 40};
  int sample_size = 0;
  std::vector<cplx> map_p = {cplx(0.0), cplx(1.0)};
  std::vector<cplx> map_q = {cplx(1.0)};
  double alpha = 1.02;
  double beta = 0.0;  // 0 = take estimate_beta
  double alpha_tol = 0.05;
  SolveOptions solve;
  int sweep_count = 4;
  std::string sweep_direction = "down";
  int samples = 500;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int verbosity = 0;

  static RunConfig from_json(const nlohmann::json& j);
  ordered_json effective() const;
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  using detail::expect_keys;
  using detail::get_int;
  using detail::get_num;
  using detail::get_str;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  expect_keys(j, "",
              {"command", "grid", "set", "set_tol", "weight", "method", "degrees", "sample_size",
               "map", "alpha", "beta", "alpha_tol", "solve", "sweep", "samples", "output_dir",
               "seed", "verbosity"});

  RunConfig c;
  c.command = get_str(j, "command", "", "");
  static const std::vector<std::string> kCommands = {
      "envelope", "sections", "compare", "pullback", "sweep", "hprinciple", "diagnostics"};
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end())
    throw ConfigError("config key command must be one of envelope|sections|compare|pullback|"
                      "sweep|hprinciple|diagnostics, got: \"" +
                      c.command + "\"");

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (!g.is_object()) throw ConfigError("config key grid must be an object");
    expect_keys(g, "grid", {"half_width", "n_cells"});
    c.half_width = get_num(g, "half_width", "grid", c.half_width);
    c.n_cells = int(get_int(g, "n_cells", "grid", c.n_cells));
  }
  SphereGrid probe(c.half_width, c.n_cells);  // range validation lives there
  (void)probe;

  c.set_spec = get_str(j, "set", "", c.set_spec);
  c.set_tol = get_num(j, "set_tol", "", c.set_tol);
  if (!(c.set_tol > 0.0)) throw ConfigError("config key set_tol must be positive");
  c.weight_spec = get_str(j, "weight", "", c.weight_spec);

  std::string default_method = c.command == "sections"  ? "sections"
                               : c.command == "compare" ? "both"
                                                        : "relax";
  c.method = get_str(j, "method", "", default_method);
  if (c.method != "relax" && c.method != "sections" && c.method != "both")
    throw ConfigError("config key method must be relax|sections|both");
  if (c.method != default_method)
    throw ConfigError("config key method conflicts with command " + c.command + ": expected " +
                      default_method);

  if (j.contains("degrees")) {
    if (!j["degrees"].is_array() || j["degrees"].empty())
      throw ConfigError("config key degrees must be a nonempty integer array");
    c.degrees.clear();
    for (const auto& e : j["degrees"]) {
      if (!e.is_number_integer() || e.get<long>() < 1)
        throw ConfigError("config key degrees entries must be integers >= 1");
      c.degrees.push_back(int(e.get<long>()));
    }
  }
  c.sample_size = int(get_int(j, "sample_size", "", c.sample_size));
  if (c.sample_size < 0) throw ConfigError("config key sample_size must be >= 0");

  if (j.contains("map")) {
    const auto& m = j["map"];
    if (!m.is_object()) throw ConfigError("config key map must be an object");
    expect_keys(m, "map", {"P", "Q"});
    if (!m.contains("P") || !m.contains("Q"))
      throw ConfigError("config key map needs both P and Q coefficient arrays");
    c.map_p = detail::get_coeffs(m["P"], "map.P");
    c.map_q = detail::get_coeffs(m["Q"], "map.Q");
  }

  c.alpha = get_num(j, "alpha", "", c.alpha);
  c.beta = get_num(j, "beta", "", c.beta);
  c.alpha_tol = get_num(j, "alpha_tol", "", c.alpha_tol);
  if (!(c.alpha > 0.0)) throw ConfigError("config key alpha must be positive");
  if (c.beta < 0.0) throw ConfigError("config key beta must be >= 0 (0 = estimate)");
  if (!(c.alpha_tol > 0.0)) throw ConfigError("config key alpha_tol must be positive");

  if (j.contains("solve")) {
    const auto& s = j["solve"];
    if (!s.is_object()) throw ConfigError("config key solve must be an object");
    expect_keys(s, "solve",
                {"update_tol", "max_sweeps", "sync_interval", "sor_omega", "mode", "value_cap",
                 "threads", "certify_sweeps"});
    c.solve.update_tol = get_num(s, "update_tol", "solve", c.solve.update_tol);
    c.solve.max_sweeps = get_int(s, "max_sweeps", "solve", c.solve.max_sweeps);
    c.solve.sync_interval = int(get_int(s, "sync_interval", "solve", c.solve.sync_interval));
    c.solve.sor_omega = get_num(s, "sor_omega", "solve", c.solve.sor_omega);
    c.solve.value_cap = get_num(s, "value_cap", "solve", c.solve.value_cap);
    c.solve.threads = int(get_int(s, "threads", "solve", c.solve.threads));
    c.solve.certify_sweeps = int(get_int(s, "certify_sweeps", "solve", c.solve.certify_sweeps));
    std::string mode = get_str(s, "mode", "solve", "psor");
    if (mode == "psor")
      c.solve.mode = RelaxMode::psor;
    else if (mode == "monotone")
      c.solve.mode = RelaxMode::monotone;
    else
      throw ConfigError("config key solve.mode must be psor|monotone");
  }
  if (!(c.solve.update_tol > 0.0)) throw ConfigError("config key solve.update_tol must be positive");
  if (c.solve.max_sweeps < 1) throw ConfigError("config key solve.max_sweeps must be >= 1");
  if (c.solve.threads < 0) throw ConfigError("config key solve.threads must be >= 0");

  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    if (!s.is_object()) throw ConfigError("config key sweep must be an object");
    expect_keys(s, "sweep", {"count", "direction"});
    c.sweep_count = int(get_int(s, "count", "sweep", c.sweep_count));
    c.sweep_direction = get_str(s, "direction", "sweep", c.sweep_direction);
  }
  if (c.sweep_count < 1) throw ConfigError("config key sweep.count must be >= 1");
  if (c.sweep_direction != "up" && c.sweep_direction != "down")
    throw ConfigError("config key sweep.direction must be up|down");

  c.samples = int(get_int(j, "samples", "", c.samples));
  if (c.samples < 1) throw ConfigError("config key samples must be >= 1");
  c.output_dir = get_str(j, "output_dir", "", c.output_dir);
  long seed = get_int(j, "seed", "", long(c.seed));
  if (seed < 0) throw ConfigError("config key seed must be >= 0");
  c.seed = std::uint64_t(seed);
  c.verbosity = int(get_int(j, "verbosity", "", c.verbosity));
  return c;
}

inline ordered_json RunConfig::effective() const {
  ordered_json j;
  j["command"] = command;
  j["grid"] = {{"half_width", half_width}, {"n_cells", n_cells}};
  j["set"] = set_spec;
  j["set_tol"] = set_tol;
  j["weight"] = weight_spec;
  j["method"] = method;
  j["degrees"] = degrees;
  j["sample_size"] = sample_size;
  auto coeffs = [](const std::vector<cplx>& v) {
    ordered_json a = ordered_json::array();
    for (cplx z : v) a.push_back({z.real(), z.imag()});
    return a;
  };
  j["map"] = {{"P", coeffs(map_p)}, {"Q", coeffs(map_q)}};
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["alpha_tol"] = alpha_tol;
  j["solve"] = {{"update_tol", solve.update_tol},
                {"max_sweeps", solve.max_sweeps},
                {"sync_interval", solve.sync_interval},
                {"sor_omega", solve.sor_omega},
                {"mode", solve.mode == RelaxMode::psor ? "psor" : "monotone"},
                {"value_cap", solve.value_cap},
                {"threads", solve.threads},
                {"certify_sweeps", solve.certify_sweeps}};
  j["sweep"] = {{"count", sweep_count}, {"direction", sweep_direction}};
  j["samples"] = samples;
  j["output_dir"] = output_dir;
  j["seed"] = seed;
  j["verbosity"] = verbosity;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

struct CommandOutput {
  ordered_json summary;
  bool numerical_ok = true;
};

inline void put_grid(ordered_json& s, const SphereGrid& g) {
  s["half_width"] = g.half_width;
  s["n_cells"] = g.n_cells;
  s["h"] = g.h;
}

inline void put_envelope_scalars(ordered_json& s, const EnvelopeResult& r) {
  s["converged"] = r.converged;
  s["certified"] = r.certified;
  s["iterations"] = r.iterations;
  s["final_update"] = r.final_update;
  s["seam_discrepancy"] = r.seam_discrepancy;
  s["ma_mass_total"] = r.ma_mass_total;
  s["min_psh_residual"] = r.min_psh_residual;
  s["max_obstacle_excess"] = r.max_obstacle_excess;
  s["mask_count"] = r.mask.count;
}

inline std::pair<double, double> field_min_max(const GridField& f) {
  double lo = kInf, hi = -kInf;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= f.grid.n_cells; ++iy)
      for (int ix = 0; ix <= f.grid.n_cells; ++ix) {
        double v = f.at(c, ix, iy);
        if (!finite(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  return {lo, hi};
}

inline CommandOutput cmd_envelope(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();
  auto res = solve_envelope(K, Q, fsw, g, cfg.solve);
  write_field_csv_atomic(res.V, out / "V.csv");

  CommandOutput o;
  o.summary["command"] = "envelope";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["omega"] = fsw.label;
  o.summary["mode"] = res.meta.mode;
  put_envelope_scalars(o.summary, res);
  o.summary["v_origin"] = res.V.value_at_chart_origin(0);
  auto [lo, hi] = field_min_max(res.V);
  o.summary["v_min"] = lo;
  o.summary["v_max"] = hi;
  MildReport mild = mild_check(Q, fsw, g);
  o.summary["mild_verdict"] = mild.verdict;
  o.summary["mild_continuity_score"] = mild.continuity_score;
  o.summary["mild_finite_fraction"] = mild.finite_area_fraction;
  o.numerical_ok = res.converged;
  return o;
}

inline CommandOutput cmd_sections(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();

  std::vector<SectionEnvelope> family;
  ordered_json table = ordered_json::array();
  ordered_json detail_table = ordered_json::array();
  for (int n : cfg.degrees) {
    family.push_back(build_section_envelope(K, Q, n, cfg.sample_size, fsw));
    const auto& e = family.back();
    ordered_json row;
    row["n"] = e.n;
    row["node_count"] = e.nodes.size();
    row["sample_count"] = e.K_sample.size();
    row["value_origin"] = e.value(ProjPoint::from_chart(0, 0.0));
    table.push_back(std::move(row));

    ordered_json d;
    d["n"] = e.n;
    ordered_json nodes = ordered_json::array();
    for (cplx z : e.nodes) nodes.push_back({z.real(), z.imag()});
    d["nodes"] = std::move(nodes);
    d["log_norm"] = e.log_norm;
    d["log_norm_interp"] = e.log_norm_interp;
    d["K_sample_digest"] = fnv1a_hex(reinterpret_cast<const double*>(e.K_sample.data()),
                                     2 * e.K_sample.size());
    detail_table.push_back(std::move(d));
  }
  GridField combined(g, [&](int c, cplx z) {
    return combined_section_value(family, ProjPoint::from_chart(c, z));
  });
  write_field_csv_atomic(combined, out / "V.csv");
  write_text_atomic(out / "sections.json", detail_table.dump(2) + "\n");

  CommandOutput o;
  o.summary["command"] = "sections";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["degrees"] = cfg.degrees;
  o.summary["per_degree"] = std::move(table);
  o.summary["combined_value_origin"] = combined.value_at_chart_origin(0);
  return o;
}

inline CommandOutput cmd_compare(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();

  auto relax = solve_envelope(K, Q, fsw, g, cfg.solve);
  write_field_csv_atomic(relax.V, out / "V.csv");

  std::vector<SectionEnvelope> family;
  ordered_json table = ordered_json::array();
  for (int n : cfg.degrees) {
    family.push_back(build_section_envelope(K, Q, n, cfg.sample_size, fsw));
    double sup = 0.0;
    for (int c = 0; c < 2; ++c)
      for (int iy = 0; iy <= g.n_cells; ++iy)
        for (int ix = 0; ix <= g.n_cells; ++ix) {
          double sec = combined_section_value(family, ProjPoint::from_chart(c, g.node(ix, iy)));
          sup = std::max(sup, std::abs(relax.V.at(c, ix, iy) - sec));
        }
    ordered_json row;
    row["n"] = n;
    row["sup_diff"] = sup;
    table.push_back(std::move(row));
  }

  CommandOutput o;
  o.summary["command"] = "compare";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["degrees"] = cfg.degrees;
  put_envelope_scalars(o.summary, relax);
  o.summary["v_origin"] = relax.V.value_at_chart_origin(0);
  o.summary["per_degree"] = std::move(table);
  o.numerical_ok = relax.converged;
  return o;
}

inline CommandOutput cmd_pullback(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();
  auto fmap = RationalMap::make(cfg.map_p, cfg.map_q);

  double beta_est = estimate_beta(fmap, fsw, g);
  double beta_used = cfg.beta > 0.0 ? cfg.beta : beta_est;
  std::string provenance = cfg.beta > 0.0 ? "user" : "estimated";
  auto params = SandwichParams::make(cfg.alpha, beta_used, provenance);

  auto sandwich = verify_sandwich(fmap, K, Q, params, fsw, g, cfg.solve);
  auto image = verify_image_inequality(fmap, K, Q, fsw, g, cfg.solve);

  std::vector<ChartFunction> battery = {
      [](int, cplx) { return 0.3; },
      [](int c, cplx z) {
        double n = std::norm(z);
        return 0.1 * ((c == 0 ? n - 1.0 : 1.0 - n) / (n + 1.0));
      },
      [](int, cplx z) { return 0.3 * z.real() / (1.0 + std::norm(z)); },
  };
  auto alpha_rep = check_alpha(fmap, cfg.alpha, battery, fsw, g, cfg.alpha_tol);

  // mildness of the rescaled pulled-back weight is reported regardless of the
  // sandwich outcome
  MildReport mild = mild_check(pullback_weight(fmap, Q, cfg.alpha), fsw, g);

  auto base = solve_envelope(K, Q, fsw, g, cfg.solve);
  write_field_csv_atomic(base.V, out / "V.csv");

  CommandOutput o;
  o.summary["command"] = "pullback";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["map"] = fmap.label;
  o.summary["map_degree"] = fmap.d;
  o.summary["alpha"] = cfg.alpha;
  o.summary["beta_estimated"] = beta_est;
  o.summary["beta"] = beta_used;
  o.summary["beta_provenance"] = provenance;
  o.summary["sandwich_upper_defect"] = sandwich.upper_defect;
  o.summary["sandwich_lower_defect"] = sandwich.lower_defect;
  o.summary["sandwich_converged"] = sandwich.converged;
  o.summary["image_defect"] = image.defect;
  o.summary["image_converged"] = image.converged;
  o.summary["pullback_mass"] = image.pullback_mass;
  o.summary["alpha_worst_residual"] = alpha_rep.worst_residual;
  o.summary["alpha_violation"] = alpha_rep.violation;
  o.summary["alpha_excluded_nodes"] = alpha_rep.excluded_nodes;
  o.summary["alpha_critical_values"] = alpha_rep.critical_values.size();
  o.summary["alpha_preconditions"] = alpha_rep.precondition_residuals;
  o.summary["mild_verdict"] = mild.verdict;
  o.summary["mild_continuity_score"] = mild.continuity_score;
  o.numerical_ok = sandwich.converged && image.converged && base.converged;
  return o;
}

inline CommandOutput cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();

  // Q_n = Q -+ 1/n marching monotonically onto Q
  double sign = cfg.sweep_direction == "down" ? 1.0 : -1.0;
  std::vector<Weight> schedule;
  for (int n = 1; n <= cfg.sweep_count; ++n)
    schedule.push_back(weight_plus_const(Q, sign / n));
  auto dir = cfg.sweep_direction == "down" ? SweepDirection::down : SweepDirection::up;
  auto entries = monotone_weight_sweep(K, Q, fsw, g, schedule, dir, cfg.solve);

  auto limit = solve_envelope(K, Q, fsw, g, cfg.solve);
  write_field_csv_atomic(limit.V, out / "V.csv");

  CommandOutput o;
  o.summary["command"] = "sweep";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["direction"] = cfg.sweep_direction;
  o.summary["count"] = cfg.sweep_count;
  ordered_json table = ordered_json::array();
  for (const auto& e : entries) {
    ordered_json row;
    row["n"] = e.n + 1;  // schedule index 1-based: entry n used shift 1/n
    row["sup_diff_to_limit"] = e.sup_diff_to_limit;
    row["monotonicity_violation"] = e.monotonicity_violation;
    table.push_back(std::move(row));
  }
  o.summary["entries"] = std::move(table);
  put_envelope_scalars(o.summary, limit);
  o.summary["v_origin"] = limit.V.value_at_chart_origin(0);
  o.numerical_ok = limit.converged;
  return o;
}

inline CommandOutput cmd_hprinciple(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();

  std::mt19937 rng(std::uint32_t(cfg.seed ^ 0x9e3779b9u));
  std::uniform_real_distribution<double> unit(-1.2, 1.2);
  auto rand_c = [&] { return cplx(unit(rng), unit(rng)); };

  // closed-form homogeneous pair: the half-log-norm function and the max form
  HomogeneousFunction vfs{
      [](cplx a, cplx b) { return 0.5 * std::log(std::norm(a) + std::norm(b)); }, 1.0};
  HomogeneousFunction vmax{
      [](cplx a, cplx b) { return std::max(std::log(std::abs(a)), std::log(std::abs(b))); }, 1.0};

  std::vector<std::pair<cplx, cplx>> pairs;
  for (int i = 0; i < cfg.samples; ++i) {
    cplx a = rand_c(), b = rand_c();
    if (std::abs(a) < 1e-3 && std::abs(b) < 1e-3) a += cplx(1.0, 0.0);
    pairs.emplace_back(a, b);
  }
  double hom_defect = std::max(homogeneity_defect(vfs, pairs), homogeneity_defect(vmax, pairs));

  auto f_fs = dehomogenize(vfs);
  double dehom = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    cplx z = rand_c();
    dehom = std::max(dehom, std::abs(f_fs(z) - fs_potential(z)));
    dehom = std::max(dehom, std::abs(homogenize(f_fs, cplx(1.0), z) - vfs.value(cplx(1.0), z)));
  }

  MetricData metric = MetricData::from_omega(fsw);
  ChiFunction chi = metric_to_chi(metric, 2.0);
  double fiber_defect = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    int c = i % 2;
    cplx zbase = rand_c();
    FiberPoint fp{ProjPoint::from_chart(c, zbase), rand_c() + cplx(1.5, 0.0), c};
    cplx lam = rand_c() + cplx(1.5, 0.0);
    FiberPoint scaled{fp.base, fp.t * lam, c};
    fiber_defect = std::max(fiber_defect, std::abs(chi.log_value(scaled) - chi.log_value(fp) -
                                                   2.0 * std::log(std::abs(lam))));
  }
  MetricData round = chi_to_metric(chi.as_function(), 2.0);
  double chi_round = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    cplx z = rand_c();
    chi_round = std::max(chi_round, std::abs(round.h0(z) - metric.h0(z)));
    chi_round = std::max(chi_round, std::abs(round.h1(z) - metric.h1(z)));
  }

  std::vector<cplx> ring;
  for (int k = 0; k < 24; ++k)
    ring.push_back(std::polar(0.85 + 0.05 * (k % 8), 2.0 * kPi * k / 24.0));
  double cocycle = metric_cocycle_defect(metric, ring);

  // lift of the configured envelope: the two trivializations must tell one
  // story on the overlap
  auto res = solve_envelope(K, Q, fsw, g, cfg.solve);
  write_field_csv_atomic(res.V, out / "V.csv");
  double lift_defect = 0.0;
  if (res.converged) {
    BundleLift H = lift_to_bundle(res, fsw);
    for (int k = 0; k < 32; ++k) {
      FiberPoint fp{ProjPoint::from_chart(0, std::polar(1.05, 2.0 * kPi * (k + 0.5) / 32.0)),
                    cplx(1.0), 0};
      lift_defect = std::max(lift_defect, std::abs(H.value(fp) - H.value(fp.to_chart(1))));
    }
  }

  CommandOutput o;
  o.summary["command"] = "hprinciple";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["samples"] = cfg.samples;
  o.summary["seed"] = cfg.seed;
  o.summary["homogeneity_defect"] = hom_defect;
  o.summary["dehomogenize_roundtrip"] = dehom;
  o.summary["fiber_homogeneity_defect"] = fiber_defect;
  o.summary["chi_roundtrip"] = chi_round;
  o.summary["metric_cocycle_defect"] = cocycle;
  o.summary["lift_chart_consistency"] = lift_defect;
  o.summary["envelope_converged"] = res.converged;
  o.numerical_ok = res.converged;
  return o;
}

inline CommandOutput cmd_diagnostics(const RunConfig& cfg, const fs::path& out) {
  SphereGrid g(cfg.half_width, cfg.n_cells);
  CompactSet K = make_set(cfg.set_spec, cfg.set_tol);
  Weight Q = make_weight(cfg.weight_spec);
  auto fsw = OmegaSpec::fubini_study();

  double mass = omega_total_mass(fsw, g);
  std::vector<std::pair<int, cplx>> samples;
  std::mt19937 rng(std::uint32_t(cfg.seed ^ 0x51ed270bu));
  std::uniform_real_distribution<double> unit(-1.1, 1.1);
  for (int i = 0; i < 64; ++i) samples.emplace_back(i % 2, cplx(unit(rng), unit(rng)));
  auto val = fsw.validate(samples, 1e-4);

  double pou_defect = 0.0;
  for (int k = 0; k < 32; ++k) {
    cplx z = std::polar(0.9 + 0.01 * k, 2.0 * kPi * k / 32.0);
    pou_defect = std::max(pou_defect,
                          std::abs(pou_weight(g, z) + pou_weight(g, 1.0 / z) - 1.0));
  }

  SetMask mask = rasterize(K, g);
  GridField qf(g, [&](int c, cplx z) { return Q.capped(ProjPoint::from_chart(c, z)); });
  write_field_csv_atomic(qf, out / "V.csv");
  MildReport mild = mild_check(Q, fsw, g);

  CommandOutput o;
  o.summary["command"] = "diagnostics";
  put_grid(o.summary, g);
  o.summary["set"] = cfg.set_spec;
  o.summary["weight"] = cfg.weight_spec;
  o.summary["omega_mass"] = mass;
  o.summary["omega_mass_rel_err"] = std::abs(mass - 2.0 * kPi) / (2.0 * kPi);
  o.summary["density_min"] = val.min_density;
  o.summary["laplace_rel_err"] = val.max_rel_laplace_err;
  o.summary["potential_cocycle_defect"] = val.max_cocycle_err;
  o.summary["pou_partition_defect"] = pou_defect;
  o.summary["mask_count"] = mask.count;
  o.summary["mild_verdict"] = mild.verdict;
  o.summary["mild_continuity_score"] = mild.continuity_score;
  o.summary["mild_finite_fraction"] = mild.finite_area_fraction;
  return o;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry points

struct RunArtifacts {
  int exit_code = 0;
  fs::path out_dir;
  ordered_json summary;
  std::string error;
};

// validate -> execute -> write artifacts; exceptions map to exit codes
// (2 validation, 3 numerical) instead of escaping
inline RunArtifacts run_config(const nlohmann::json& raw, const RunOverrides& ov = {}) {
  RunArtifacts a;
  RunConfig cfg;
  try {
    cfg = RunConfig::from_json(raw);
  } catch (const ConfigError& e) {
    a.exit_code = 2;
    a.error = e.what();
    return a;
  }
  if (ov.out_dir) cfg.output_dir = *ov.out_dir;
  if (ov.threads) cfg.solve.threads = *ov.threads;
  if (ov.verbosity) cfg.verbosity = *ov.verbosity;
  if (cfg.solve.threads == 0)
    cfg.solve.threads = std::max(1u, std::thread::hardware_concurrency());
  a.out_dir = cfg.output_dir;

  auto t0 = std::chrono::steady_clock::now();
  if (cfg.verbosity >= 1)
    std::fprintf(stderr, "[%s] n_cells=%d set=%s weight=%s\n", cfg.command.c_str(), cfg.n_cells,
                 cfg.set_spec.c_str(), cfg.weight_spec.c_str());
  detail::CommandOutput out;
  try {
    if (cfg.command == "envelope")
      out = detail::cmd_envelope(cfg, a.out_dir);
    else if (cfg.command == "sections")
      out = detail::cmd_sections(cfg, a.out_dir);
    else if (cfg.command == "compare")
      out = detail::cmd_compare(cfg, a.out_dir);
    else if (cfg.command == "pullback")
      out = detail::cmd_pullback(cfg, a.out_dir);
    else if (cfg.command == "sweep")
      out = detail::cmd_sweep(cfg, a.out_dir);
    else if (cfg.command == "hprinciple")
      out = detail::cmd_hprinciple(cfg, a.out_dir);
    else
      out = detail::cmd_diagnostics(cfg, a.out_dir);
  } catch (const NumericError& e) {
    a.exit_code = 3;
    a.error = e.what();
    return a;
  } catch (const ConfigError& e) {
    a.exit_code = 2;
    a.error = e.what();
    return a;
  }
  double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.summary["wall_time_ms"] = ms;

  write_text_atomic(a.out_dir / "summary.json", out.summary.dump(2) + "\n");
  write_text_atomic(a.out_dir / "effective_config.json", cfg.effective().dump(2) + "\n");
  a.summary = std::move(out.summary);
  if (!out.numerical_ok) {
    a.exit_code = 3;
    a.error = "numerical failure: a solve did not converge within its sweep budget";
  }
  if (cfg.verbosity >= 1)
    std::fprintf(stderr, "[%s] done in %.0f ms, exit %d\n", cfg.command.c_str(), ms, a.exit_code);
  return a;
}

inline RunArtifacts run_config_file(const fs::path& config_path, const RunOverrides& ov = {}) {
  std::ifstream in(config_path);
  if (!in) {
    RunArtifacts a;
    a.exit_code = 2;
    a.error = "cannot open config file: " + config_path.string();
    return a;
  }
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    RunArtifacts a;
    a.exit_code = 2;
    a.error = "config is not valid JSON (" + config_path.string() + "): " + e.what();
    return a;
  }
  return run_config(raw, ov);
}

// ---------------------------------------------------------------------------
// Report merging

namespace detail {

inline void flatten_scalars(const ordered_json& j, const std::string& prefix,
                            std::map<std::string, std::string>& row) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "wall_time_ms") continue;
    const auto& v = it.value();
    std::string key = dotted(prefix, it.key());
    if (v.is_object()) {
      flatten_scalars(v, key, row);
    } else if (v.is_array()) {
      continue;  // element tables expand to their own rows
    } else if (v.is_string()) {
      row[key] = v.get<std::string>();
    } else {
      row[key] = v.dump();
    }
  }
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace detail

// merges summary files into report.csv + report.txt under out_dir and streams
// the digest; rows are sorted by file name, element tables (entries,
// per_degree) expand to one row each
inline int report_files(const std::vector<std::string>& paths, const fs::path& out_dir,
                        std::ostream& digest) {
  if (paths.empty()) throw ConfigError("report needs at least one summary file");
  std::vector<std::string> sorted = paths;
  std::sort(sorted.begin(), sorted.end());

  std::vector<std::map<std::string, std::string>> rows;
  std::vector<std::string> digest_lines;
  for (const std::string& p : sorted) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open summary file: " + p);
    ordered_json j;
    try {
      j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("summary is not valid JSON (" + p + "): " + e.what());
    }

    // summaries are conventionally all named summary.json, so include the
    // parent directory in the label
    fs::path fp(p);
    std::string label = fp.filename().string();
    if (fp.has_parent_path() && fp.parent_path().has_filename())
      label = (fp.parent_path().filename() / fp.filename()).string();
    std::map<std::string, std::string> base;
    base["file"] = label;
    detail::flatten_scalars(j, "", base);

    size_t expanded = 0;
    for (const char* tbl : {"entries", "per_degree"}) {
      if (!j.contains(tbl) || !j[tbl].is_array()) continue;
      for (const auto& e : j[tbl]) {
        auto row = base;
        row["row"] = tbl + std::string("[") + std::to_string(expanded) + "]";
        detail::flatten_scalars(e, tbl, row);
        rows.push_back(std::move(row));
        ++expanded;
      }
    }
    if (expanded == 0) rows.push_back(base);

    std::ostringstream line;
    line << base["file"] << ": command=" << base["command"];
    for (const auto& [k, v] : base)
      if (k != "file" && k != "command") line << " " << k << "=" << v;
    digest_lines.push_back(line.str());
  }

  std::vector<std::string> cols;
  {
    std::map<std::string, int> seen;
    for (const auto& r : rows)
      for (const auto& [k, _] : r) seen[k];
    cols.push_back("file");
    if (seen.count("row")) cols.push_back("row");
    for (const auto& [k, _] : seen)
      if (k != "file" && k != "row") cols.push_back(k);
  }
  std::ostringstream csv;
  for (size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << detail::csv_quote(cols[i]);
  csv << "\n";
  for (const auto& r : rows) {
    for (size_t i = 0; i < cols.size(); ++i) {
      auto it = r.find(cols[i]);
      csv << (i ? "," : "") << detail::csv_quote(it == r.end() ? "" : it->second);
    }
    csv << "\n";
  }

  std::ostringstream txt;
  txt << "report over " << sorted.size() << " summaries\n";
  for (const auto& l : digest_lines) txt << l << "\n";

  write_text_atomic(out_dir / "report.csv", csv.str());
  write_text_atomic(out_dir / "report.txt", txt.str());
  digest << txt.str();
  return 0;
}

}  // namespace plurigreen
