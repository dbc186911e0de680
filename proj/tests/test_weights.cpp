#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "plurigreen/weights.hpp"

using namespace plurigreen;

static constexpr double kHalfLog2 = 0.34657359027997264;

TEST_CASE("catalog weights evaluate their closed forms", "[weights]") {
  auto zero = make_weight("zero");
  CHECK(zero.eval(ProjPoint::make(0.0, 1.0)) == 0.0);

  auto fs = make_weight("fs_potential");
  CHECK(fs.eval_chart(0, cplx(1.0, 0.0)) == Catch::Approx(kHalfLog2).epsilon(1e-14));
  CHECK(fs.eval(ProjPoint::make(0.0, 1.0)) == kInf);
  // projective invariance: un-normalized coordinates give the same value
  CHECK(fs.eval(ProjPoint::make(cplx(2.0, 1.0), cplx(-3.0, 5.0))) ==
        Catch::Approx(fs.eval(ProjPoint::make(cplx(4.0, 2.0), cplx(-6.0, 10.0)))).epsilon(1e-14));

  auto ld = make_weight("log_dist(1)");
  CHECK(ld.eval_chart(0, cplx(3.0, 0.0)) == Catch::Approx(-std::log(2.0)).epsilon(1e-14));
  CHECK(ld.eval_chart(0, cplx(1.0, 0.0)) == kInf);
  CHECK(ld.eval(ProjPoint::make(0.0, 1.0)) == -kInf);

  auto rp = make_weight("radial_power(2)");
  CHECK(rp.eval_chart(0, cplx(2.0, 0.0)) == Catch::Approx(2.0).epsilon(1e-14));
  CHECK(rp.eval_chart(0, 0.0) == 0.0);
  CHECK(rp.eval(ProjPoint::make(0.0, 1.0)) == kInf);

  CHECK_THROWS_AS(make_weight("radial_power(0)"), ConfigError);
  CHECK_THROWS_AS(make_weight("no_such_weight"), ConfigError);
  CHECK_THROWS_AS(make_weight("zero(1)"), ConfigError);
  CHECK_THROWS_AS(make_weight("log_dist"), ConfigError);
}

TEST_CASE("table weight does nearest-node lookup", "[weights]") {
  SphereGrid g(1.25, 10);
  GridField f(g, [](int c, cplx z) { return z.real() + 10.0 * c; });
  auto path = std::filesystem::temp_directory_path() / "plurigreen_weight_table.csv";
  write_field_csv(f, path);
  auto w = make_weight("table:" + path.string());
  CHECK(w.eval_chart(0, g.node(3, 4)) == f.at(0, 3, 4));
  // off-node points snap to the nearest node
  CHECK(w.eval_chart(0, g.node(3, 4) + cplx(g.h / 4, 0.0)) == f.at(0, 3, 4));
  CHECK(w.eval(ProjPoint::make(0.0, 1.0)) == f.at(1, 5, 5));
  std::filesystem::remove(path);
}

TEST_CASE("finite mask counts unbounded nodes", "[weights]") {
  SphereGrid g(1.25, 40);
  auto fs = weight_fs_potential();
  auto m = fs.finite_mask(g);
  CHECK(m.total_nodes == 2 * 41 * 41);
  CHECK(m.finite_nodes == m.total_nodes - 1);  // only the chart-1 origin is +inf

  // z = 1 lies on this grid in both charts; -inf at infinity still counts as finite
  auto ld = weight_log_dist(1.0);
  CHECK(ld.finite_mask(g).finite_nodes == m.total_nodes - 2);
}

TEST_CASE("affine translation strips the reference potential", "[weights]") {
  auto q0 = translate_weight_to_affine(weight_zero());
  CHECK(q0(cplx(0.0, 0.0)) == 0.0);
  CHECK(q0(cplx(1.0, 0.0)) == Catch::Approx(-0.346574).margin(5e-7));

  auto qfs = translate_weight_to_affine(weight_fs_potential());
  for (cplx z : {cplx(0.0, 0.0), cplx(1.0, 0.0), cplx(-2.5, 0.7), cplx(0.0, 11.0)})
    CHECK(qfs(z) == Catch::Approx(0.0).margin(1e-12));

  CHECK_THROWS_AS(affine_weight_value(weight_zero(), ProjPoint::make(0.0, 1.0)), DomainError);
}

TEST_CASE("projective translation adds the potential and regularizes infinity", "[weights]") {
  TranslateReport rep;
  auto Q = translate_weight_to_projective([](cplx) { return 0.0; }, &rep);
  CHECK(Q.eval_chart(0, cplx(1.0, 0.0)) == Catch::Approx(kHalfLog2).epsilon(1e-14));
  CHECK(rep.capped);
  CHECK(Q.eval(ProjPoint::make(0.0, 1.0)) == kInf);

  // q = -phi cancels exactly; the liminf at infinity stabilizes at 0
  TranslateReport rep2;
  auto Q2 = translate_weight_to_projective([](cplx z) { return -fs_potential(z); }, &rep2);
  CHECK_FALSE(rep2.capped);
  CHECK(Q2.eval(ProjPoint::make(0.0, 1.0)) == Catch::Approx(0.0).margin(1e-9));
  CHECK(Q2.eval_chart(0, cplx(0.3, -0.4)) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("translation round trips on chart 0", "[weights]") {
  SphereGrid g(1.25, 20);
  auto q = [](cplx z) { return 0.3 * z.real() - 0.1 * std::abs(z); };
  auto Q = translate_weight_to_projective(q);
  auto q_back = translate_weight_to_affine(Q);
  for (int iy = 0; iy < g.nodes(); iy += 3)
    for (int ix = 0; ix < g.nodes(); ix += 3) {
      cplx z = g.node(ix, iy);
      CHECK(q_back(z) == Catch::Approx(q(z)).margin(1e-12));
    }
  // and the other direction, for a weight finite on chart 0
  auto fs = weight_fs_potential();
  auto Q_back = translate_weight_to_projective(translate_weight_to_affine(fs));
  for (cplx z : {cplx(0.0, 0.0), cplx(0.7, -0.7), cplx(1.2, 0.3)})
    CHECK(Q_back.eval_chart(0, z) == Catch::Approx(fs.eval_chart(0, z)).margin(1e-12));
}

TEST_CASE("mild check accepts smooth and pole weights, rejects jumps", "[weights]") {
  SphereGrid g(1.25, 200);
  auto omega = OmegaSpec::fubini_study();

  auto r0 = mild_check(weight_zero(), omega, g);
  CHECK(r0.verdict);
  CHECK(r0.finite_area_fraction == 1.0);
  CHECK(r0.saturated_nodes == 0);

  // pole at z = 1 and dive to -inf at infinity: the cap keeps exp(-Q+phi) tame
  auto rl = mild_check(weight_log_dist(1.0), omega, g);
  CHECK(rl.verdict);
  CHECK(rl.saturated_nodes > 0);

  // unit jump in Q across a line shows up at scale 1/sqrt(h)
  Weight jump{[](const ProjPoint& p) {
                return (p.z1 * std::conj(p.z0)).real() > 0 ? -2.0 : 0.0;
              },
              "jump"};
  auto rj = mild_check(jump, omega, g);
  CHECK_FALSE(rj.verdict);
  CHECK(rj.continuity_score > 5.0);

  // weight infinite except at 3 nodes fails the area floor
  Weight sparse{[&](const ProjPoint& p) {
                  for (cplx c : {cplx(0.0, 0.0), cplx(0.25, 0.0), cplx(0.0, 0.25)})
                    if (p.z0 != cplx{} && std::abs(p.coord(0) - c) < 1e-9) return 0.0;
                  return kInf;
                },
                "sparse"};
  auto rs = mild_check(sparse, omega, g);
  CHECK_FALSE(rs.verdict);
  CHECK(rs.finite_area_fraction < 0.01);

  Weight bad{[](const ProjPoint&) { return std::numeric_limits<double>::quiet_NaN(); }, "nan"};
  CHECK_THROWS_AS(mild_check(bad, omega, g), ConfigError);
}

TEST_CASE("mild verdict is invariant under constant weight shifts", "[weights]") {
  SphereGrid g(1.25, 100);
  auto omega = OmegaSpec::fubini_study();
  auto base = mild_check(weight_zero(), omega, g);
  auto shifted = mild_check(weight_plus_const(weight_zero(), -0.5), omega, g);
  // cap-free regime: raw score scales by e^{0.5}, normalized score is unchanged
  CHECK(shifted.raw_score == Catch::Approx(base.raw_score * std::exp(0.5)).epsilon(1e-12));
  CHECK(shifted.continuity_score == Catch::Approx(base.continuity_score).epsilon(1e-12));
  CHECK(shifted.verdict == base.verdict);

  for (double c : {-0.5, 0.5})
    CHECK(mild_check(weight_plus_const(weight_log_dist(1.0), c), omega, g).verdict);
}

TEST_CASE("set catalog membership and rasterization", "[weights]") {
  SphereGrid g(1.25, 400);
  auto K = make_set("circle(1)", g.h / 2);
  CHECK(K.member(ProjPoint::from_chart(0, cplx(1.0, 0.0))));
  CHECK(K.member(ProjPoint::from_chart(0, cplx(0.0, -1.0))));
  CHECK_FALSE(K.member(ProjPoint::from_chart(0, cplx(0.5, 0.0))));
  CHECK_FALSE(K.member(ProjPoint::make(0.0, 1.0)));
  CHECK(K.has_param);
  CHECK(K.param_periodic);
  CHECK(K.param(0.25).close_to(ProjPoint::from_chart(0, cplx(0.0, 1.0)), 1e-12));
  CHECK(K.chart0_bound == Catch::Approx(1.0));

  auto mask = rasterize(K, g);
  CHECK(mask.count > 1000);       // about one node ring per chart
  CHECK(mask.at(g, 0, 360, 200));  // z = 1.0 exactly on this grid

  auto all = CompactSet::whole_sphere();
  CHECK(all.member(ProjPoint::make(0.0, 1.0)));
  CHECK(rasterize(all, SphereGrid(1.25, 10)).count == 2 * 11 * 11);

  auto seg = make_set("segment(-1,0,1,0)", 0.01);
  CHECK(seg.member(ProjPoint::from_chart(0, cplx(0.3, 0.0))));
  CHECK(seg.member(ProjPoint::from_chart(0, cplx(0.3, 0.009))));
  CHECK_FALSE(seg.member(ProjPoint::from_chart(0, cplx(0.3, 0.02))));
  CHECK_FALSE(seg.member(ProjPoint::from_chart(0, cplx(1.05, 0.0))));
  CHECK_FALSE(seg.param_periodic);
  CHECK(seg.param(0.0).close_to(ProjPoint::from_chart(0, cplx(-1.0, 0.0)), 1e-12));

  auto ann = make_set("annulus(0.5,0.8)", 0.01);
  CHECK(ann.member(ProjPoint::from_chart(0, cplx(0.6, 0.0))));
  CHECK_FALSE(ann.member(ProjPoint::from_chart(0, cplx(0.3, 0.0))));
  CHECK_THROWS_AS(make_set("annulus(0.8,0.5)", 0.01), ConfigError);
  CHECK_THROWS_AS(make_set("blob(1)", 0.01), ConfigError);
  CHECK_THROWS_AS(make_set("circle", 0.01), ConfigError);

  // disk membership through either chart representation of the same point
  auto D = make_set("disk(2)", 0.01);
  CHECK(D.member(ProjPoint::from_chart(1, cplx(0.6, 0.0))));  // |z| = 1/0.6 < 2
  CHECK_FALSE(D.member(ProjPoint::from_chart(1, cplx(0.4, 0.0))));
}

TEST_CASE("gauge shift pairs weight and form, validates positivity", "[weights]") {
  SphereGrid g(1.25, 100);
  auto omega = OmegaSpec::fubini_study();
  // global smooth gauge: 0.25 * (1/2) log(||diag(1,2)Z||^2 / ||Z||^2),
  // small enough that rho -+ lap(xi) stays positive in both directions
  auto xi_fn = [](int c, cplx z) {
    double n2 = std::norm(z);
    double num = c == 0 ? 1.0 + 4.0 * n2 : n2 + 4.0;
    double den = 1.0 + n2;
    return 0.25 * 0.5 * std::log(num / den);
  };
  auto xi = GaugeFunction::from_function(g, xi_fn);

  auto down = gauge_shift(weight_zero(), xi, -1, omega);
  auto up = gauge_shift(down.weight, xi, +1, omega);
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy < g.nodes(); iy += 7)
      for (int ix = 0; ix < g.nodes(); ix += 7) {
        cplx z = g.node(ix, iy);
        CHECK(up.weight.eval_chart(c, z) == Catch::Approx(0.0).margin(1e-12));
        // direction -1 density: rho - lap(xi) = 1.25 rho - 0.25 * 8/(1+4|z|^2)^2
        double expect = 1.25 * omega_density(z) - 0.25 * 8.0 / sq(1.0 + 4.0 * std::norm(z));
        if (c == 0 && g.interior(ix, iy))  // five-point stencil is O(h^2) off the continuum
          CHECK(down.omega_prime.density0(z) == Catch::Approx(expect).margin(0.02));
      }

  // constant gauge: densities untouched, weight shifted exactly
  auto cgauge = GaugeFunction::from_function(g, [](int, cplx) { return 0.2; });
  auto shifted = gauge_shift(weight_zero(), cgauge, -1, omega);
  CHECK(shifted.weight.eval_chart(0, cplx(0.3, 0.1)) == Catch::Approx(-0.2).margin(1e-12));
  CHECK(shifted.omega_prime.density0(cplx(0.3, 0.1)) ==
        Catch::Approx(omega_density(cplx(0.3, 0.1))).margin(1e-12));

  // a steep bump has lap(xi) << -rho at its crown: adding ddc(xi) goes negative
  auto dent = GaugeFunction::from_function(g, [](int c, cplx z) {
    if (c == 1) return 0.0;
    double r2 = std::norm(z);
    return r2 < 0.25 ? sq(1.0 - r2 / 0.25) : 0.0;
  });
  CHECK_THROWS_AS(gauge_shift(weight_zero(), dent, +1, omega), InvalidGaugeError);
  CHECK_THROWS_AS(gauge_shift(weight_zero(), xi, 2, omega), ConfigError);
}
