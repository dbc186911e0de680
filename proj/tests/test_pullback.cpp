// Rational self-maps: fibers and evaluation against hand roots, transport of
// functions and sets, the empirical constants, and the two envelope
// inequalities on fixtures whose continuum answers are known in closed form.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "plurigreen/pullback.hpp"

using namespace plurigreen;

namespace {

// height function (|z|^2 - 1) / (|z|^2 + 1), smooth on the whole sphere
double height(int c, cplx z) {
  double n = std::norm(z);
  return (c == 0 ? n - 1.0 : 1.0 - n) / (n + 1.0);
}

// log|z| extended over the sphere; -inf at the origin, +inf at infinity
double log_abs(int c, cplx z) {
  double a = std::abs(z);
  if (a == 0.0) return c == 0 ? -kInf : kInf;
  return c == 0 ? std::log(a) : -std::log(a);
}

bool contains_point(const std::vector<ProjPoint>& pts, const ProjPoint& q, double tol) {
  for (const ProjPoint& p : pts)
    if (p.close_to(q, tol)) return true;
  return false;
}

}  // namespace

TEST_CASE("rational map construction enforces coprimality and degree", "[pullback]") {
  auto sq = RationalMap::power(2);
  CHECK(sq.d == 2);
  CHECK(sq.ph.size() == 3);
  CHECK(sq.qh.size() == 3);

  CHECK(RationalMap::identity().d == 1);
  CHECK(RationalMap::rotation(0.7).d == 1);

  // (z^2 - 1) / (z - 1) drops to the identity only after cancellation
  CHECK_THROWS_AS(RationalMap::make({-1.0, 0.0, 1.0}, {-1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(RationalMap::make({}, {1.0}), ConfigError);
  CHECK_THROWS_AS(RationalMap::make({2.0}, {1.0}), ConfigError);
  CHECK_THROWS_AS(RationalMap::power(0), ConfigError);

  // trailing zeros trim to the minimal representation, so no spurious common
  // root at infinity can arise from padding
  CHECK(RationalMap::make({0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}).d == 1);
  CHECK_NOTHROW(RationalMap::make({0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}));
}

TEST_CASE("evaluation matches hand values and respects scaling", "[pullback]") {
  auto sq = RationalMap::power(2);
  CHECK(eval_map(sq, ProjPoint::from_chart(0, 2.0)).close_to(ProjPoint::from_chart(0, 4.0)));
  CHECK(eval_map(sq, ProjPoint::from_chart(0, cplx(0.0, 1.0)))
            .close_to(ProjPoint::from_chart(0, -1.0)));
  CHECK(eval_map(sq, ProjPoint::make(0.0, 1.0)).close_to(ProjPoint::make(0.0, 1.0)));

  auto mob = RationalMap::make({-1.0, 1.0}, {1.0, 1.0});  // (z - 1) / (z + 1)
  CHECK(eval_map(mob, ProjPoint::from_chart(0, 1.0)).close_to(ProjPoint::from_chart(0, 0.0)));
  CHECK(eval_map(mob, ProjPoint::from_chart(0, -1.0)).close_to(ProjPoint::make(0.0, 1.0)));
  CHECK(eval_map(mob, ProjPoint::make(0.0, 1.0)).close_to(ProjPoint::from_chart(0, 1.0)));

  // projective representatives of one point land on one image
  CHECK(eval_map(sq, ProjPoint::make(2.0, 4.0)).close_to(eval_map(sq, ProjPoint::make(1.0, 2.0))));
}

TEST_CASE("fibers carry degree many points with multiplicity", "[pullback]") {
  auto sq = RationalMap::power(2);

  auto at_one = preimages(sq, ProjPoint::from_chart(0, 1.0));
  REQUIRE(at_one.size() == 2);
  CHECK(contains_point(at_one, ProjPoint::from_chart(0, 1.0), 1e-9));
  CHECK(contains_point(at_one, ProjPoint::from_chart(0, -1.0), 1e-9));

  // double root at the origin lands as a snapped cluster
  auto at_zero = preimages(sq, ProjPoint::from_chart(0, 0.0));
  REQUIRE(at_zero.size() == 2);
  for (const ProjPoint& p : at_zero) CHECK(p.close_to(ProjPoint::from_chart(0, 0.0), 1e-6));

  // fiber over infinity is entirely at infinity (degree drop branch)
  auto at_inf = preimages(sq, ProjPoint::make(0.0, 1.0));
  REQUIRE(at_inf.size() == 2);
  for (const ProjPoint& p : at_inf) CHECK(p.close_to(ProjPoint::make(0.0, 1.0), 1e-12));

  // z^3 - z + 1/10 over y = 1/10: the fiber solves z^3 = z
  auto cubic = RationalMap::make({0.1, -1.0, 0.0, 1.0}, {1.0});
  auto fiber = preimages(cubic, ProjPoint::from_chart(0, 0.1));
  REQUIRE(fiber.size() == 3);
  for (cplx root : {cplx(0.0), cplx(1.0), cplx(-1.0)})
    CHECK(contains_point(fiber, ProjPoint::from_chart(0, root), 1e-8));
}

TEST_CASE("random fibers have full degree and map back onto the target", "[pullback]") {
  auto f = RationalMap::make({-1.0, 0.0, 0.0, 1.0}, {2.0, 1.0});  // (z^3 - 1) / (z + 2)
  std::mt19937 rng(12345u);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    ProjPoint y = ProjPoint::make(cplx(coord(rng), coord(rng)), cplx(coord(rng), coord(rng)));
    auto fiber = preimages(f, y);
    REQUIRE(fiber.size() == 3);
    for (const ProjPoint& p : fiber) CHECK(eval_map(f, p).close_to(y, 1e-6));
  }
}

TEST_CASE("pullback and pushforward transport grid functions", "[pullback]") {
  SphereGrid g(1.25, 100);
  auto id = RationalMap::identity();
  auto sq = RationalMap::power(2);

  GridField h3(g, height);
  GridField back = pullback_u(id, h3);
  double worst = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= g.n_cells; ++iy)
      for (int ix = 0; ix <= g.n_cells; ++ix)
        worst = std::max(worst, std::abs(back.at(c, ix, iy) - h3.at(c, ix, iy)));
  CHECK(worst <= 0.01);

  // (z^2)^* log|z| doubles the logarithm on a band clear of the poles
  GridField lg(g, log_abs);
  GridField pulled = pullback_u(sq, lg);
  for (int iy = 0; iy <= g.n_cells; ++iy)
    for (int ix = 0; ix <= g.n_cells; ++ix) {
      cplx z = g.node(ix, iy);
      double r = std::abs(z);
      if (r < 0.3 || r > 0.9) continue;
      CHECK(pulled.at(0, ix, iy) == Catch::Approx(2.0 * std::log(r)).margin(0.02));
    }

  // constants transport exactly both ways
  GridField ones(g, 0.75);
  GridField fwd = pushforward_u(sq, ones);
  GridField bck = pullback_u(sq, ones);
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= g.n_cells; ++iy)
      for (int ix = 0; ix <= g.n_cells; ++ix) {
        CHECK(fwd.at(c, ix, iy) == Catch::Approx(0.75).margin(1e-12));
        CHECK(bck.at(c, ix, iy) == Catch::Approx(0.75).margin(1e-12));
      }

  // f^* f_* u dominates u: the fiber of f(x) contains x
  GridField u(g, [](int c, cplx z) { return 0.1 * height(c, z); });
  GridField round = pullback_u(sq, pushforward_u(sq, u));
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= g.n_cells; ++iy)
      for (int ix = 0; ix <= g.n_cells; ++ix)
        CHECK(round.at(c, ix, iy) >= u.at(c, ix, iy) - 0.02);
}

TEST_CASE("density ratio bound reproduces closed-form degrees", "[pullback]") {
  SphereGrid g(1.25, 200);
  auto fs = OmegaSpec::fubini_study();

  CHECK(estimate_beta(RationalMap::identity(), fs, g) == Catch::Approx(1.0).margin(1e-9));
  // z^d attains ratio d^2 exactly on the unit circle, which the grid hits at
  // the axis nodes
  CHECK(estimate_beta(RationalMap::power(2), fs, g) == Catch::Approx(4.0).margin(0.01));
  CHECK(estimate_beta(RationalMap::power(3), fs, g) == Catch::Approx(9.0).margin(0.02));
  // sphere rotations are isometries
  CHECK(estimate_beta(RationalMap::rotation(0.7), fs, g) == Catch::Approx(1.0).margin(1e-6));

  // precomposing with an isometry preserves the bound
  double c = std::cos(0.7), s = std::sin(0.7);
  auto composed = RationalMap::make({s * s, -2.0 * c * s, c * c}, {c * c, 2.0 * c * s, s * s});
  CHECK(estimate_beta(composed, fs, g) ==
        Catch::Approx(estimate_beta(RationalMap::power(2), fs, g)).margin(1e-3));
}

TEST_CASE("pulled-back form carries degree times the total mass", "[pullback]") {
  SphereGrid g(1.25, 200);
  auto fs = OmegaSpec::fubini_study();
  double base = omega_total_mass(fs, g);

  OmegaSpec sq = pullback_form(RationalMap::power(2), fs);
  CHECK(omega_total_mass(sq, g) == Catch::Approx(2.0 * base).epsilon(0.02));

  auto cubic = RationalMap::make({0.1, -1.0, 0.0, 1.0}, {1.0});
  OmegaSpec cu = pullback_form(cubic, fs);
  CHECK(omega_total_mass(cu, g) == Catch::Approx(3.0 * base).epsilon(0.02));

  OmegaSpec rot = pullback_form(RationalMap::rotation(0.7), fs);
  CHECK(omega_total_mass(rot, g) == Catch::Approx(base).epsilon(0.02));
}

TEST_CASE("set and weight transport answer membership through the map", "[pullback]") {
  auto sq = RationalMap::power(2);
  CompactSet K = CompactSet::circle(1.0);

  CompactSet pre = pullback_set(sq, K);
  CHECK(pre.member(ProjPoint::from_chart(0, 1.0)));
  CHECK(pre.member(ProjPoint::from_chart(0, cplx(0.0, -1.0))));
  CHECK(!pre.member(ProjPoint::from_chart(0, 0.9)));

  CompactSet img = image_set(sq, K);
  CHECK(img.member(ProjPoint::from_chart(0, 1.0)));
  CHECK(img.member(ProjPoint::from_chart(0, -1.0)));  // fiber {i, -i} sits on K
  CHECK(!img.member(ProjPoint::from_chart(0, 0.25)));

  Weight Q{[](const ProjPoint& p) { return std::norm(p.coord(0)); }, "r2"};
  Weight half = pullback_weight(sq, Q, 2.0);
  CHECK(half.eval(ProjPoint::from_chart(0, 2.0)) == Catch::Approx(8.0));  // |z^2|^2 / 2
  CHECK_THROWS_AS(pullback_weight(sq, Q, 0.0), ConfigError);
}

TEST_CASE("sandwich parameter validation", "[pullback]") {
  CHECK_NOTHROW(SandwichParams::make(1.0, 1.0, "user"));
  CHECK_NOTHROW(SandwichParams::make(1.02, 4.0, "estimated"));
  CHECK_THROWS_AS(SandwichParams::make(1.0, 2.0, "user"), ConfigError);
  CHECK_THROWS_AS(SandwichParams::make(0.9, 2.0, "user"), ConfigError);
  CHECK_THROWS_AS(SandwichParams::make(2.0, 1.5, "user"), ConfigError);
  CHECK_THROWS_AS(SandwichParams::make(1.02, 4.0, "guess"), ConfigError);
}

TEST_CASE("pushforward certificate clears fixtures and flags absurd constants", "[pullback]") {
  SphereGrid g(1.25, 50);
  auto fs = OmegaSpec::fubini_study();
  auto sq = RationalMap::power(2);

  std::vector<ChartFunction> battery = {
      [](int, cplx) { return 0.3; },
      log_abs,
      [](int c, cplx z) { return 0.1 * height(c, z); },
  };

  AlphaReport mild = check_alpha(sq, 1.02, battery, fs, g);
  CHECK(!mild.violation);
  // measured 0.129: the floor is the curvature density at the grid corner
  CHECK(mild.worst_residual >= 0.0);
  CHECK(mild.excluded_nodes == 2 * 7 * 7);  // one 3-cell collar per critical value
  REQUIRE(mild.critical_values.size() == 2);
  CHECK(contains_point(mild.critical_values, ProjPoint::from_chart(0, 0.0), 1e-9));
  CHECK(contains_point(mild.critical_values, ProjPoint::make(0.0, 1.0), 1e-9));
  // the log input fails its own discrete certificate near the pole; recorded,
  // not enforced
  REQUIRE(mild.precondition_residuals.size() == 3);
  CHECK(mild.precondition_residuals[1] < -1.0);

  // alpha = degree on the log input: the first ring past the collar keeps a
  // positive residual (measured 0.13) only because the collar absorbs k <= 3
  AlphaReport doubled = check_alpha(sq, 2.0, {battery[1]}, fs, g);
  CHECK(!doubled.violation);
  CHECK(doubled.worst_residual >= 0.0);

  AlphaReport absurd = check_alpha(sq, 1e6, battery, fs, g);
  CHECK(absurd.violation);
  CHECK(absurd.worst_residual < -0.05);
  CHECK(absurd.witness_chart >= 0);
  CHECK(absurd.witness_ix > 0);

  // the identity has no critical values and no collar; smooth inputs only
  AlphaReport id = check_alpha(RationalMap::identity(), 1.0,
                               {battery[0], battery[2]}, fs, g);
  CHECK(!id.violation);
  CHECK(id.critical_values.empty());
  CHECK(id.excluded_nodes == 0);

  CHECK_THROWS_AS(check_alpha(sq, 0.0, battery, fs, g), ConfigError);
}

TEST_CASE("identity sandwich collapses to the plain envelope", "[pullback]") {
  SphereGrid g(1.25, 100);
  auto rep = verify_sandwich(RationalMap::identity(), CompactSet::circle(1.0), weight_zero(),
                             SandwichParams::make(1.0, 1.0, "user"), OmegaSpec::fubini_study(), g);
  CHECK(rep.converged);
  CHECK(rep.lower_defect <= 2e-9);
  CHECK(rep.upper_defect <= 2e-9);
}

TEST_CASE("squaring map sandwich holds with estimated constants", "[pullback]") {
  SphereGrid g(1.25, 200);
  auto fs = OmegaSpec::fubini_study();
  auto sq = RationalMap::power(2);
  CompactSet K = CompactSet::circle(1.0);

  double beta = estimate_beta(sq, fs, g);
  CHECK(beta == Catch::Approx(4.0).margin(0.01));

  auto rep = verify_sandwich(sq, K, weight_zero(), SandwichParams::make(1.02, beta, "estimated"),
                             fs, g);
  CHECK(rep.converged);
  // continuum upper defect is 0 (attained on K); lower defect is
  // 0.02 * V(0) ~ 0.0069; the rest is grid error (measured 0.0035 / 0.0096)
  CHECK(rep.upper_defect <= 0.02);
  CHECK(rep.lower_defect <= 0.02);
}

TEST_CASE("identity image inequality is tight", "[pullback]") {
  SphereGrid g(1.25, 100);
  auto rep = verify_image_inequality(RationalMap::identity(), CompactSet::circle(1.0),
                                     weight_zero(), OmegaSpec::fubini_study(), g);
  CHECK(rep.converged);
  CHECK(rep.defect <= 2e-9);
  CHECK(rep.pullback_mass == Catch::Approx(2.0 * kPi).epsilon(0.02));
}

TEST_CASE("squaring map image inequality on the unit circle", "[pullback]") {
  SphereGrid g(1.25, 200);
  auto rep = verify_image_inequality(RationalMap::power(2), CompactSet::circle(1.0),
                                     weight_zero(), OmegaSpec::fubini_study(), g);
  CHECK(rep.converged);
  // both sides agree in the continuum here (the preimage of the image is K);
  // the defect is pure discretization (measured 0.0039)
  CHECK(rep.defect <= 0.02);
  CHECK(rep.pullback_mass == Catch::Approx(4.0 * kPi).epsilon(0.02));
}

TEST_CASE("isometries transport envelopes equivariantly", "[pullback]") {
  SphereGrid g(1.25, 150);
  auto fs = OmegaSpec::fubini_study();
  auto rot = RationalMap::rotation(0.7);
  CompactSet K = CompactSet::circle(1.0);

  auto moved = solve_envelope(image_set(rot, K), weight_zero(), fs, g);
  auto fixed = solve_envelope(K, weight_zero(), fs, g);
  REQUIRE(moved.converged);
  REQUIRE(fixed.converged);

  double worst = 0.0;
  for (double r : {0.3, 0.7, 1.0, 1.4})
    for (int k = 0; k < 64; ++k) {
      ProjPoint p = ProjPoint::from_chart(0, std::polar(r, 2.0 * kPi * k / 64.0));
      double a = moved.V.interp_point(eval_map(rot, p));
      double b = fixed.V.interp_point(p);
      worst = std::max(worst, std::abs(a - b));
    }
  // rasterizing the rotated ring band picks different nodes; measured 0.038
  CHECK(worst <= 0.08);

  // one-sided inequality via the pulled-back form, same fixture
  auto rep = verify_image_inequality(rot, K, weight_zero(), fs, g);
  CHECK(rep.converged);
  CHECK(rep.defect <= 0.08);
  CHECK(rep.pullback_mass == Catch::Approx(2.0 * kPi).epsilon(0.02));
}
