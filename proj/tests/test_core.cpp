#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>

#include "plurigreen/core.hpp"

using namespace plurigreen;

static constexpr double kHalfLog2 = 0.34657359027997264;

TEST_CASE("fubini-study potential and density reference values", "[core]") {
  CHECK(fs_potential(0.0) == 0.0);
  CHECK(fs_potential(cplx(1.0, 0.0)) == Catch::Approx(kHalfLog2).epsilon(1e-15));
  CHECK(fs_potential(cplx(0.5, 0.0)) == Catch::Approx(0.11157177565710488).margin(1e-12));
  CHECK(omega_density(0.0) == 2.0);
  CHECK(omega_density(cplx(1.0, 0.0)) == Catch::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("potential cocycle phi0(z) - phi1(1/z) = log|z|", "[core]") {
  for (cplx z : {cplx(0.9, 0.3), cplx(-1.7, 0.2), cplx(0.0, 2.5), cplx(4.0, -3.0)}) {
    double lhs = fs_potential(z) - fs_potential(1.0 / z);
    CHECK(lhs == Catch::Approx(std::log(std::abs(z))).margin(1e-12));
  }
}

TEST_CASE("projective normalization and chart transition", "[core]") {
  auto p = ProjPoint::make(1.0, 2.0);
  auto [c, zeta] = chart_transition(p);
  CHECK(c == 1);
  CHECK(zeta == cplx(0.5, 0.0));

  auto tie = ProjPoint::make(cplx(3.0, 0.0), cplx(0.0, 3.0));  // equal moduli -> chart 0
  CHECK(tie.chart() == 0);
  CHECK(std::abs(tie.coord(0)) == Catch::Approx(1.0));

  auto inf = ProjPoint::make(0.0, 5.0);
  CHECK(inf.chart() == 1);
  CHECK(inf.coord(1) == cplx(0.0, 0.0));
  CHECK_THROWS_AS(inf.coord(0), ConfigError);
  CHECK_THROWS_AS(ProjPoint::make(0.0, 0.0), ConfigError);

  CHECK(ProjPoint::from_chart(0, cplx(3.0, 0.0)).close_to(ProjPoint::from_chart(1, cplx(1.0 / 3, 0.0))));
  CHECK_FALSE(ProjPoint::from_chart(0, 0.0).close_to(ProjPoint::from_chart(1, 0.0)));
}

TEST_CASE("grid parameter validation", "[core]") {
  CHECK_THROWS_AS(SphereGrid(1.0, 100), ConfigError);   // charts would not overlap
  CHECK_THROWS_AS(SphereGrid(1.25, 101), ConfigError);  // odd cell count
  CHECK_THROWS_AS(SphereGrid(1.25, 4), ConfigError);
  SphereGrid g(1.25, 400);
  CHECK(g.h == Catch::Approx(0.00625));
  CHECK(g.nodes() == 401);
  CHECK(g.node(200, 200) == cplx(0.0, 0.0));
  CHECK(g.in_overlap(cplx(0.9, 0.0)));
  CHECK_FALSE(g.in_overlap(cplx(0.5, 0.5)));
}

TEST_CASE("partition of unity is a partition over the covered sphere", "[core]") {
  SphereGrid g(1.25, 80);
  // interior of one chart: the other chart does not sample it
  CHECK(pou_weight(g, cplx(0.1, 0.1)) == 1.0);
  // overlap: the two chart weights of one sphere point sum to 1
  for (cplx z : {cplx(0.95, 0.0), cplx(0.0, -1.1), cplx(0.85, 0.35)}) {
    double a = pou_weight(g, z);
    double b = pou_weight(g, 1.0 / z);
    CHECK(a + b == Catch::Approx(1.0).margin(1e-14));
  }
  // corner nodes beyond |z| = half_width belong wholly to the other chart
  CHECK(pou_weight(g, g.node(0, 0)) == 0.0);
  CHECK(pou_weight(g, 1.0 / g.node(0, 0)) == 1.0);
}

TEST_CASE("total omega mass is 2*pi within one percent", "[core]") {
  SphereGrid g(1.25, 400);
  double mass = omega_total_mass(OmegaSpec::fubini_study(), g);
  CHECK(mass == Catch::Approx(2.0 * kPi).epsilon(0.01));
}

TEST_CASE("omega spec validation flags density and cocycle errors", "[core]") {
  SphereGrid g(1.25, 200);
  std::vector<std::pair<int, cplx>> samples;
  for (int c = 0; c < 2; ++c)
    for (int iy = 20; iy < g.nodes() - 20; iy += 37)
      for (int ix = 20; ix < g.nodes() - 20; ix += 37) samples.push_back({c, g.node(ix, iy)});

  auto good = OmegaSpec::fubini_study().validate(samples, g.h);
  CHECK(good.max_rel_laplace_err < 1e-3);
  CHECK(good.max_cocycle_err < 1e-12);
  CHECK(good.min_density > 0.0);

  auto bad = OmegaSpec::fubini_study();
  bad.density0 = [](cplx z) { return 3.0 * omega_density(z); };
  CHECK(bad.validate(samples, g.h).max_rel_laplace_err > 0.5);
}

TEST_CASE("grid field interpolation and laplacian", "[core]") {
  SphereGrid g(1.25, 100);
  GridField quad(g, [](int, cplx z) { return z.real() * z.real() - z.imag() * z.imag(); });
  // harmonic quadratic: the five-point stencil vanishes exactly
  CHECK(laplacian_at(quad, 0, 50, 50) == Catch::Approx(0.0).margin(1e-9));
  GridField rsq(g, [](int, cplx z) { return std::norm(z); });
  CHECK(laplacian_at(rsq, 1, 30, 70) == Catch::Approx(4.0).margin(1e-9));

  // bilinear interpolation reproduces bilinear data exactly, clamps outside
  GridField lin(g, [](int, cplx z) { return 2.0 * z.real() - z.imag() + 0.25; });
  CHECK(lin.interp(0, cplx(0.103, -0.517)) == Catch::Approx(2.0 * 0.103 + 0.517 + 0.25).margin(1e-12));
  CHECK(lin.interp(0, cplx(99.0, 0.0)) == Catch::Approx(lin.interp(0, cplx(1.25, 0.0))).margin(1e-12));

  // a non-finite corner propagates as a signed infinity, never NaN
  GridField spike(g, 0.0);
  spike.at(0, 50, 50) = std::numeric_limits<double>::infinity();
  CHECK(std::isinf(spike.interp(0, g.node(50, 50) + cplx(g.h / 3, 0))));
  CHECK(spike.interp(0, g.node(50, 50) + cplx(g.h / 3, 0)) > 0);
}

TEST_CASE("interp_point routes through the bounded-coordinate chart", "[core]") {
  SphereGrid g(1.25, 100);
  GridField f(g, [](int c, cplx z) { return c == 0 ? 1.0 : -1.0; });
  CHECK(f.interp_point(ProjPoint::from_chart(0, cplx(0.2, 0.0))) == 1.0);
  CHECK(f.interp_point(ProjPoint::from_chart(0, cplx(5.0, 0.0))) == -1.0);  // |z|>1 -> chart 1
  CHECK(f.interp_point(ProjPoint::make(0.0, 1.0)) == -1.0);
}

TEST_CASE("seam discrepancy of a smooth global function is interpolation-small", "[core]") {
  SphereGrid g(1.25, 200);
  // height function |z1|^2/|Z|^2: chart 0 reads |z|^2/(1+|z|^2), chart 1 reads 1/(1+|w|^2)
  GridField f(g, [](int c, cplx z) {
    double t = std::norm(z) / (1.0 + std::norm(z));
    return c == 0 ? t : 1.0 - t;
  });
  CHECK(seam_discrepancy(f) < 1e-3);

  auto [synced, rep] = sync_seam(f);
  CHECK(rep.overlap_nodes > 0);
  CHECK(rep.discrepancy == Catch::Approx(seam_discrepancy(f)));
  CHECK(seam_discrepancy(synced) <= seam_discrepancy(f) + 1e-15);
}

TEST_CASE("seam sync takes the minimum and absorbs unbounded nodes", "[core]") {
  SphereGrid g(1.25, 40);
  GridField f(g, 0.0);
  // an isolated +inf in the overlap is replaced by the other chart's value
  f.at(0, 0, 20) = std::numeric_limits<double>::infinity();  // z = -1.25, in overlap
  auto [synced, rep] = sync_seam(f);
  CHECK(synced.at(0, 0, 20) == 0.0);
  // minimum rule: a lower value survives in place
  GridField h(g, 0.0);
  h.at(0, 0, 20) = -1.0;
  CHECK(sync_seam(h).first.at(0, 0, 20) == -1.0);
}

TEST_CASE("field csv round trip preserves values and grid shape", "[core]") {
  SphereGrid g(1.25, 10);
  GridField f(g, [](int c, cplx z) { return std::sin(z.real()) + c; });
  f.at(0, 3, 4) = std::numeric_limits<double>::quiet_NaN();
  f.at(1, 0, 0) = std::numeric_limits<double>::infinity();
  f.at(1, 10, 10) = -std::numeric_limits<double>::infinity();

  auto path = std::filesystem::temp_directory_path() / "plurigreen_core_roundtrip.csv";
  write_field_csv(f, path);
  auto back = read_field_csv(path);
  REQUIRE(back.grid.n_cells == g.n_cells);
  REQUIRE(back.grid.half_width == Catch::Approx(g.half_width));
  for (int c = 0; c < 2; ++c)
    for (int iy = 0; iy <= g.n_cells; ++iy)
      for (int ix = 0; ix <= g.n_cells; ++ix) {
        double a = f.at(c, ix, iy), b = back.at(c, ix, iy);
        if (std::isnan(a))
          CHECK(std::isnan(b));
        else
          CHECK(a == b);  // %.17g is exact for doubles
      }
  std::filesystem::remove(path);
}

TEST_CASE("value formatting emits the documented tokens", "[core]") {
  CHECK(format_value(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_value(std::numeric_limits<double>::infinity()) == "+inf");
  CHECK(format_value(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(parse_value("0.34657359027997264") == Catch::Approx(kHalfLog2).epsilon(1e-16));
}
