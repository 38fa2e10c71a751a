#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stablenorm/cell_solver.hpp"
#include "stablenorm/stable_norm.hpp"
#include "support.hpp"

using namespace stablenorm;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

TEST_SUITE("cell_solver") {
  TEST_CASE("parameter validation") {
    const Grid g = Grid::torus(2, 16);
    SolverParams sp;
    CHECK_NOTHROW(sp.validate(g));
    sp.tau = 1.0;
    sp.sigma = 1.0;
    CHECK_THROWS_AS(sp.validate(g), std::invalid_argument);
    SolverParams bad;
    bad.tol_gap = 0.0;
    CHECK_THROWS_AS(bad.validate(g), std::invalid_argument);
    CHECK(SolverParams{}.primal_step(g) == doctest::Approx(g.h() / (2.0 * std::sqrt(2.0))));
    CHECK(SolverParams{}.feas_tolerance(g) == doctest::Approx(16e-6));
  }

  TEST_CASE("domain errors") {
    const PeriodicMetric m(MediumSpec::homogeneous_medium());
    CHECK_THROWS_AS(solve_cell(m, Grid::torus(2, 16), vec2(0, 0)), std::invalid_argument);
    CHECK_THROWS_AS(solve_cell(m, Grid::box(16, 1.0), vec2(1, 0)), std::invalid_argument);
  }

  TEST_CASE("homogeneous medium: phi = |p|, v = 0, z = p/|p|") {
    const PeriodicMetric m(MediumSpec::homogeneous_medium());
    for (int n : {16, 32}) {
      const CellSolution s = solve_cell(m, Grid::torus(2, n), vec2(1, 0));
      CHECK(s.certified);
      CHECK(std::abs(s.primal - 1.0) <= 0.02);
      for (double x : s.v.values) CHECK(std::abs(x) < 1e-6);
      for (std::size_t j = 0; j < s.z.grid.flux_cells(); ++j) {
        CHECK(s.z.at(j)[0] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(s.z.at(j)[1]) < 1e-6);
      }
      const SubgradientEstimate sg = subgradient_estimate(s);
      CHECK(sg.certified);
      CHECK(sg.value[0] == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(std::abs(sg.value[1]) < 1e-6);
    }
  }

  TEST_CASE("laminate values and subgradients against the layer oracle") {
    const PeriodicMetric m(MediumSpec::laminate_medium(1.0, 2.0));
    const LayerProfile prof = LayerProfile::from_metric(m);
    const Grid g = Grid::torus(2, 64);
    const CellSolution s1 = solve_cell(m, g, vec2(1, 0));
    const CellSolution s2 = solve_cell(m, g, vec2(0, 1));
    CHECK(s1.certified);
    CHECK(s2.certified);
    CHECK(std::abs(s1.primal - laminate_oracle(prof, vec2(1, 0)).phi) <= 0.015);
    CHECK(std::abs(s2.primal - laminate_oracle(prof, vec2(0, 1)).phi) <= 0.01);
    const Vec g1 = subgradient_estimate(s1).value;
    CHECK(g1[0] == doctest::Approx(1.5).epsilon(0.01));
    CHECK(std::abs(g1[1]) <= 0.01);
    const Vec g2 = subgradient_estimate(s2).value;
    CHECK(g2[1] == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::abs(g2[0]) <= std::sqrt(3.0) / 2.0 + 0.01);
    CHECK(dot(g2, s2.p) == doctest::Approx(s2.dual).epsilon(1e-12));
  }

  TEST_CASE("primal energy of explicit competitors") {
    const PeriodicMetric hom(MediumSpec::homogeneous_medium());
    const Grid g = Grid::torus(2, 32);
    CHECK(primal_energy(hom, g, vec2(3, 4), ScalarField(g)) == doctest::Approx(5.0).epsilon(1e-12));

    for (const MediumSpec& spec : testing::gallery()) {
      const PeriodicMetric m(spec);
      const CellSolution s = solve_cell(m, Grid::torus(2, 16), vec2(1, 2));
      CHECK(primal_energy(m, Grid::torus(2, 16), vec2(1, 2), ScalarField(Grid::torus(2, 16))) >= s.primal - 1e-12);
    }

    // Sawtooth in x2 with slope +1 on the a = 1 layer and -1 on the a = 2 layer puts all of
    // p + Dv = (0, 2) into the cheap layer: continuum energy 1/2 * 1 * 2 = 1 = phi(e2).
    const PeriodicMetric lam(MediumSpec::laminate_medium(1.0, 2.0));
    double previous = 1e9;
    for (int n : {16, 32, 64, 128}) {
      const Grid gn = Grid::torus(2, n);
      ScalarField v(gn);
      for (std::size_t i = 0; i < gn.cells(); ++i) {
        const double t = gn.cell_center(i)[1];
        v[i] = t < 0.5 ? t : 1.0 - t;
      }
      const double e = primal_energy(lam, gn, vec2(0, 1), v);
      const double err = std::abs(e - 1.0);
      CHECK(err < previous);
      previous = err;
    }
    CHECK(previous <= 0.02);
  }

  TEST_CASE("solution invariants across the medium gallery") {
    for (const MediumSpec& spec : testing::gallery()) {
      CAPTURE(to_string(spec.kind));
      CAPTURE(to_string(spec.base.kind));
      const PeriodicMetric m(spec);
      const Grid g = Grid::torus(2, 32);
      const Vec p = vec2(2, 1);
      const CellSolution s = solve_cell(m, g, p);
      CHECK(s.certified);
      CHECK(s.feas_residual <= 1e-12);
      CHECK(std::abs(mean(s.v.values)) <= 1e-12);
      CHECK(s.weak_duality_violation <= 0.0);
      CHECK(s.gap <= s.relative_gap() * s.primal + 1e-15);
      CHECK(s.relative_gap() <= SolverParams{}.tol_gap);
      CHECK(s.div_residual <= SolverParams{}.feas_tolerance(g));
      double upper = 0.0;
      for (std::size_t i = 0; i < g.cells(); ++i) upper += m.eval(g.cell_center(i), p);
      upper *= g.cell_volume();
      CHECK(s.primal <= upper + 1e-12);
      CHECK(s.primal >= m.c0() * norm2(p) - 1e-12);

      for (double lambda : {2.0, 5.0}) {
        const CellSolution sl = solve_cell(m, g, lambda * p);
        CHECK(std::abs(sl.primal - lambda * s.primal) <= 2.0 * SolverParams{}.tol_gap * sl.primal);
      }
    }
  }

  TEST_CASE("translation equivariance under a one-cell shift of a sampled medium") {
    const int n = 16;
    std::vector<double> a(n * n), b(n * n);
    testing::Sampler s(31);
    for (auto& x : a) x = s.uniform(1.0, 2.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) b[((i + 1) % n) * n + j] = a[i * n + j];
    }
    const PeriodicMetric ma(MediumSpec::sampled_medium(n, a)), mb(MediumSpec::sampled_medium(n, b));
    const Grid g = Grid::torus(2, n);
    SolverParams sp;
    sp.multilevel = false;
    const CellSolution sa = solve_cell(ma, g, vec2(1, 1), sp), sb = solve_cell(mb, g, vec2(1, 1), sp);
    CHECK(std::abs(sa.primal - sb.primal) <= 1e-12 * sa.primal);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(sb.v[((i + 1) % n) * n + j] - sa.v[i * n + j]));
    }
    CHECK(worst <= 1e-9);
  }

  TEST_CASE("non-convergence is flagged, never thrown") {
    const PeriodicMetric m(MediumSpec::laminate_medium(1.0, 2.0));
    SolverParams sp;
    sp.max_iters = 10;
    sp.multilevel = false;
    CellSolution s(Grid::torus(2, 32));
    CHECK_NOTHROW(s = solve_cell(m, Grid::torus(2, 32), vec2(0, 1), sp));
    CHECK_FALSE(s.certified);
    CHECK_FALSE(subgradient_estimate(s).certified);
  }

  TEST_CASE("three-dimensional cell problem") {
    MediumSpec spec = MediumSpec::homogeneous_medium();
    spec.dim = 3;
    const PeriodicMetric m(spec);
    const CellSolution s = solve_cell(m, Grid::torus(3, 8), {1.0, 2.0, 2.0});
    CHECK(s.certified);
    CHECK(s.primal == doctest::Approx(3.0).epsilon(0.02));
  }
}
