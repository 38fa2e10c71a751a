#include <doctest.h>

#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stablenorm/isoperimetric.hpp"
#include "support.hpp"

using namespace stablenorm;

namespace {

// Direct evaluation of h^2 sum_j a(x_j) N((D chi)_j) over the (n+1)^2 forward-difference lattice
// of a box with zero exterior.
double stencil_energy(const PeriodicMetric& m, const BitMask& e, double period = 1.0) {
  const Grid& g = e.grid;
  const int n = g.n();
  const double h = g.h();
  auto chi = [&](int a, int b) {
    return (a < 0 || b < 0 || a >= n || b >= n) ? 0.0 : double(e[std::size_t(a) * n + b]);
  };
  double sum = 0.0;
  for (int a = -1; a < n; ++a) {
    for (int b = -1; b < n; ++b) {
      const Vec d = vec2((chi(a + 1, b) - chi(a, b)) / h, (chi(a, b + 1) - chi(a, b)) / h);
      if (d[0] == 0.0 && d[1] == 0.0) continue;
      const Vec x = g.origin() + vec2((a + 0.5) * h, (b + 0.5) * h);
      sum += h * h * m.coefficient((1.0 / period) * x) * m.base().value(d);
    }
  }
  return sum;
}

BitMask block(const Grid& g, int a0, int b0, int size) {
  BitMask e(g);
  for (int a = a0; a < a0 + size; ++a) {
    for (int b = b0; b < b0 + size; ++b) e.set(g.ravel({a, b, 0}), true);
  }
  return e;
}

const PeriodicMetric& euclid() {
  static const PeriodicMetric m(MediumSpec::homogeneous_medium());
  return m;
}

const PeriodicMetric& laminate() {
  static const PeriodicMetric m(MediumSpec::laminate_medium(1.0, 2.0));
  return m;
}

}  // namespace

TEST_SUITE("isoperimetric") {
  TEST_CASE("mask energy: stencil oracle, then closed forms") {
    const PeriodicMetric l1(MediumSpec::homogeneous_medium(1.0, BaseNormKind::ell1));
    const Grid g = Grid::box(8, 1.0);
    const double h = g.h();
    const BitMask one = block(g, 3, 3, 1), four = block(g, 3, 3, 2), full(g, true);
    for (const BitMask* e : {&one, &four, &full}) {
      CHECK(set_energy(euclid(), g, *e) == doctest::Approx(stencil_energy(euclid(), *e)).epsilon(1e-14));
      CHECK(set_energy(l1, g, *e) == doctest::Approx(stencil_energy(l1, *e)).epsilon(1e-14));
      CHECK(set_energy(laminate(), g, *e) == doctest::Approx(stencil_energy(laminate(), *e)).epsilon(1e-14));
    }
    // One diagonal flux cell sees |(1, 1)| / h for the Euclidean base.
    CHECK(set_energy(euclid(), g, one) == doctest::Approx((2.0 + std::sqrt(2.0)) * h).epsilon(1e-14));
    CHECK(set_energy(euclid(), g, one) == doctest::Approx(0.4267766952966369).epsilon(1e-14));
    CHECK(set_energy(euclid(), g, four) == doctest::Approx((6.0 + std::sqrt(2.0)) * h).epsilon(1e-14));
    CHECK(set_energy(euclid(), g, full) == doctest::Approx(4.0 - (2.0 - std::sqrt(2.0)) * h).epsilon(1e-14));
    CHECK(set_energy(l1, g, one) == doctest::Approx(4.0 * h).epsilon(1e-14));
    CHECK(set_energy(l1, g, one) == 0.5);
    CHECK(set_energy(l1, g, four) == doctest::Approx(8.0 * h).epsilon(1e-14));
    CHECK(set_energy(l1, g, full) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(set_energy(euclid(), g, BitMask(g)) == 0.0);

    const Grid big = Grid::box(16, 4.0);
    CHECK(set_energy(laminate(), big, block(big, 2, 5, 3), nullptr, 0.5) ==
          doctest::Approx(stencil_energy(laminate(), block(big, 2, 5, 3), 0.5)).epsilon(1e-14));
  }

  TEST_CASE("flip deltas match energy differences") {
    const Grid g = Grid::box(6, 1.5);
    const MaskEnergy energy(laminate(), g);
    const EdgeTV tv(laminate(), g);
    testing::Sampler s(51);
    std::vector<std::uint8_t> bits(g.cells());
    for (auto& b : bits) b = s.uniform(0, 1) < 0.4;
    for (std::size_t i = 0; i < g.cells(); ++i) {
      const double e0 = energy.of_bits(bits), t0 = tv.of_bits(bits);
      const double de = energy.flip_delta(bits, i), dt = tv.flip_delta(bits, i);
      bits[i] ^= 1;
      CHECK(de == doctest::Approx(energy.of_bits(bits) - e0).epsilon(1e-12).scale(1.0));
      CHECK(dt == doctest::Approx(tv.of_bits(bits) - t0).epsilon(1e-12).scale(1.0));
    }
  }

  TEST_CASE("bulk term") {
    const Grid g = Grid::box(8, 1.0);
    ScalarField bulk(g);
    testing::Sampler s(52);
    for (auto& x : bulk.values) x = s.uniform(-0.3, 0.3);
    CHECK(set_energy(laminate(), g, BitMask(g), &bulk) == 0.0);
    double gmax = 0.0;
    const double mean = std::accumulate(bulk.values.begin(), bulk.values.end(), 0.0) / double(g.cells());
    for (double x : bulk.values) gmax = std::max(gmax, std::abs(x - mean));
    for (int k = 0; k < 20; ++k) {
      BitMask e(g);
      for (std::size_t i = 0; i < g.cells(); ++i) e.set(i, s.uniform(0, 1) < 0.5);
      const double v = double(e.count()) * g.cell_volume();
      const double diff = set_energy(laminate(), g, e, &bulk) - set_energy(laminate(), g, e);
      CHECK(std::abs(diff) <= gmax * v + 1e-12);
    }
  }

  TEST_CASE("pairwise TV: fitted weights, adjointness, coarea") {
    double err = 1.0;
    const auto w = EdgeTV::fit_weights(BaseNorm{}, &err);
    CHECK(err <= 0.02);
    for (double x : w) CHECK(x >= 0.0);

    const Grid g = Grid::box(10, 2.0);
    const EdgeTV tv(laminate(), g);
    testing::Sampler s(53);
    std::vector<double> u(g.cells()), z(tv.edges()), du(tv.edges()), adj(g.cells());
    for (auto& x : u) x = s.uniform(-1, 1);
    for (auto& x : z) x = s.uniform(-1, 1);
    tv.apply(u, du);
    tv.apply_adjoint(z, adj);
    const double lhs = std::inner_product(du.begin(), du.end(), z.begin(), 0.0);
    const double rhs = std::inner_product(u.begin(), u.end(), adj.begin(), 0.0);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));

    // a field with four values: TV equals the integral of the perimeters of its level sets
    std::vector<double> q(g.cells());
    for (auto& x : q) x = std::floor(s.uniform(0, 4));
    double layered = 0.0;
    for (double t : {0.5, 1.5, 2.5}) {
      std::vector<std::uint8_t> bits(g.cells());
      for (std::size_t i = 0; i < g.cells(); ++i) bits[i] = q[i] > t;
      layered += tv.of_bits(bits);
    }
    CHECK(tv.value(q) == doctest::Approx(layered).epsilon(1e-12));
  }

  TEST_CASE("level selection") {
    const Grid g = Grid::box(4, 1.0);
    ScalarField u(g);
    for (std::size_t i = 0; i < g.cells(); ++i) u[i] = double(i % 5);
    const double cv = g.cell_volume();
    for (int k = 0; k <= 16; ++k) {
      const LevelChoice c = select_level(u, k * cv);
      const BitMask check = extract_levelset(u, c.level);
      CHECK(check == c.mask);
      // value 0 holds 4 cells and the others 3, so thresholds reach 0, 3, 6, 9, 12, 16 cells
      int best = 0;
      for (int r : {0, 3, 6, 9, 12, 16}) {
        if (std::abs(r - k) <= std::abs(best - k)) best = r;
      }
      CHECK(int(c.mask.count()) == best);
    }
  }

  TEST_CASE("signed distance and diameters") {
    const Grid g = Grid::box(32, 2.0, vec2(-1, -1));
    BitMask disc(g);
    for (std::size_t i = 0; i < g.cells(); ++i) disc.set(i, norm2(g.cell_center(i)) <= 0.5);
    const auto d = signed_distance(disc);
    for (std::size_t i = 0; i < g.cells(); ++i) {
      CHECK((d[i] < 0.0) == disc[i]);
      CHECK(std::abs(d[i] - (norm2(g.cell_center(i)) - 0.5)) <= g.h());
    }
    const DiameterReport r = diameter_report(disc);
    CHECK(r.diameter == doctest::Approx(1.0).epsilon(2.0 * g.h()));
    CHECK_FALSE(r.touches_wall);
    CHECK(r.components == 1);
    CHECK(r.warning.empty());

    BitMask two(g);
    two.set(g.ravel({5, 5, 0}), true);
    two.set(g.ravel({20, 9, 0}), true);
    const DiameterReport t = diameter_report(two);
    CHECK(t.diameter == doctest::Approx(norm2(g.cell_center(g.ravel({5, 5, 0})) - g.cell_center(g.ravel({20, 9, 0})))));
    CHECK(t.components == 2);
    two.set(g.ravel({0, 9, 0}), true);
    CHECK(diameter_report(two).warning == "box too small");
    CHECK_THROWS_AS(diameter_report(BitMask(g)), std::invalid_argument);
  }

  TEST_CASE("shape comparison is translation invariant") {
    const Grid g = Grid::box(128, 4.0, vec2(-2, -2));
    BitMask shifted(g);
    for (std::size_t i = 0; i < g.cells(); ++i) shifted.set(i, norm2(g.cell_center(i) - vec2(0.4, -0.3)) <= 0.8);
    const ShapeMetrics sm = compare_to_shape(shifted, disc_shape(0.8));
    CHECK(sm.symmetric_difference <= 0.02);
    CHECK(sm.shift[0] == doctest::Approx(-0.4).epsilon(0.01));
    CHECK(sm.shift[1] == doctest::Approx(0.3).epsilon(0.01));
    CHECK(sm.hausdorff <= 2.0 * g.h());

    const WulffShape sq = build_wulff(std::vector<std::pair<Vec, double>>{
        {vec2(1, 0), 1.0}, {vec2(0, 1), 1.0}, {vec2(-1, 0), 1.0}, {vec2(0, -1), 1.0}});
    BitMask square(g);
    for (std::size_t i = 0; i < g.cells(); ++i) {
      const Vec x = g.cell_center(i) - vec2(0.25, 0.5);
      square.set(i, std::abs(x[0]) < 0.5 && std::abs(x[1]) < 0.5);
    }
    CHECK(compare_to_shape(square, wulff_shape(sq, 0.5)).symmetric_difference <= 1e-12);
  }

  TEST_CASE("parameter validation") {
    IsoParams p;
    p.volume = 0.2;
    CHECK_NOTHROW(p.validate());
    IsoParams torus = p;
    torus.box = Grid::torus(2, 16);
    CHECK_THROWS_AS(torus.validate(), std::invalid_argument);
    IsoParams big = p;
    big.volume = 2.0;
    CHECK_THROWS_AS(big.validate(), std::invalid_argument);
    IsoParams pen = p;
    pen.mode = IsoMode::penalized;
    CHECK_THROWS_AS(pen.validate(), std::invalid_argument);
    CHECK_THROWS_AS(solve_penalized(laminate(), p), std::invalid_argument);
  }

  TEST_CASE("brute-force oracle: homogeneous 4x4") {
    const Grid g = Grid::box(4, 1.0);
    const double h = g.h();
    const BruteForceResult one = brute_force_iso(euclid(), g, 1);
    CHECK(one.energy == doctest::Approx((2.0 + std::sqrt(2.0)) * h).epsilon(1e-14));
    CHECK(one.evaluated == 16);
    const BruteForceResult four = brute_force_iso(euclid(), g, 4);
    CHECK(four.evaluated == 1820);
    // the 2x2 block costs (6 + sqrt 2) h; the enumeration finds nothing cheaper
    CHECK(four.energy == doctest::Approx((6.0 + std::sqrt(2.0)) * h).epsilon(1e-14));
    const BruteForceResult none = brute_force_iso(euclid(), g, 0);
    CHECK(none.energy == 0.0);
    CHECK(none.mask.count() == 0);

    const PeriodicMetric l1(MediumSpec::homogeneous_medium(1.0, BaseNormKind::ell1));
    const BruteForceResult sq = brute_force_iso(l1, g, 4);
    CHECK(sq.energy == doctest::Approx(8.0 * h).epsilon(1e-14));
    // ties go to the smallest bit pattern: the block in the first two rows and columns
    CHECK(sq.mask == block(g, 0, 0, 2));
  }

  TEST_CASE("solver equals the brute-force minimum on tiny boxes") {
    const Grid g = Grid::box(5, 1.0);
    IsoParams p;
    p.box = g;
    p.volume = 6 * g.cell_volume();
    const IsoResult r = solve_iso(laminate(), p);
    const BruteForceResult b = brute_force_iso(laminate(), g, 6);
    CHECK(std::abs(r.energy - b.energy) <= 1e-9);
    CHECK(r.mask.count() == 6);
    CHECK(r.energy == doctest::Approx(set_energy(laminate(), g, r.mask)).epsilon(1e-14));
    for (double u : r.density.values) {
      CHECK(u >= 0.0);
      CHECK(u <= 1.0);
    }

    testing::Sampler s(54);
    for (int k = 0; k < 4; ++k) {
      const MediumSpec spec = testing::gallery()[1 + k];
      const PeriodicMetric m(spec);
      const Grid box = Grid::box(4, 1.0);
      const int cells = 2 + int(s.uniform(0, 12));
      IsoParams q;
      q.box = box;
      q.volume = cells * box.cell_volume();
      q.seed = 7;
      CHECK(std::abs(solve_iso(m, q).energy - brute_force_iso(m, box, cells).energy) <= 1e-9);
    }
  }

  TEST_CASE("full box and empty set") {
    const Grid g = Grid::box(6, 1.0);
    IsoParams p;
    p.box = g;
    p.volume = 1.0;
    const IsoResult r = solve_iso(euclid(), p);
    CHECK(r.mask.count() == g.cells());
    CHECK(r.energy == doctest::Approx(stencil_energy(euclid(), BitMask(g, true))).epsilon(1e-14));
    CHECK(r.touches_wall);

    const BruteForceResult b = brute_force_penalized(laminate(), Grid::box(4, 1.0), 0.25, 1e-3);
    CHECK(b.energy == 1e-3 * 0.25);
    CHECK(b.mask.count() == 0);
    IsoParams q;
    q.box = Grid::box(4, 1.0);
    q.volume = 0.25;
    q.mu = 1e-3;
    const IsoResult e = solve_penalized(laminate(), q);
    CHECK(e.mask.count() == 0);
    CHECK(e.objective == doctest::Approx(b.energy));
  }

  TEST_CASE("penalized mode against the penalized brute force") {
    const Grid g = Grid::box(4, 1.0);
    for (double mu : {2.0, 8.0, 32.0}) {
      IsoParams p;
      p.box = g;
      p.volume = 5.5 * g.cell_volume();
      p.mu = mu;
      const IsoResult r = solve_penalized(laminate(), p);
      const BruteForceResult b = brute_force_penalized(laminate(), g, p.volume, mu);
      CHECK(r.objective == doctest::Approx(b.energy).epsilon(1e-12));
    }
  }

  TEST_CASE("threshold search for mu and agreement with the constrained mode") {
    IsoParams p;
    p.box = Grid::box(8, 1.0);
    p.volume = 0.25;
    const PenaltySearch s = find_penalty_threshold(laminate(), p);
    REQUIRE(s.found);
    REQUIRE(s.result);
    CHECK(s.mu >= 1.0 / laminate().c0());
    CHECK(s.trials.size() >= 2);
    CHECK(s.trials.back().volume_matched);
    CHECK(s.trials[s.trials.size() - 2].volume_matched);
    CHECK(s.trials.back().mask_repeated);
    CHECK(s.mu == s.trials[s.trials.size() - 2].mu);
    const double h = p.box.h();
    CHECK(std::abs(s.result->volume - p.volume) <= h * h * double(perimeter_cells(s.result->mask)));
    const IsoResult c = solve_iso(laminate(), p);
    CHECK(std::abs(s.result->energy - c.energy) <= 2.0 * p.inner.tol_gap * c.energy);
  }

  TEST_CASE("perimeter cells") {
    const Grid g = Grid::box(6, 1.0);
    CHECK(perimeter_cells(block(g, 1, 1, 4)) == 12);
    CHECK(perimeter_cells(BitMask(g, true)) == 20);
    CHECK(perimeter_cells(BitMask(g)) == 0);
  }

  TEST_CASE("constrained volume tracks the target") {
    IsoParams p;
    p.box = Grid::box(24, 2.0);
    p.volume = 0.7;
    const IsoResult r = solve_iso(laminate(), p);
    const double h = p.box.h();
    CHECK(std::abs(r.volume - p.volume) <= h * h * double(perimeter_cells(r.mask)));
    CHECK(r.certified);
    CHECK(r.components >= 1);
    CHECK(r.starts >= int(p.start_shapes.size()));
  }
}
