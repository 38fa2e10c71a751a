#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stablenorm/grid.hpp"
#include "support.hpp"

using namespace stablenorm;

namespace {

ScalarField random_scalar(const Grid& g, testing::Sampler& s) {
  ScalarField v(g);
  for (auto& x : v.values) x = s.uniform(-1.0, 1.0);
  return v;
}

VectorField random_vector(const Grid& g, testing::Sampler& s) {
  VectorField z(g);
  for (auto& x : z.values) x = s.uniform(-1.0, 1.0);
  return z;
}

double rel_adjoint_error(const Grid& g, testing::Sampler& s) {
  const ScalarField v = random_scalar(g, s);
  const VectorField z = random_vector(g, s);
  const double lhs = inner(gradient(v), z);
  const double rhs = inner(v, divergence(z));
  const double scale = std::sqrt(inner(v, v) * inner(z, z));
  return std::abs(lhs + rhs) / scale;
}

}  // namespace

TEST_SUITE("grid") {
  TEST_CASE("grid construction") {
    CHECK_THROWS_AS(Grid::torus(2, 3), std::invalid_argument);
    CHECK_THROWS_AS(Grid::torus(4, 8), std::invalid_argument);
    CHECK_THROWS_AS(Grid::box(8, 0.0), std::invalid_argument);
    const Grid t = Grid::torus(2, 8);
    CHECK(t.h() * t.n() == 1.0);
    CHECK(t.cells() == 64);
    const Grid b = Grid::box(8, 2.0);
    CHECK(b.h() * b.n() == 2.0);
    CHECK(b.flux_cells() == 81);
    for (std::size_t i = 0; i < t.cells(); ++i) CHECK(t.ravel(t.unravel(i)) == i);
  }

  TEST_CASE("gradient of a constant vanishes, divergence of a constant vanishes") {
    const Grid g = Grid::torus(2, 8);
    const VectorField dz = gradient(ScalarField(g, 3.5));
    for (double x : dz.values) CHECK(x == 0.0);
    const ScalarField dv = divergence(VectorField(g, -1.25));
    for (double x : dv.values) CHECK(x == 0.0);
    const Grid g3 = Grid::torus(3, 4);
    for (double x : gradient(ScalarField(g3, 2.0)).values) CHECK(x == 0.0);
  }

  TEST_CASE("spike stencil") {
    const Grid g = Grid::torus(2, 8);
    ScalarField v(g);
    const std::size_t j = g.ravel({3, 5, 0});
    v[j] = 1.0;
    const VectorField z = gradient(v);
    const auto d0 = z.component(0);
    CHECK(d0[j] == -8.0);
    CHECK(d0[g.ravel({2, 5, 0})] == 8.0);
    int nonzero = 0;
    for (double x : d0) nonzero += x != 0.0;
    CHECK(nonzero == 2);
  }

  TEST_CASE("divergence of the spike gradient") {
    // Oracle: (div D v)(i) = sum_k (v(i+e_k) - 2 v(i) + v(i-e_k)) / h^2 evaluated by hand on a 4x4
    // torus, h = 1/4: the spike cell gets -2d/h^2 = -64, its four neighbours 1/h^2 = 16.
    const Grid g = Grid::torus(2, 4);
    ScalarField v(g);
    const std::size_t j = g.ravel({1, 2, 0});
    v[j] = 1.0;
    const ScalarField lap = divergence(gradient(v));
    for (std::size_t i = 0; i < g.cells(); ++i) {
      const auto a = g.unravel(i);
      const int da = std::min((a[0] - 1 + 4) % 4, (1 - a[0] + 4) % 4);
      const int db = std::min((a[1] - 2 + 4) % 4, (2 - a[1] + 4) % 4);
      const double expect = i == j ? -64.0 : (da + db == 1 ? 16.0 : 0.0);
      CHECK(lap[i] == expect);
    }
  }

  TEST_CASE("forward differences are first-order consistent") {
    double previous = 0.0;
    for (int n : {16, 32, 64, 128}) {
      const Grid g = Grid::torus(2, n);
      ScalarField v(g);
      for (std::size_t i = 0; i < g.cells(); ++i) v[i] = std::sin(2.0 * std::numbers::pi * g.unravel(i)[0] / n);
      const VectorField z = gradient(v);
      double err = 0.0;
      for (std::size_t i = 0; i < g.cells(); ++i) {
        const double x = double(g.unravel(i)[0]) / n;
        err = std::max(err, std::abs(z.component(0)[i] - 2.0 * std::numbers::pi * std::cos(2.0 * std::numbers::pi * x)));
      }
      if (previous > 0.0) CHECK(err / previous == doctest::Approx(0.5).epsilon(0.05));
      previous = err;
    }
  }

  TEST_CASE("adjointness on random fields, both grid types") {
    testing::Sampler s(21);
    for (int k = 0; k < 100; ++k) {
      CHECK(rel_adjoint_error(Grid::torus(2, 8 + k % 5), s) <= 1e-12);
      CHECK(rel_adjoint_error(Grid::torus(3, 4 + k % 3), s) <= 1e-12);
      CHECK(rel_adjoint_error(Grid::box(5 + k % 7, 1.0 + 0.1 * k), s) <= 1e-12);
    }
  }

  TEST_CASE("gradient commutes with integer shifts on the torus") {
    const Grid g = Grid::torus(2, 8);
    testing::Sampler s(22);
    const ScalarField v = random_scalar(g, s);
    ScalarField shifted(g);
    auto shift = [&](std::size_t i) {
      const auto a = g.unravel(i);
      return g.ravel({(a[0] + 3) % 8, (a[1] + 5) % 8, 0});
    };
    for (std::size_t i = 0; i < g.cells(); ++i) shifted[shift(i)] = v[i];
    const VectorField dv = gradient(v), ds = gradient(shifted);
    for (int k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < g.cells(); ++i) CHECK(ds.component(k)[shift(i)] == dv.component(k)[i]);
    }
  }

  TEST_CASE("box gradient sees a zero exterior") {
    const Grid b = Grid::box(3, 3.0);
    ScalarField v(b, 1.0);
    const VectorField z = gradient(v);
    double total = 0.0;
    for (double x : z.values) total += std::abs(x);
    // 3 cells per wall side, 4 walls, each crossing a jump of 1 over h = 1
    CHECK(total == 12.0);
  }

  TEST_CASE("level sets") {
    const Grid g = Grid::torus(2, 8);
    const ScalarField zero(g);
    CHECK(extract_levelset(zero, -1.0).count() == g.cells());
    CHECK(extract_levelset(zero, 0.0).count() == 0);
    ScalarField ramp(g);
    for (std::size_t i = 0; i < g.cells(); ++i) ramp[i] = g.unravel(i)[0] * g.h();
    const BitMask half = extract_levelset(ramp, 0.5);
    for (std::size_t i = 0; i < g.cells(); ++i) CHECK(half[i] == (g.unravel(i)[0] >= 5));

    testing::Sampler s(23);
    const ScalarField u = random_scalar(g, s);
    for (int k = 0; k < 50; ++k) {
      const double a = s.uniform(-1.0, 1.0), b = s.uniform(-1.0, 1.0);
      const BitMask lo = extract_levelset(u, std::min(a, b)), hi = extract_levelset(u, std::max(a, b));
      for (std::size_t i = 0; i < g.cells(); ++i) CHECK((!hi[i] || lo[i]));
    }
  }

  TEST_CASE("non-finite values are caught") {
    std::vector<double> v{1.0, NAN};
    CHECK_THROWS_AS(require_finite(v, "test"), std::runtime_error);
    std::vector<double> w{1.0, 2.0};
    CHECK_NOTHROW(require_finite(w, "test"));
  }
}
