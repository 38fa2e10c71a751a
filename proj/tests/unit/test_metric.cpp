#include <doctest.h>

#include <cmath>

#include "stablenorm/metric.hpp"
#include "support.hpp"

using namespace stablenorm;

TEST_SUITE("metric") {
  TEST_CASE("pointwise examples") {
    const PeriodicMetric hom(MediumSpec::homogeneous_medium());
    const PeriodicMetric lam(MediumSpec::laminate_medium(1.0, 2.0));
    const PeriodicMetric l1(MediumSpec::homogeneous_medium(1.0, BaseNormKind::ell1));

    CHECK(hom.eval(vec2(0.3, 0.7), vec2(3, 4)) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(lam.eval(vec2(0.25, 0.75), vec2(0, 1)) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(hom.eval(vec2(0.1, 0.1), vec2(0, 0)) == 0.0);

    CHECK(lam.polar_eval(vec2(0.25, 0.25), vec2(0.6, 0.8)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lam.polar_eval(vec2(0.25, 0.75), vec2(0.6, 0.8)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(l1.polar_eval(vec2(0.5, 0.5), vec2(0.3, -0.9)) == doctest::Approx(0.9).epsilon(1e-15));

    const Vec g1 = hom.grad_p(vec2(0.2, 0.2), vec2(3, 4));
    CHECK(g1[0] == doctest::Approx(0.6));
    CHECK(g1[1] == doctest::Approx(0.8));
    const Vec g2 = lam.grad_p(vec2(0.25, 0.75), vec2(0, 1));
    CHECK(std::abs(g2[0]) < 1e-15);
    CHECK(g2[1] == doctest::Approx(2.0));

    const Vec z1 = lam.project_dual(vec2(0.25, 0.25), vec2(3, 4));
    CHECK(z1[0] == doctest::Approx(0.6));
    CHECK(z1[1] == doctest::Approx(0.8));
    const Vec feasible = vec2(0.3, -0.2);
    CHECK(lam.project_dual(vec2(0.25, 0.25), feasible) == feasible);
    const Vec z2 = l1.project_dual(vec2(0.5, 0.5), vec2(2, -0.5));
    CHECK(z2[0] == doctest::Approx(1.0));
    CHECK(z2[1] == doctest::Approx(-0.5));
  }

  TEST_CASE("grad_p errors") {
    const PeriodicMetric hom(MediumSpec::homogeneous_medium());
    const PeriodicMetric l1(MediumSpec::homogeneous_medium(1.0, BaseNormKind::ell1));
    CHECK_THROWS_AS(hom.grad_p(vec2(0.1, 0.1), vec2(0, 0)), std::domain_error);
    CHECK_THROWS_AS(l1.grad_p(vec2(0.1, 0.1), vec2(1, 0)), CapabilityError);
  }

  TEST_CASE("invalid media are rejected at construction") {
    CHECK_THROWS_AS(PeriodicMetric(MediumSpec::laminate_medium(0.0, 2.0)), std::invalid_argument);
    CHECK_THROWS_AS(PeriodicMetric(MediumSpec::smooth_trig_medium(1.0, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(PeriodicMetric(MediumSpec::homogeneous_medium(-1.0)), std::invalid_argument);
    CHECK_THROWS_AS(medium_kind_from_string("marble"), std::invalid_argument);
  }

  TEST_CASE("homogeneity, subadditivity, bounds and periodicity on random samples") {
    for (const MediumSpec& spec : testing::gallery()) {
      const PeriodicMetric m(spec);
      CAPTURE(to_string(spec.kind));
      CAPTURE(to_string(spec.base.kind));
      testing::Sampler s(11);
      for (int k = 0; k < 1000; ++k) {
        const Vec x = s.point();
        const Vec p = s.vector(), q = s.vector();
        const double lambda = s.uniform(0.01, 10.0);
        const double fp = m.eval(x, p);
        CHECK(std::abs(m.eval(x, lambda * p) - lambda * fp) <= 1e-12 * lambda * fp);
        CHECK(m.eval(x, p + q) <= fp + m.eval(x, q) + 1e-12);
        const Vec unit = (1.0 / norm2(p)) * p;
        const double fu = m.eval(x, unit);
        CHECK(fu >= m.c0() - 1e-15);
        CHECK(fu <= 1.0 / m.c0() + 1e-15);
        CHECK(m.eval(x + vec2(3.0, -2.0), p) == doctest::Approx(fp).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("dual projection is feasible and idempotent") {
    for (const MediumSpec& spec : testing::gallery()) {
      const PeriodicMetric m(spec);
      CAPTURE(to_string(spec.kind));
      CAPTURE(to_string(spec.base.kind));
      testing::Sampler s(12);
      for (int k = 0; k < 1000; ++k) {
        const Vec x = s.point();
        const Vec pz = m.project_dual(x, s.vector(5.0));
        CHECK(m.polar_eval(x, pz) <= 1.0 + 1e-12);
        CHECK(norm2(m.project_dual(x, pz) - pz) <= 1e-12);
      }
    }
  }

  TEST_CASE("polar duality through Fenchel-Young") {
    // z.p <= F°(z) F(p) for every z, with equality at the gradient, pins (F°)° = F.
    for (const MediumSpec& spec : testing::gallery()) {
      const PeriodicMetric m(spec);
      CAPTURE(to_string(spec.base.kind));
      testing::Sampler s(13);
      for (int k = 0; k < 1000; ++k) {
        const Vec x = s.point();
        const Vec p = s.vector(), z = s.vector();
        CHECK(dot(z, p) <= m.polar_eval(x, z) * m.eval(x, p) + 1e-12);
        Vec star;
        if (m.base().differentiable()) {
          star = m.grad_p(x, p);
        } else {
          const double a = m.coefficient(x);
          star = vec2(std::copysign(a, p[0]), std::copysign(a, p[1]));
        }
        CHECK(dot(star, p) == doctest::Approx(m.eval(x, p)).epsilon(1e-9));
        CHECK(m.polar_eval(x, star) == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("ellipse projection matches a brute-force search") {
    MediumSpec spec = MediumSpec::homogeneous_medium(1.5);
    spec.base.kind = BaseNormKind::ellipse;
    spec.base.axes = {1.0, 3.0, 1.0};
    const PeriodicMetric m(spec);
    testing::Sampler s(14);
    for (int k = 0; k < 20; ++k) {
      const Vec z = s.vector(4.0);
      const Vec pz = m.project_dual(vec2(0.5, 0.5), z);
      double best = 1e300;
      for (int t = 0; t < 200000; ++t) {
        const double th = 2.0 * M_PI * t / 200000.0;
        const Vec w0 = vec2(std::cos(th), std::sin(th));
        const Vec w = (1.0 / m.polar_eval(vec2(0.5, 0.5), w0)) * w0;
        best = std::min(best, norm2(w - z));
      }
      if (m.polar_eval(vec2(0.5, 0.5), z) <= 1.0) best = 0.0;
      CHECK(norm2(pz - z) == doctest::Approx(best).epsilon(1e-6).scale(1e-6));
    }
  }
}
