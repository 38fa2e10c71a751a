#include "stablenorm/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace stablenorm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("medium: " + what);
}

// Signed distance of t in [0,1) to the checker interfaces {0, 1/2};
// positive on [0, 1/2).
double checker_distance(double t) {
  if (t < 0.5) return std::min(t, 0.5 - t);
  return -std::min(t - 0.5, 1.0 - t);
}

}  // namespace

std::string to_string(MediumKind kind) {
  switch (kind) {
    case MediumKind::homogeneous: return "homogeneous";
    case MediumKind::laminate: return "laminate";
    case MediumKind::checkerboard_smoothed: return "checkerboard-smoothed";
    case MediumKind::smooth_trig: return "smooth-trig";
    case MediumKind::sampled: return "sampled";
  }
  return "?";
}

std::string to_string(BaseNormKind kind) {
  switch (kind) {
    case BaseNormKind::euclidean: return "euclidean";
    case BaseNormKind::ell1: return "ell1";
    case BaseNormKind::ellipse: return "ellipse";
  }
  return "?";
}

MediumKind medium_kind_from_string(const std::string& s) {
  for (auto k : {MediumKind::homogeneous, MediumKind::laminate, MediumKind::checkerboard_smoothed,
                 MediumKind::smooth_trig, MediumKind::sampled}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown medium kind '" + s + "'");
}

BaseNormKind base_norm_from_string(const std::string& s) {
  for (auto k : {BaseNormKind::euclidean, BaseNormKind::ell1, BaseNormKind::ellipse}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown base norm '" + s + "'");
}

double wrap_unit(double t) {
  double r = t - std::floor(t);
  return r >= 1.0 ? 0.0 : r;
}

// ---------------------------------------------------------------------------
// BaseNorm

double BaseNorm::value(const Vec& p) const {
  switch (kind) {
    case BaseNormKind::euclidean: return norm2(p);
    case BaseNormKind::ell1: return std::abs(p[0]) + std::abs(p[1]) + std::abs(p[2]);
    case BaseNormKind::ellipse: {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += axes[k] * axes[k] * p[k] * p[k];
      return std::sqrt(s);
    }
  }
  return 0.0;
}

double BaseNorm::polar(const Vec& z) const {
  switch (kind) {
    case BaseNormKind::euclidean: return norm2(z);
    case BaseNormKind::ell1: return std::max({std::abs(z[0]), std::abs(z[1]), std::abs(z[2])});
    case BaseNormKind::ellipse: {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += z[k] * z[k] / (axes[k] * axes[k]);
      return std::sqrt(s);
    }
  }
  return 0.0;
}

Vec BaseNorm::gradient(const Vec& p) const {
  if (!differentiable()) throw CapabilityError("grad_p: base norm ell1 is not differentiable");
  const double n = value(p);
  if (!(n > 0.0)) throw std::domain_error("grad_p: p must be nonzero");
  if (kind == BaseNormKind::euclidean) return (1.0 / n) * p;
  Vec g{};
  for (int k = 0; k < 3; ++k) g[k] = axes[k] * axes[k] * p[k] / n;
  return g;
}

Vec BaseNorm::project(const Vec& z, double radius) const {
  switch (kind) {
    case BaseNormKind::euclidean: {
      const double n = norm2(z);
      return n <= radius ? z : (radius / n) * z;
    }
    case BaseNormKind::ell1:
      return {std::clamp(z[0], -radius, radius), std::clamp(z[1], -radius, radius),
              std::clamp(z[2], -radius, radius)};
    case BaseNormKind::ellipse: {
      if (polar(z) <= radius) return z;
      // Projection onto {sum z_k^2 / b_k^2 <= 1}: z_k = y_k b_k^2 / (b_k^2 + lambda).
      // Newton on 1/sqrt(S(lambda)) - 1, which is concave increasing, from lambda = 0.
      Vec b2{};
      for (int k = 0; k < 3; ++k) b2[k] = radius * radius * axes[k] * axes[k];
      double lambda = 0.0;
      for (int it = 0; it < 50; ++it) {
        double s = 0.0, ds = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double q = b2[k] + lambda;
          s += z[k] * z[k] * b2[k] / (q * q);
          ds += -2.0 * z[k] * z[k] * b2[k] / (q * q * q);
        }
        const double h = 1.0 / std::sqrt(s) - 1.0;
        if (std::abs(h) <= 1e-14) break;
        const double dh = -0.5 * ds / (s * std::sqrt(s));
        lambda -= h / dh;
      }
      Vec w{};
      for (int k = 0; k < 3; ++k) w[k] = z[k] * b2[k] / (b2[k] + lambda);
      const double r = polar(w) / radius;
      return r > 1.0 ? (1.0 / r) * w : w;
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// MediumSpec factories

MediumSpec MediumSpec::homogeneous_medium(double a, BaseNormKind base) {
  MediumSpec s;
  s.kind = MediumKind::homogeneous;
  s.a = a;
  s.base.kind = base;
  return s;
}

MediumSpec MediumSpec::laminate_medium(double a_low, double a_high, double theta, int axis) {
  MediumSpec s;
  s.kind = MediumKind::laminate;
  s.a_low = a_low;
  s.a_high = a_high;
  s.theta = theta;
  s.axis = axis;
  return s;
}

MediumSpec MediumSpec::smooth_trig_medium(double mean, double amplitude) {
  MediumSpec s;
  s.kind = MediumKind::smooth_trig;
  s.mean = mean;
  s.amplitude = amplitude;
  return s;
}

MediumSpec MediumSpec::checkerboard_medium(double a_low, double a_high, double width) {
  MediumSpec s;
  s.kind = MediumKind::checkerboard_smoothed;
  s.a_low = a_low;
  s.a_high = a_high;
  s.width = width;
  return s;
}

MediumSpec MediumSpec::sampled_medium(int n, std::vector<double> values) {
  MediumSpec s;
  s.kind = MediumKind::sampled;
  s.sample_n = n;
  s.samples = std::move(values);
  return s;
}

// ---------------------------------------------------------------------------
// PeriodicMetric

PeriodicMetric::PeriodicMetric(MediumSpec spec) : spec_(std::move(spec)) {
  const auto& s = spec_;
  require(s.dim == 2 || s.dim == 3, "dim must be 2 or 3");
  switch (s.kind) {
    case MediumKind::homogeneous:
      require(std::isfinite(s.a) && s.a > 0.0, "homogeneous coefficient must be positive");
      a_min_ = a_max_ = s.a;
      break;
    case MediumKind::laminate:
      require(std::isfinite(s.a_low) && s.a_low > 0.0 && std::isfinite(s.a_high) && s.a_high > 0.0,
              "layer values must be positive");
      require(s.theta > 0.0 && s.theta < 1.0, "layer fraction theta must lie in (0,1)");
      require(s.axis >= 0 && s.axis < s.dim, "laminate axis out of range");
      a_min_ = std::min(s.a_low, s.a_high);
      a_max_ = std::max(s.a_low, s.a_high);
      break;
    case MediumKind::checkerboard_smoothed:
      require(std::isfinite(s.a_low) && s.a_low > 0.0 && std::isfinite(s.a_high) && s.a_high > 0.0,
              "checker values must be positive");
      require(s.width > 0.0 && s.width <= 0.5, "interface width must lie in (0, 1/2]");
      a_min_ = std::min(s.a_low, s.a_high);
      a_max_ = std::max(s.a_low, s.a_high);
      break;
    case MediumKind::smooth_trig:
      require(std::isfinite(s.mean) && std::isfinite(s.amplitude) && s.amplitude >= 0.0 &&
                  s.mean > s.amplitude,
              "smooth-trig needs mean > amplitude >= 0");
      a_min_ = s.mean - s.amplitude;
      a_max_ = s.mean + s.amplitude;
      break;
    case MediumKind::sampled: {
      require(s.sample_n >= 1, "sampled medium needs n >= 1");
      require(s.samples.size() == static_cast<std::size_t>(s.sample_n) * s.sample_n,
              "sampled medium needs n*n values");
      a_min_ = std::numeric_limits<double>::infinity();
      a_max_ = 0.0;
      for (double v : s.samples) {
        require(std::isfinite(v) && v > 0.0, "sampled coefficients must be positive");
        a_min_ = std::min(a_min_, v);
        a_max_ = std::max(a_max_, v);
      }
      break;
    }
  }

  double lo = 1.0, hi = 1.0;  // m |p| <= N(p) <= M |p|
  switch (s.base.kind) {
    case BaseNormKind::euclidean: break;
    case BaseNormKind::ell1: hi = std::sqrt(static_cast<double>(s.dim)); break;
    case BaseNormKind::ellipse:
      lo = std::numeric_limits<double>::infinity();
      hi = 0.0;
      for (int k = 0; k < s.dim; ++k) {
        require(std::isfinite(s.base.axes[k]) && s.base.axes[k] > 0.0, "ellipse axes must be positive");
        lo = std::min(lo, s.base.axes[k]);
        hi = std::max(hi, s.base.axes[k]);
      }
      break;
  }
  c0_ = std::min({1.0, a_min_ * lo, 1.0 / (a_max_ * hi)});
}

double PeriodicMetric::coefficient(const Vec& x) const {
  const auto& s = spec_;
  switch (s.kind) {
    case MediumKind::homogeneous: return s.a;
    case MediumKind::laminate: return wrap_unit(x[s.axis]) < s.theta ? s.a_low : s.a_high;
    case MediumKind::checkerboard_smoothed: {
      const double half = 0.5 * s.width;
      const double r0 = std::clamp(checker_distance(wrap_unit(x[0])) / half, -1.0, 1.0);
      const double r1 = std::clamp(checker_distance(wrap_unit(x[1])) / half, -1.0, 1.0);
      return 0.5 * (s.a_low + s.a_high) + 0.5 * (s.a_high - s.a_low) * r0 * r1;
    }
    case MediumKind::smooth_trig: {
      constexpr double two_pi = 2.0 * std::numbers::pi;
      return s.mean + s.amplitude * std::cos(two_pi * wrap_unit(x[0])) * std::cos(two_pi * wrap_unit(x[1]));
    }
    case MediumKind::sampled: {
      const int n = s.sample_n;
      const int i0 = std::min(n - 1, static_cast<int>(wrap_unit(x[0]) * n));
      const int i1 = std::min(n - 1, static_cast<int>(wrap_unit(x[1]) * n));
      return s.samples[static_cast<std::size_t>(i0) * n + i1];
    }
  }
  return 1.0;
}

double PeriodicMetric::eval(const Vec& x, const Vec& p) const { return coefficient(x) * spec_.base.value(p); }

double PeriodicMetric::polar_eval(const Vec& x, const Vec& z) const {
  return spec_.base.polar(z) / coefficient(x);
}

Vec PeriodicMetric::grad_p(const Vec& x, const Vec& p) const {
  return coefficient(x) * spec_.base.gradient(p);
}

Vec PeriodicMetric::project_dual(const Vec& x, const Vec& z) const {
  return spec_.base.project(z, coefficient(x));
}

}  // namespace stablenorm
