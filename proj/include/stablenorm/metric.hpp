#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "stablenorm/vec.hpp"

namespace stablenorm {

/// Thrown when an operation needs a property the base norm does not have
/// (e.g. a gradient of the l1 norm).
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class MediumKind { homogeneous, laminate, checkerboard_smoothed, smooth_trig, sampled };
enum class BaseNormKind { euclidean, ell1, ellipse };

std::string to_string(MediumKind kind);
std::string to_string(BaseNormKind kind);
MediumKind medium_kind_from_string(const std::string& s);
BaseNormKind base_norm_from_string(const std::string& s);

/// The x-independent norm N(p). F(x,p) = a(x) N(p) for every medium in the gallery.
struct BaseNorm {
  BaseNormKind kind = BaseNormKind::euclidean;
  Vec axes{1.0, 1.0, 1.0};  // ellipse only: N(p) = |(axes_k p_k)_k|

  double value(const Vec& p) const;
  double polar(const Vec& z) const;
  Vec gradient(const Vec& p) const;
  /// Euclidean projection onto {z : polar(z) <= radius}.
  Vec project(const Vec& z, double radius) const;
  bool differentiable() const { return kind != BaseNormKind::ell1; }
};

/// Declarative description of a periodic medium. Only the fields relevant to
/// `kind` are read.
struct MediumSpec {
  MediumKind kind = MediumKind::homogeneous;
  BaseNorm base;
  int dim = 2;

  double a = 1.0;  // homogeneous

  // laminate: a depends on x[axis]; a_low on [0, theta), a_high on [theta, 1).
  // checkerboard_smoothed reuses a_low / a_high with an interface ramp of `width`.
  int axis = 1;
  double a_low = 1.0;
  double a_high = 2.0;
  double theta = 0.5;
  double width = 1.0 / 32.0;

  // smooth_trig: mean + amplitude * cos(2 pi x0) cos(2 pi x1)
  double mean = 1.5;
  double amplitude = 0.5;

  // sampled: n x n cell values, row-major in (x0, x1), nearest-cell lookup
  int sample_n = 0;
  std::vector<double> samples;

  static MediumSpec homogeneous_medium(double a = 1.0, BaseNormKind base = BaseNormKind::euclidean);
  static MediumSpec laminate_medium(double a_low, double a_high, double theta = 0.5, int axis = 1);
  static MediumSpec smooth_trig_medium(double mean, double amplitude);
  static MediumSpec checkerboard_medium(double a_low, double a_high, double width);
  static MediumSpec sampled_medium(int n, std::vector<double> values);
};

/// A validated periodic integrand F(x,p) = a(x) N(p) with its polar and dual-ball projection.
class PeriodicMetric {
 public:
  /// Throws std::invalid_argument on inconsistent or non-positive parameters.
  explicit PeriodicMetric(MediumSpec spec);

  const MediumSpec& spec() const { return spec_; }
  const BaseNorm& base() const { return spec_.base; }
  int dim() const { return spec_.dim; }

  /// Bound constant: c0 |p| <= F(x,p) <= |p| / c0.
  double c0() const { return c0_; }
  double coefficient_min() const { return a_min_; }
  double coefficient_max() const { return a_max_; }

  /// a(x) with x reduced modulo 1 componentwise.
  double coefficient(const Vec& x) const;

  double eval(const Vec& x, const Vec& p) const;
  double polar_eval(const Vec& x, const Vec& z) const;
  /// Throws std::domain_error for p = 0 and CapabilityError for the l1 base.
  Vec grad_p(const Vec& x, const Vec& p) const;
  Vec project_dual(const Vec& x, const Vec& z) const;

 private:
  MediumSpec spec_;
  double a_min_ = 1.0;
  double a_max_ = 1.0;
  double c0_ = 1.0;
};

/// Reduce t to [0, 1).
double wrap_unit(double t);

}  // namespace stablenorm
