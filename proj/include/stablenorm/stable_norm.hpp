#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "stablenorm/cell_solver.hpp"

namespace stablenorm {

struct FanSample {
  Vec direction{};  // unit length
  double phi = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double complementarity = 0.0;  // CellSolution::complementarity_bound
  Vec subgradient{};
  bool certified = false;
  int iters = 0;
};

struct FanResult {
  std::vector<FanSample> samples;
  bool all_certified() const;
};

/// `count` unit directions at angles offset + 2 pi k / count.
std::vector<Vec> equiangular_directions(int count, double offset = 0.0);

/// One solve per direction (directions are normalized first). Results are
/// ordered as the input regardless of `workers`.
FanResult sample_fan(const PeriodicMetric& m, const Grid& g, const std::vector<Vec>& directions,
                     const SolverParams& params, int workers = 1);

// ---------------------------------------------------------------------------
// Laminates

/// Piecewise-constant periodic profile on [0,1): value[k] on a band of width[k].
struct LayerProfile {
  std::vector<double> widths;
  std::vector<double> values;

  /// Throws std::invalid_argument unless the metric is a Euclidean laminate.
  static LayerProfile from_metric(const PeriodicMetric& m);
  double min() const;
  /// int_0^1 sqrt(a^2 - c^2), requires |c| <= min().
  double chord_integral(double c) const;
};

struct LaminateOracle {
  double phi = 0.0;
  double c_opt = 0.0;
  double facet_opening = 0.0;  // opening of phi at the layer normal
};

/// Exact stable norm of a Euclidean laminate with layers normal to `axis`.
LaminateOracle laminate_oracle(const LayerProfile& profile, const Vec& p, int axis = 1);

// ---------------------------------------------------------------------------
// Differentiability

struct DerivativeEstimate {
  double value = 0.0;
  double error_bar = 0.0;
  double correction = 0.0;   // |second-order minus first-order extrapolant|
  double uncertainty = 0.0;  // propagated solver error
  std::array<double, 3> quotients{};  // difference quotients at t0, t0/2, t0/4
  bool certified = false;
};

struct SolveValue {
  double phi = 0.0;
  double error = 0.0;  // max(gap, 0) + v_norm * div_residual
  bool certified = false;
};

SolveValue solve_value(const PeriodicMetric& m, const Grid& g, const Vec& p, const SolverParams& params);

/// phi'(p; q) from difference quotients at t0, t0/2, t0/4 with second-order Richardson extrapolation.
DerivativeEstimate directional_derivative(const PeriodicMetric& m, const Grid& g, const Vec& p, const Vec& q,
                                          const SolverParams& params, double t0 = 0.125);
/// Same, reusing an existing solve at p.
DerivativeEstimate directional_derivative(const PeriodicMetric& m, const Grid& g, const Vec& p, const Vec& q,
                                          const SolverParams& params, const SolveValue& at_p, double t0 = 0.125);

enum class Verdict { kink, smooth, inconclusive };
std::string to_string(Verdict v);

struct FacetProbe {
  std::array<int, 3> q{};
  double opening = 0.0;
  double error_bar = 0.0;
  double threshold = 0.0;  // max(delta_facet, 3 error_bar)
  Verdict verdict = Verdict::inconclusive;
  DerivativeEstimate plus, minus;
};

struct FacetParams {
  int q_max = 3;
  double delta_facet = 0.05;
  double t0 = 0.125;
};

struct FacetReport {
  std::array<int, 3> p{};
  double delta_facet = 0.05;
  std::vector<FacetProbe> probes;
  int subgradient_dim = 0;  // rank of the kink directions
  bool certified = false;
};

/// Primitive integer q with q.p = 0 and 0 < |q| <= q_max, first nonzero entry positive.
std::vector<std::array<int, 3>> orthogonal_probes(const std::array<int, 3>& p, int dim, int q_max);

FacetReport facet_probe(const PeriodicMetric& m, const Grid& g, const std::array<int, 3>& p,
                        const SolverParams& params, const FacetParams& fp = {});

/// Numerical rank of a set of integer vectors.
int integer_rank(const std::vector<std::array<int, 3>>& vs);

// ---------------------------------------------------------------------------
// Convexity

struct ConvexityPair {
  Vec p1{}, p2{};
  double angle_deg = 0.0;
  double phi1 = 0.0, phi2 = 0.0, phi12 = 0.0;
  double slack = 0.0;
  double tolerance = 0.0;  // gap tolerance tol_gap * max(phi1, phi2, phi12)
  bool parallel = false;
  bool certified = false;
  bool pass = false;  // strict: slack > 3 tol; parallel: |slack| <= 2 tol
};

struct ConvexityReport {
  std::vector<ConvexityPair> pairs;
  double min_slack_nonparallel = 0.0;
  bool all_pass = false;
};

/// Deterministic unit pairs with angles spread over [min_angle_deg, 180 - min_angle_deg].
std::vector<std::pair<Vec, Vec>> convexity_pairs(int count, double min_angle_deg = 10.0);

/// phi(p1) and phi(p2) are taken from the fan when the direction matches a fan
/// sample exactly and solved otherwise; phi(p1 + p2) is always solved.
ConvexityReport strict_convexity_scan(const PeriodicMetric& m, const Grid& g, const FanResult& fan,
                                      const std::vector<std::pair<Vec, Vec>>& pairs, const SolverParams& params,
                                      int workers = 1);

// ---------------------------------------------------------------------------
// Wulff shape

struct WulffShape {
  std::vector<std::pair<Vec, double>> support;  // (unit normal, phi)
  std::vector<Vec> vertices;                    // counter-clockwise
  std::vector<int> active;                      // support index of each edge
  double area = 0.0;

  bool contains(const Vec& x, double slack = 1e-12) const;
  double support_value(const Vec& nu) const;
  Vec centroid() const;
  double min_radius() const;  // distance from origin to the nearest edge
  double max_radius() const;  // farthest vertex
};

/// Throws std::invalid_argument for fewer than 16 samples or uncertified samples,
/// std::runtime_error when fewer than 3 half-planes are active.
WulffShape build_wulff(const FanResult& fan);
WulffShape build_wulff(const std::vector<std::pair<Vec, double>>& support);

}  // namespace stablenorm
