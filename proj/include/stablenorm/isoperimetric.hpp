#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stablenorm/cell_solver.hpp"
#include "stablenorm/stable_norm.hpp"

namespace stablenorm {

enum class IsoMode { constrained, penalized };
std::string to_string(IsoMode mode);

struct IsoParams {
  Grid box = Grid::box(32, 1.0);
  double volume = 0.0;  // physical units
  IsoMode mode = IsoMode::constrained;
  double mu = 0.0;  // penalized mode only
  double period = 1.0;  // coefficient a(x / period)
  std::optional<ScalarField> g;  // bulk term on the box, re-centred to zero mean

  // convex subproblem of each minimizing-movement step
  SolverParams inner = inner_defaults();
  // minimizing movements: step min(mm_step * h * R, R^2 / (12 a_max)), R = sqrt(volume / pi);
  // stop once the interface moves less than mm_tol * h in a step
  int max_outer = 200;
  double mm_step = 4.0;
  double mm_tol = 0.02;
  // initial ellipses (aspect ratio, major axis angle in degrees) of volume v
  std::vector<std::array<double, 2>> start_shapes{{1.0, 0.0}, {1.5, 0.0}, {1.5, 45.0}, {1.5, 90.0}, {1.5, 135.0}};
  // exact swap search on the mask energy, used on boxes with at most this many cells
  std::size_t polish_max_cells = 64;
  int random_starts = 64;
  std::uint64_t seed = 0;

  static SolverParams inner_defaults();
  /// Throws std::invalid_argument on an infeasible configuration.
  void validate() const;
};

/// Energy of a mask on a box: h^d sum_j a_j N((D chi)_j) + h^d sum_{i in E} g_i.
/// `coeff` holds the coefficient at every flux cell (see sample_coefficients).
class MaskEnergy {
 public:
  MaskEnergy(const PeriodicMetric& m, const Grid& box, double period = 1.0, const ScalarField* g = nullptr);

  const Grid& grid() const { return box_; }
  double operator()(const BitMask& e) const;
  double of_bits(const std::vector<std::uint8_t>& bits) const;
  /// Energy change from flipping cell i of `bits`.
  double flip_delta(const std::vector<std::uint8_t>& bits, std::size_t i) const;

 private:
  double flux_term(const std::vector<std::uint8_t>& bits, int ja, int jb) const;

  Grid box_;
  BaseNorm base_;
  std::vector<double> coeff_;
  std::vector<double> bulk_;
  double n1_, n2_, npp_, npm_;  // N(e1), N(e2), N(e1+e2), N(e1-e2)
};

double set_energy(const PeriodicMetric& m, const Grid& box, const BitMask& e, const ScalarField* g = nullptr,
                  double period = 1.0);

/// Pairwise total variation h sum_e c_e |u_j - u_i| over the 16-neighbourhood
/// of a box (zero exterior), with c_e = w_k a(midpoint). The direction weights
/// w_k >= 0 are fitted so that sum_k w_k |k.nu| approximates N(nu). Being a sum
/// of pairwise terms it satisfies the coarea formula exactly.
class EdgeTV {
 public:
  static constexpr int directions = 8;
  static const std::array<std::array<int, 2>, directions>& offsets();
  /// Nonnegative least-squares fit on 360 directions; optionally reports max |fit/N - 1|.
  static std::array<double, directions> fit_weights(const BaseNorm& base, double* max_rel_error = nullptr);

  EdgeTV(const PeriodicMetric& m, const Grid& box, double period = 1.0);

  const Grid& grid() const { return box_; }
  std::size_t edges() const { return cap_.size(); }
  const std::vector<double>& capacity() const { return cap_; }
  /// Upper bound on the squared norm of the unweighted edge difference operator.
  static double norm_bound_sq() { return 4.0 * directions; }

  /// du_e = u(to) - u(from), exterior values 0.
  void apply(std::span<const double> u, std::span<double> du) const;
  void apply_adjoint(std::span<const double> z, std::span<double> out) const;

  double value(std::span<const double> u) const;
  double of_bits(const std::vector<std::uint8_t>& bits) const;
  double flip_delta(const std::vector<std::uint8_t>& bits, std::size_t i) const;

 private:
  Grid box_;
  std::vector<std::int64_t> from_, to_;  // -1 marks the exterior
  std::vector<double> cap_;
  std::vector<std::size_t> incident_start_, incident_;
};

struct IsoResult {
  ScalarField density;  // relaxed u in [0,1]
  double level = 0.0;   // selected s*, mask = {u > s*} before polishing
  BitMask mask;
  double volume = 0.0;  // h^d |E|
  double energy = 0.0;  // mask energy including the bulk term
  double objective = 0.0;  // energy + mu |volume - v| in penalized mode, energy otherwise
  double surrogate_energy = 0.0;  // pairwise-TV energy of the mask, the quantity the movements decrease
  double relaxed_energy = 0.0;    // pairwise-TV energy of the density plus <g, u>
  double gap = 0.0;               // duality gap of the last movement subproblem
  double relative_gap = 0.0;
  double diameter = 0.0;
  bool touches_wall = false;
  int components = 0;
  int outer_iters = 0;
  long long inner_iters = 0;
  int starts = 0;
  bool certified = false;

  explicit IsoResult(const Grid& g) : density(g), mask(g) {}
};

/// Volume-selected minimizing movements from a central disc, then (on small
/// boxes) an exact swap search on the mask energy.
IsoResult solve_iso(const PeriodicMetric& m, const IsoParams& params);
/// Same with params.mode forced to penalized; requires mu > 0.
IsoResult solve_penalized(const PeriodicMetric& m, IsoParams params);

/// Mask cells with a 4-neighbour outside the mask; the box exterior counts as outside.
std::size_t perimeter_cells(const BitMask& e);

struct PenaltyTrial {
  double mu = 0.0;
  double volume = 0.0;
  double objective = 0.0;
  bool volume_matched = false;  // |volume - v| <= h^2 perimeter_cells
  bool mask_repeated = false;   // same mask as at mu / 2
};

struct PenaltySearch {
  double mu = 0.0;  // first of the two accepted values
  bool found = false;
  std::vector<PenaltyTrial> trials;
  std::optional<IsoResult> result;  // solve at mu (the last solve when not found)
};

/// Doubles mu from 1 / c0 until two consecutive values both match the volume
/// and return the same mask.
PenaltySearch find_penalty_threshold(const PeriodicMetric& m, IsoParams params, int max_doublings = 16);

struct BruteForceResult {
  BitMask mask;
  double energy = 0.0;
  std::uint64_t evaluated = 0;
};

/// Exhaustive minimum over masks with exactly `cells` cells. Ties within 1e-12
/// go to the mask with the smallest bit pattern (cell i is bit i).
BruteForceResult brute_force_iso(const PeriodicMetric& m, const Grid& box, int cells, const ScalarField* g = nullptr,
                                 double period = 1.0);
/// Exhaustive minimum of energy + mu |h^d |E| - v| over all masks.
BruteForceResult brute_force_penalized(const PeriodicMetric& m, const Grid& box, double volume, double mu,
                                       const ScalarField* g = nullptr, double period = 1.0);

struct DiameterReport {
  double diameter = 0.0;
  bool touches_wall = false;
  int components = 0;  // 4-connected
  std::string warning;  // "box too small" on wall contact
};

DiameterReport diameter_report(const BitMask& e);

struct LevelChoice {
  double level = 0.0;
  BitMask mask;
};

/// Level s with volume of {u > s} closest to v, ties to the larger mask.
LevelChoice select_level(const ScalarField& u, double volume);

/// Euclidean distance to the boundary of e at every cell center, negative inside.
/// The exterior of the box counts as outside.
std::vector<double> signed_distance(const BitMask& e);

struct ShapeMetrics {
  double epsilon = 0.0;
  double symmetric_difference = 0.0;  // |E delta W'| / |W'|
  double hausdorff = 0.0;
  Vec shift{};  // z: E + z is compared with W'
  double volume = 0.0;
  double energy = 0.0;
  bool touches_wall = false;
  bool certified = false;
};

struct Shape {
  std::function<bool(const Vec&)> contains;
  double area = 0.0;
  Vec centroid{};
  std::vector<Vec> boundary;  // closed polyline
};

Shape disc_shape(double radius, int segments = 720);
/// lambda W.
Shape wulff_shape(const WulffShape& w, double lambda);

/// Centroid-aligned comparison of a mask with a shape; `supersample`^2 points per cell.
ShapeMetrics compare_to_shape(const BitMask& e, const Shape& s, int supersample = 8);

struct RescaleParams {
  std::vector<double> epsilons{0.25, 0.125, 0.0625};
  int n = 128;
  double side = 0.0;  // 0 selects 3 lambda diam(W), diam(W) taken as twice the farthest vertex
  double lambda = 0.25;  // target set lambda W, volume lambda^2 |W|
  double slack = 0.2;
  IsoParams iso;  // box and volume are overwritten
};

struct RescaleReport {
  std::vector<ShapeMetrics> rows;
  std::vector<BitMask> masks;  // on the box centred at the origin
  bool non_increasing = false;  // within slack
};

RescaleReport rescale_experiment(const PeriodicMetric& m, const WulffShape& w, const RescaleParams& params,
                                 int workers = 1);

}  // namespace stablenorm
