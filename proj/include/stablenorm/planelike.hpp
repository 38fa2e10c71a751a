#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "stablenorm/cell_solver.hpp"

namespace stablenorm {

/// {x : v_p(x mod 1) + p.x > s} on the window [-copies, copies]^2.
struct PlaneLikeSet {
  std::array<int, 3> p{};
  double s = 0.0;
  int copies = 0;
  BitMask mask;  // on a box grid of 2 copies n cells per side, origin (-copies, -copies)
};

/// Requires an integer direction on a 2D torus solution and copies >= 1.
PlaneLikeSet extract_planelike(const CellSolution& sol, double s, int copies);

/// Cells of the mask with a 4-neighbour (inside the window) of the other colour.
std::vector<std::size_t> boundary_cells(const BitMask& mask);

struct SlabReport {
  double m_obs = 0.0;        // max |p.x - s| / |p| over boundary cells
  double m_obs_wide = 0.0;   // same on a window two copies wider
  std::size_t boundary_count = 0;
  int boundary_components = 0;  // 8-connected, reported only
  bool finite = false;       // boundary nonempty and m_obs <= copies / 2
  bool stable = false;       // |m_obs_wide - m_obs| <= h
  bool pass = false;
};

double slab_width(const PlaneLikeSet& e);
SlabReport check_slab(const CellSolution& sol, double s, int copies);

struct BirkhoffCheck {
  std::array<int, 3> q{};
  int p_dot_q = 0;
  std::string containment;  // "E+q<=E", "E<=E+q" or "E=E+q"
  std::size_t violations = 0;
  bool pass = false;
};

struct BirkhoffReport {
  std::vector<BirkhoffCheck> checks;
  std::size_t total_violations = 0;
  bool pass = false;
};

/// Every integer q with |q|_inf <= q_max. Throws std::invalid_argument when
/// the window is too narrow for translates by q_max to overlap.
BirkhoffReport check_birkhoff(const PlaneLikeSet& e, int q_max = 3);

struct LaminationReport {
  double eta = 0.0;
  BitMask gap;  // torus cells with |p + Dv| < eta
  double gap_fraction = 0.0;
  double coverage_fraction = 0.0;
  int components = 0;  // periodic 4-connectivity
};

/// eta < 0 selects 0.1 |p|.
LaminationReport lamination_coverage(const CellSolution& sol, double eta = -1.0);

struct CalibrationReport {
  std::size_t cells = 0;
  double sup_residual = 0.0;
  double mean_residual = 0.0;
  double weighted_mean_residual = 0.0;  // weights |p + Dv|
  double certified_relative_gap = 0.0;  // complementarity bound / primal
};

/// Residuals |z.n - F(x, n)|, n = w/|w|, over torus cells with |w| >= eta and,
/// when `restrict_to` is given, restricted to its set cells.
CalibrationReport calibration_residuals(const PeriodicMetric& m, const VectorField& z, const VectorField& w,
                                        double eta, const BitMask* restrict_to = nullptr);

/// Residuals of the solver's own z against n = (p + Dv)/|p + Dv|. With `e`,
/// only torus cells under a boundary cell of e are used. eta < 0 selects 0.1 |p|.
CalibrationReport check_calibration(const PeriodicMetric& m, const CellSolution& sol, double eta = -1.0,
                                    const PlaneLikeSet* e = nullptr);

enum class Ordering { nested, crossing };
std::string to_string(Ordering o);

struct OrderingReport {
  Ordering verdict = Ordering::crossing;
  std::size_t first_minus_second = 0;
  std::size_t second_minus_first = 0;
  std::vector<std::size_t> witnesses;  // up to 8 cells from each difference when crossing
};

/// Nested when one of the two set differences has at most `slack` cells.
OrderingReport check_ordering(const PlaneLikeSet& e1, const PlaneLikeSet& e2, std::size_t slack = 0);

}  // namespace stablenorm
