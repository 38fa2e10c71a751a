#pragma once

#include <span>
#include <vector>

#include "stablenorm/grid.hpp"
#include "stablenorm/metric.hpp"

namespace stablenorm {

struct SolverParams {
  int max_iters = 20000;
  double tol_gap = 1e-3;   // relative duality gap
  double tol_feas = -1.0;  // h^d-weighted 2-norm of div z; negative means 1e-6 * n
  int check_every = 50;
  double tau = -1.0;  // primal step; negative means h / (2 sqrt d)
  double sigma = -1.0;  // dual step; same default
  bool multilevel = true;  // warm start from the solve on n/2 cells
  int coarsest_n = 16;

  double feas_tolerance(const Grid& g) const { return tol_feas < 0.0 ? 1e-6 * g.n() : tol_feas; }
  double primal_step(const Grid& g) const;
  double dual_step(const Grid& g) const;
  /// Throws std::invalid_argument unless the steps are positive and tau sigma 4d/h^2 <= 1.
  void validate(const Grid& g) const;
};

/// Result of one cell-problem solve for a direction p.
struct CellSolution {
  Vec p{};
  ScalarField v;  // periodic part, mean zero
  VectorField z;  // calibration candidate, pointwise dual-feasible
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double div_residual = 0.0;
  double feas_residual = 0.0;
  double v_norm = 0.0;  // h^d-weighted 2-norm of v
  /// max over checkpoints of (dual - primal - v_norm * div_residual)_+; zero up to rounding.
  double weak_duality_violation = 0.0;
  int iters = 0;         // iterations on this grid
  int coarse_iters = 0;  // iterations spent on coarser warm-start grids
  bool certified = false;

  explicit CellSolution(const Grid& g) : v(g), z(g) {}
  double relative_gap() const { return gap / primal; }
  /// Upper bound on sum_i h^d [F(x_i, p + Dv_i) - z_i . (p + Dv_i)], which is gap + <v, div z>.
  double complementarity_bound() const { return gap + v_norm * div_residual; }
};

/// a(x) at every flux-cell center, with the medium period scaled by `period`
/// (coefficient a(x / period)).
std::vector<double> sample_coefficients(const PeriodicMetric& m, const Grid& g, double period = 1.0);

/// h^d sum_j a_j N(offset + w_j) over flux cells, where w is a component-major flux field.
double flux_energy(const BaseNorm& base, const Grid& g, std::span<const double> coeff, std::span<const double> w,
                   const Vec& offset = {});

/// In-place pointwise projection of a flux field onto {N°(z_j) <= a_j}.
void project_dual_field(const BaseNorm& base, const Grid& g, std::span<const double> coeff, std::span<double> z);

/// max_j (F°(x_j, z_j) - 1)_+
double dual_infeasibility(const BaseNorm& base, const Grid& g, std::span<const double> coeff,
                          std::span<const double> z);

/// h^d sum_i F(x_i, p + (Dv)_i) for an arbitrary periodic candidate v.
double primal_energy(const PeriodicMetric& m, const Grid& g, const Vec& p, const ScalarField& v);

/// First-order primal-dual iteration for min_v sum F(x, p + Dv) on the torus.
/// Never throws on non-convergence: the result carries certified = false.
CellSolution solve_cell(const PeriodicMetric& m, const Grid& g, const Vec& p, const SolverParams& params = {});

struct SubgradientEstimate {
  Vec value{};
  bool certified = false;
};

/// h^d sum_i z_i, an approximate element of the subdifferential of the stable norm at p.
SubgradientEstimate subgradient_estimate(const CellSolution& sol);

}  // namespace stablenorm
