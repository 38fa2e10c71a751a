#include "stablenorm/cell_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stablenorm {

double SolverParams::primal_step(const Grid& g) const {
  return tau > 0.0 ? tau : g.h() / (2.0 * std::sqrt(static_cast<double>(g.dim())));
}

double SolverParams::dual_step(const Grid& g) const {
  return sigma > 0.0 ? sigma : g.h() / (2.0 * std::sqrt(static_cast<double>(g.dim())));
}

void SolverParams::validate(const Grid& g) const {
  if (max_iters < 1) throw std::invalid_argument("solver: max_iters must be >= 1");
  if (check_every < 1) throw std::invalid_argument("solver: check_every must be >= 1");
  if (!(tol_gap > 0.0)) throw std::invalid_argument("solver: tol_gap must be positive");
  const double t = primal_step(g), s = dual_step(g);
  if (!(t > 0.0) || !(s > 0.0)) throw std::invalid_argument("solver: step sizes must be positive");
  if (t * s * gradient_norm_bound_sq(g) > 1.0 + 1e-12) {
    throw std::invalid_argument("solver: step sizes violate tau*sigma*4d/h^2 <= 1");
  }
}

std::vector<double> sample_coefficients(const PeriodicMetric& m, const Grid& g, double period) {
  std::vector<double> a(g.flux_cells());
  const double inv = 1.0 / period;
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = m.coefficient(inv * g.flux_center(j));
  return a;
}

double flux_energy(const BaseNorm& base, const Grid& g, std::span<const double> coeff, std::span<const double> w,
                   const Vec& offset) {
  const std::size_t fc = g.flux_cells();
  const int d = g.dim();
  double sum = 0.0;
  for (std::size_t j = 0; j < fc; ++j) {
    Vec q = offset;
    for (int k = 0; k < d; ++k) q[k] += w[k * fc + j];
    sum += coeff[j] * base.value(q);
  }
  return g.cell_volume() * sum;
}

void project_dual_field(const BaseNorm& base, const Grid& g, std::span<const double> coeff, std::span<double> z) {
  const std::size_t fc = g.flux_cells();
  const int d = g.dim();
  if (base.kind == BaseNormKind::euclidean && d == 2) {
    double* z0 = z.data();
    double* z1 = z.data() + fc;
    for (std::size_t j = 0; j < fc; ++j) {
      const double n2 = z0[j] * z0[j] + z1[j] * z1[j];
      const double a = coeff[j];
      if (n2 > a * a) {
        const double s = a / std::sqrt(n2);
        z0[j] *= s;
        z1[j] *= s;
      }
    }
    return;
  }
  for (std::size_t j = 0; j < fc; ++j) {
    Vec y{};
    for (int k = 0; k < d; ++k) y[k] = z[k * fc + j];
    const Vec w = base.project(y, coeff[j]);
    for (int k = 0; k < d; ++k) z[k * fc + j] = w[k];
  }
}

double dual_infeasibility(const BaseNorm& base, const Grid& g, std::span<const double> coeff,
                          std::span<const double> z) {
  const std::size_t fc = g.flux_cells();
  double worst = 0.0;
  for (std::size_t j = 0; j < fc; ++j) {
    Vec y{};
    for (int k = 0; k < g.dim(); ++k) y[k] = z[k * fc + j];
    worst = std::max(worst, base.polar(y) / coeff[j] - 1.0);
  }
  return worst;
}

double primal_energy(const PeriodicMetric& m, const Grid& g, const Vec& p, const ScalarField& v) {
  if (!(v.grid == g)) throw std::invalid_argument("primal_energy: field lives on another grid");
  const auto coeff = sample_coefficients(m, g);
  std::vector<double> w(g.flux_cells() * g.dim());
  gradient_into(g, v.values, w);
  return flux_energy(m.base(), g, coeff, w, p);
}

namespace {

// Periodic cell-centred linear interpolation from a grid of n/2 cells per axis to n.
std::vector<double> prolong(const Grid& coarse, const Grid& fine, std::span<const double> vc) {
  const int d = fine.dim();
  const int nc = coarse.n();
  std::vector<double> vf(fine.cells(), 0.0);
  for (std::size_t i = 0; i < fine.cells(); ++i) {
    const auto idx = fine.unravel(i);
    std::array<int, 3> lo{}, hi{};
    std::array<double, 3> wlo{1.0, 1.0, 1.0};
    for (int k = 0; k < d; ++k) {
      const int j = idx[k] / 2;
      if (idx[k] % 2 == 0) {
        lo[k] = (j - 1 + nc) % nc;
        hi[k] = j;
        wlo[k] = 0.25;
      } else {
        lo[k] = j;
        hi[k] = (j + 1) % nc;
        wlo[k] = 0.75;
      }
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::array<int, 3> c{};
      double w = 1.0;
      for (int k = 0; k < d; ++k) {
        const bool upper = (corner >> k) & 1;
        c[k] = upper ? hi[k] : lo[k];
        w *= upper ? 1.0 - wlo[k] : wlo[k];
      }
      acc += w * vc[coarse.ravel(c)];
    }
    vf[i] = acc;
  }
  return vf;
}

// One primal-dual step on a 2D torus with the Euclidean base norm, fusing the
// gradient, dual ascent and projection into one sweep and the divergence and
// primal update into a second.
void fused_step_2d(int n, double inv_h, const Vec& p, double tau, double sigma, std::span<const double> coeff,
                   std::vector<double>& v, std::vector<double>& vbar, std::vector<double>& z) {
  const std::size_t N = static_cast<std::size_t>(n) * n;
  double* z0 = z.data();
  double* z1 = z.data() + N;
  const double sp0 = sigma * p[0], sp1 = sigma * p[1];
  const double sh = sigma * inv_h;
  for (int a = 0; a < n; ++a) {
    const double* row = vbar.data() + static_cast<std::size_t>(a) * n;
    const double* next = vbar.data() + static_cast<std::size_t>(a + 1 < n ? a + 1 : 0) * n;
    const std::size_t base = static_cast<std::size_t>(a) * n;
    for (int b = 0; b < n; ++b) {
      const double c = row[b];
      const double right = b + 1 < n ? row[b + 1] : row[0];
      const std::size_t i = base + b;
      const double y0 = z0[i] + sp0 + sh * (next[b] - c);
      const double y1 = z1[i] + sp1 + sh * (right - c);
      const double r2 = y0 * y0 + y1 * y1;
      const double ai = coeff[i];
      if (r2 > ai * ai) {
        const double s = ai / std::sqrt(r2);
        z0[i] = s * y0;
        z1[i] = s * y1;
      } else {
        z0[i] = y0;
        z1[i] = y1;
      }
    }
  }
  const double th = tau * inv_h;
  for (int a = 0; a < n; ++a) {
    const std::size_t base = static_cast<std::size_t>(a) * n;
    const std::size_t prev = static_cast<std::size_t>(a > 0 ? a - 1 : n - 1) * n;
    for (int b = 0; b < n; ++b) {
      const std::size_t i = base + b;
      const std::size_t left = b > 0 ? i - 1 : base + n - 1;
      const double div = z0[i] - z0[prev + b] + z1[i] - z1[left];
      const double vn = v[i] + th * div;
      vbar[i] = 2.0 * vn - v[i];
      v[i] = vn;
    }
  }
}

// Fixed-step primal-dual iteration from (v, z); v and z are updated in place.
void iterate_cell(const PeriodicMetric& m, const Grid& g, const Vec& p, const SolverParams& params,
                  CellSolution& sol) {
  const int d = g.dim();
  const std::size_t N = g.cells();
  const double tau = params.primal_step(g);
  const double sigma = params.dual_step(g);
  const double vol = g.cell_volume();
  const double tol_feas = params.feas_tolerance(g);
  const auto coeff = sample_coefficients(m, g);

  auto& v = sol.v.values;
  auto& z = sol.z.values;
  std::vector<double> vbar(v), w(N * d), divz(N);

  auto evaluate = [&]() {
    gradient_into(g, v, w);
    sol.primal = flux_energy(m.base(), g, coeff, w, p);
    Vec zsum{};
    for (int k = 0; k < d; ++k) {
      const auto zk = sol.z.component(k);
      zsum[k] = vol * std::accumulate(zk.begin(), zk.end(), 0.0);
    }
    sol.dual = dot(zsum, p);
    sol.gap = sol.primal - sol.dual;
    divergence_into(g, z, divz);
    sol.div_residual = weighted_norm(divz, g);
    sol.v_norm = weighted_norm(v, g);
    sol.weak_duality_violation =
        std::max(sol.weak_duality_violation, sol.dual - sol.primal - sol.v_norm * sol.div_residual - 1e-12);
  };

  sol.certified = false;
  sol.iters = 0;
  const bool fused = d == 2 && m.base().kind == BaseNormKind::euclidean;
  for (int it = 1; it <= params.max_iters; ++it) {
    if (fused) {
      fused_step_2d(g.n(), 1.0 / g.h(), p, tau, sigma, coeff, v, vbar, z);
    } else {
      gradient_into(g, vbar, w);
      for (int k = 0; k < d; ++k) {
        const double pk = p[k];
        double* zk = z.data() + k * N;
        const double* wk = w.data() + k * N;
        for (std::size_t i = 0; i < N; ++i) zk[i] += sigma * (pk + wk[i]);
      }
      project_dual_field(m.base(), g, coeff, z);
      divergence_into(g, z, divz);
      for (std::size_t i = 0; i < N; ++i) {
        const double vn = v[i] + tau * divz[i];
        vbar[i] = 2.0 * vn - v[i];
        v[i] = vn;
      }
    }
    sol.iters = it;

    if (it % params.check_every == 0 || it == params.max_iters) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(N);
      for (std::size_t i = 0; i < N; ++i) {
        v[i] -= mean;
        vbar[i] -= mean;
      }
      require_finite(v, "cell solver iteration");
      require_finite(z, "cell solver iteration");
      evaluate();
      const double tol = params.tol_gap * sol.primal;
      if (sol.gap <= tol && sol.gap >= -tol && sol.div_residual <= tol_feas) {
        sol.certified = true;
        break;
      }
    }
  }
  sol.feas_residual = std::max(0.0, dual_infeasibility(m.base(), g, coeff, z));
}

}  // namespace

CellSolution solve_cell(const PeriodicMetric& m, const Grid& g, const Vec& p, const SolverParams& params) {
  if (!g.is_torus()) throw std::invalid_argument("solve_cell: the cell problem lives on a torus grid");
  if (!(norm2(p) > 0.0)) throw std::invalid_argument("solve_cell: p must be nonzero");
  params.validate(g);

  CellSolution sol(g);
  sol.p = p;
  if (params.multilevel && g.n() % 2 == 0 && g.n() / 2 >= params.coarsest_n) {
    const Grid coarse = Grid::torus(g.dim(), g.n() / 2);
    SolverParams cp = params;
    cp.tau = cp.sigma = -1.0;
    const CellSolution cs = solve_cell(m, coarse, p, cp);
    sol.v.values = prolong(coarse, g, cs.v.values);
    for (int k = 0; k < g.dim(); ++k) {
      auto zf = sol.z.component(k);
      const auto zc = prolong(coarse, g, cs.z.component(k));
      std::copy(zc.begin(), zc.end(), zf.begin());
    }
    project_dual_field(m.base(), g, sample_coefficients(m, g), sol.z.values);
    sol.coarse_iters = cs.iters + cs.coarse_iters;
  }
  iterate_cell(m, g, p, params, sol);
  return sol;
}

SubgradientEstimate subgradient_estimate(const CellSolution& sol) {
  SubgradientEstimate est;
  const double vol = sol.z.grid.cell_volume();
  for (int k = 0; k < sol.z.grid.dim(); ++k) {
    const auto zk = sol.z.component(k);
    est.value[k] = vol * std::accumulate(zk.begin(), zk.end(), 0.0);
  }
  est.certified = sol.certified;
  return est;
}

}  // namespace stablenorm
