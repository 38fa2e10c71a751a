#include "stablenorm/planelike.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stablenorm {

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

bool integer_direction(const Vec& p, std::array<int, 3>& out) {
  for (int k = 0; k < 3; ++k) {
    out[k] = static_cast<int>(std::lround(p[k]));
    if (static_cast<double>(out[k]) != p[k]) return false;
  }
  return true;
}

}  // namespace

PlaneLikeSet extract_planelike(const CellSolution& sol, double s, int copies) {
  const Grid& g = sol.v.grid;
  if (g.dim() != 2) throw std::invalid_argument("extract_planelike: only d = 2 windows are supported");
  if (copies < 1) throw std::invalid_argument("extract_planelike: copies must be >= 1");
  std::array<int, 3> p{};
  if (!integer_direction(sol.p, p)) throw std::invalid_argument("extract_planelike: p must be an integer vector");
  const int n = g.n();
  const int wn = 2 * copies * n;
  PlaneLikeSet e{p, s, copies, BitMask(Grid::box(wn, 2.0 * copies, vec2(-copies, -copies)))};
  const double denom = 2.0 * n;
  for (int a = 0; a < wn; ++a) {
    for (int b = 0; b < wn; ++b) {
      // p.x at the cell center as an exact integer over 2n
      const long long num = static_cast<long long>(p[0]) * (2LL * (a - copies * n) + 1) +
                            static_cast<long long>(p[1]) * (2LL * (b - copies * n) + 1);
      const double u = sol.v.values[static_cast<std::size_t>(a % n) * n + (b % n)] + static_cast<double>(num) / denom;
      e.mask.set(static_cast<std::size_t>(a) * wn + b, u > s);
    }
  }
  return e;
}

std::vector<std::size_t> boundary_cells(const BitMask& mask) {
  const int n = mask.grid.n();
  std::vector<std::size_t> out;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const std::size_t i = static_cast<std::size_t>(a) * n + b;
      const bool in = mask[i];
      const bool edge = (a > 0 && mask[i - n] != in) || (a + 1 < n && mask[i + n] != in) ||
                        (b > 0 && mask[i - 1] != in) || (b + 1 < n && mask[i + 1] != in);
      if (edge) out.push_back(i);
    }
  }
  return out;
}

double slab_width(const PlaneLikeSet& e) {
  const Vec pv{double(e.p[0]), double(e.p[1]), 0.0};
  const double len = norm2(pv);
  double m = 0.0;
  for (std::size_t i : boundary_cells(e.mask)) {
    m = std::max(m, std::abs(dot(pv, e.mask.grid.cell_center(i)) - e.s) / len);
  }
  return m;
}

SlabReport check_slab(const CellSolution& sol, double s, int copies) {
  const PlaneLikeSet e = extract_planelike(sol, s, copies);
  const PlaneLikeSet wide = extract_planelike(sol, s, copies + 2);
  SlabReport r;
  const auto cells = boundary_cells(e.mask);
  r.boundary_count = cells.size();
  r.m_obs = slab_width(e);
  r.m_obs_wide = slab_width(wide);

  const int n = e.mask.grid.n();
  std::vector<std::uint8_t> on(e.mask.grid.cells(), 0);
  for (std::size_t i : cells) on[i] = 1;
  UnionFind uf(on.size());
  for (std::size_t i : cells) {
    const int a = static_cast<int>(i / n), b = static_cast<int>(i % n);
    for (int da = -1; da <= 1; ++da) {
      for (int db = -1; db <= 1; ++db) {
        const int aa = a + da, bb = b + db;
        if (aa < 0 || bb < 0 || aa >= n || bb >= n) continue;
        const std::size_t j = static_cast<std::size_t>(aa) * n + bb;
        if (on[j]) uf.unite(i, j);
      }
    }
  }
  for (std::size_t i : cells) r.boundary_components += uf.find(i) == i ? 1 : 0;

  r.finite = !cells.empty() && std::isfinite(r.m_obs) && r.m_obs <= 0.5 * copies;
  r.stable = std::abs(r.m_obs_wide - r.m_obs) <= sol.v.grid.h();
  r.pass = r.finite && r.stable;
  return r;
}

BirkhoffReport check_birkhoff(const PlaneLikeSet& e, int q_max) {
  if (q_max < 0) throw std::invalid_argument("check_birkhoff: q_max must be nonnegative");
  if (2 * e.copies <= q_max) {
    throw std::invalid_argument("check_birkhoff: window of 2*copies periods must exceed q_max");
  }
  const int wn = e.mask.grid.n();
  const int n = wn / (2 * e.copies);
  BirkhoffReport rep;
  for (int q0 = -q_max; q0 <= q_max; ++q0) {
    for (int q1 = -q_max; q1 <= q_max; ++q1) {
      if (q0 == 0 && q1 == 0) continue;
      BirkhoffCheck c;
      c.q = {q0, q1, 0};
      c.p_dot_q = e.p[0] * q0 + e.p[1] * q1;
      c.containment = c.p_dot_q > 0 ? "E+q<=E" : (c.p_dot_q < 0 ? "E<=E+q" : "E=E+q");
      const int s0 = q0 * n, s1 = q1 * n;
      for (int a = std::max(0, s0); a < std::min(wn, wn + s0); ++a) {
        for (int b = std::max(0, s1); b < std::min(wn, wn + s1); ++b) {
          // y = x + q, compare membership of x (shifted) with y
          const bool shifted = e.mask[static_cast<std::size_t>(a - s0) * wn + (b - s1)];  // y in E + q
          const bool here = e.mask[static_cast<std::size_t>(a) * wn + b];                  // y in E
          if (c.p_dot_q >= 0 && shifted && !here) ++c.violations;
          if (c.p_dot_q <= 0 && here && !shifted) ++c.violations;
        }
      }
      c.pass = c.violations == 0;
      rep.total_violations += c.violations;
      rep.checks.push_back(c);
    }
  }
  rep.pass = rep.total_violations == 0;
  return rep;
}

LaminationReport lamination_coverage(const CellSolution& sol, double eta) {
  const Grid& g = sol.v.grid;
  LaminationReport r{eta < 0.0 ? 0.1 * norm2(sol.p) : eta, BitMask(g), 0.0, 0.0, 0};
  const VectorField w = gradient(sol.v);
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    const bool gap = norm2(sol.p + w.at(i)) < r.eta;
    r.gap.set(i, gap);
    count += gap ? 1 : 0;
  }
  r.gap_fraction = static_cast<double>(count) / static_cast<double>(g.cells());
  r.coverage_fraction = 1.0 - r.gap_fraction;

  UnionFind uf(g.cells());
  for (std::size_t i = 0; i < g.cells(); ++i) {
    if (!r.gap[i]) continue;
    const auto idx = g.unravel(i);
    for (int k = 0; k < g.dim(); ++k) {
      auto nb = idx;
      nb[k] = (nb[k] + 1) % g.n();
      const std::size_t j = g.ravel(nb);
      if (r.gap[j]) uf.unite(i, j);
    }
  }
  for (std::size_t i = 0; i < g.cells(); ++i) r.components += (r.gap[i] && uf.find(i) == i) ? 1 : 0;
  return r;
}

CalibrationReport calibration_residuals(const PeriodicMetric& m, const VectorField& z, const VectorField& w,
                                        double eta, const BitMask* restrict_to) {
  const Grid& g = z.grid;
  if (!(w.grid == g) || !g.is_torus()) throw std::invalid_argument("calibration: fields must share a torus grid");
  CalibrationReport r;
  double sum = 0.0, wsum = 0.0, weights = 0.0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    if (restrict_to && !(*restrict_to)[i]) continue;
    const Vec wi = w.at(i);
    const double len = norm2(wi);
    if (len < eta || !(len > 0.0)) continue;
    const Vec nu = (1.0 / len) * wi;
    const double res = std::abs(dot(z.at(i), nu) - m.eval(g.cell_center(i), nu));
    r.sup_residual = std::max(r.sup_residual, res);
    sum += res;
    wsum += len * res;
    weights += len;
    ++r.cells;
  }
  if (r.cells > 0) {
    r.mean_residual = sum / static_cast<double>(r.cells);
    r.weighted_mean_residual = wsum / weights;
  }
  return r;
}

CalibrationReport check_calibration(const PeriodicMetric& m, const CellSolution& sol, double eta,
                                    const PlaneLikeSet* e) {
  const Grid& g = sol.v.grid;
  VectorField w = gradient(sol.v);
  for (std::size_t i = 0; i < g.cells(); ++i) w.set(i, sol.p + w.at(i));
  std::optional<BitMask> under;
  if (e) {
    under.emplace(g);
    const int wn = e->mask.grid.n(), n = g.n();
    for (std::size_t i : boundary_cells(e->mask)) {
      const int a = static_cast<int>(i / wn) % n, b = static_cast<int>(i % wn) % n;
      under->set(static_cast<std::size_t>(a) * n + b, true);
    }
  }
  CalibrationReport r =
      calibration_residuals(m, sol.z, w, eta < 0.0 ? 0.1 * norm2(sol.p) : eta, under ? &*under : nullptr);
  r.certified_relative_gap = sol.complementarity_bound() / sol.primal;
  return r;
}

std::string to_string(Ordering o) { return o == Ordering::nested ? "nested" : "crossing"; }

OrderingReport check_ordering(const PlaneLikeSet& e1, const PlaneLikeSet& e2, std::size_t slack) {
  if (!(e1.mask.grid == e2.mask.grid)) throw std::invalid_argument("check_ordering: masks live on different windows");
  if (e1.p != e2.p) throw std::invalid_argument("check_ordering: sets have different directions");
  OrderingReport r;
  std::vector<std::size_t> d12, d21;
  for (std::size_t i = 0; i < e1.mask.bits.size(); ++i) {
    if (e1.mask[i] && !e2.mask[i]) d12.push_back(i);
    if (e2.mask[i] && !e1.mask[i]) d21.push_back(i);
  }
  r.first_minus_second = d12.size();
  r.second_minus_first = d21.size();
  r.verdict = std::min(d12.size(), d21.size()) <= slack ? Ordering::nested : Ordering::crossing;
  if (r.verdict == Ordering::crossing) {
    for (std::size_t k = 0; k < std::min<std::size_t>(8, d12.size()); ++k) r.witnesses.push_back(d12[k]);
    for (std::size_t k = 0; k < std::min<std::size_t>(8, d21.size()); ++k) r.witnesses.push_back(d21[k]);
  }
  return r;
}

}  // namespace stablenorm
