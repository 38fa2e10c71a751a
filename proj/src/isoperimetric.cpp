#include "stablenorm/isoperimetric.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>

#include "stablenorm/parallel.hpp"

namespace stablenorm {

std::string to_string(IsoMode mode) { return mode == IsoMode::constrained ? "constrained" : "penalized"; }

SolverParams IsoParams::inner_defaults() {
  SolverParams sp;
  sp.tol_gap = 1e-5;
  sp.max_iters = 4000;
  sp.check_every = 50;
  sp.multilevel = false;
  return sp;
}

void IsoParams::validate() const {
  if (box.is_torus()) throw std::invalid_argument("iso: the domain must be a box grid");
  const double full = box.side() * box.side();
  if (!(volume > 0.0) || volume > full * (1.0 + 1e-12)) {
    throw std::invalid_argument("iso: volume must lie in (0, L^2]");
  }
  if (mode == IsoMode::penalized && !(mu > 0.0)) throw std::invalid_argument("iso: penalized mode needs mu > 0");
  if (!(period > 0.0)) throw std::invalid_argument("iso: period must be positive");
  if (g) {
    if (!(g->grid == box)) throw std::invalid_argument("iso: bulk term lives on another grid");
    require_finite(g->values, "bulk term load");
  }
  if (max_outer < 1) throw std::invalid_argument("iso: max_outer must be >= 1");
  if (!(mm_step > 0.0)) throw std::invalid_argument("iso: mm_step must be positive");
  if (!(mm_tol > 0.0)) throw std::invalid_argument("iso: mm_tol must be positive");
  if (start_shapes.empty()) throw std::invalid_argument("iso: at least one start shape is required");
  for (const auto& s : start_shapes) {
    if (!(s[0] > 0.0) || !std::isfinite(s[1])) throw std::invalid_argument("iso: start shapes need a positive aspect ratio");
  }
  inner.validate(box);
}

// ---------------------------------------------------------------------------

MaskEnergy::MaskEnergy(const PeriodicMetric& m, const Grid& box, double period, const ScalarField* g)
    : box_(box), base_(m.base()), coeff_(sample_coefficients(m, box, period)) {
  if (box.is_torus()) throw std::invalid_argument("mask energy: the domain must be a box grid");
  n1_ = base_.value(vec2(1, 0));
  n2_ = base_.value(vec2(0, 1));
  npp_ = base_.value(vec2(1, 1));
  npm_ = base_.value(vec2(1, -1));
  bulk_.assign(box.cells(), 0.0);
  if (g) {
    if (!(g->grid == box)) throw std::invalid_argument("mask energy: bulk term lives on another grid");
    const double mean = std::accumulate(g->values.begin(), g->values.end(), 0.0) / static_cast<double>(box.cells());
    for (std::size_t i = 0; i < bulk_.size(); ++i) bulk_[i] = g->values[i] - mean;
  }
}

double MaskEnergy::flux_term(const std::vector<std::uint8_t>& bits, int ja, int jb) const {
  const int n = box_.n();
  const int a = ja - 1, b = jb - 1;
  auto bit = [&](int x, int y) -> int {
    return (x < 0 || y < 0 || x >= n || y >= n) ? 0 : bits[static_cast<std::size_t>(x) * n + y];
  };
  const int c = bit(a, b);
  const int d0 = bit(a + 1, b) - c, d1 = bit(a, b + 1) - c;
  double nv = 0.0;
  if (d0 == 0) {
    nv = d1 == 0 ? 0.0 : n2_;
  } else if (d1 == 0) {
    nv = n1_;
  } else {
    nv = d0 == d1 ? npp_ : npm_;
  }
  return coeff_[static_cast<std::size_t>(ja) * (n + 1) + jb] * nv;
}

double MaskEnergy::of_bits(const std::vector<std::uint8_t>& bits) const {
  const int fn = box_.n() + 1;
  const double h = box_.h();
  double s = 0.0;
  for (int ja = 0; ja < fn; ++ja) {
    for (int jb = 0; jb < fn; ++jb) s += flux_term(bits, ja, jb);
  }
  double bulk = 0.0;
  for (std::size_t i = 0; i < bits.size(); ++i) bulk += bits[i] ? bulk_[i] : 0.0;
  return h * s + h * h * bulk;
}

double MaskEnergy::operator()(const BitMask& e) const {
  if (!(e.grid == box_)) throw std::invalid_argument("mask energy: mask lives on another grid");
  return of_bits(e.bits);
}

double MaskEnergy::flip_delta(const std::vector<std::uint8_t>& bits, std::size_t i) const {
  const int n = box_.n();
  const int a = static_cast<int>(i / n), b = static_cast<int>(i % n);
  const double h = box_.h();
  auto local = [&]() { return flux_term(bits, a + 1, b + 1) + flux_term(bits, a, b + 1) + flux_term(bits, a + 1, b); };
  auto& mut = const_cast<std::vector<std::uint8_t>&>(bits);
  const double before = local();
  mut[i] ^= 1;
  const double after = local();
  mut[i] ^= 1;
  const double sign = bits[i] ? -1.0 : 1.0;
  return h * (after - before) + sign * h * h * bulk_[i];
}

double set_energy(const PeriodicMetric& m, const Grid& box, const BitMask& e, const ScalarField* g, double period) {
  return MaskEnergy(m, box, period, g)(e);
}

// ---------------------------------------------------------------------------

LevelChoice select_level(const ScalarField& u, double volume) {
  const std::size_t N = u.values.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });
  const double cv = u.grid.cell_volume();
  double best_err = std::abs(volume);
  std::size_t best_k = 0;
  for (std::size_t k = 1; k <= N; ++k) {
    if (k < N && u[order[k]] == u[order[k - 1]]) continue;
    const double err = std::abs(static_cast<double>(k) * cv - volume);
    if (err <= best_err) {
      best_err = err;
      best_k = k;
    }
  }
  LevelChoice out{0.0, BitMask(u.grid)};
  if (N == 0) return out;
  const double lo = u[order[N - 1]];
  out.level = best_k == N ? lo - 1.0 : u[order[best_k]];
  for (std::size_t k = 0; k < best_k; ++k) out.mask.set(order[k], true);
  return out;
}

namespace {

// Squared distance transform of a sampled function in 1D.
void dt1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& zz) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  zz[0] = -inf;
  zz[1] = inf;
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= zz[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    zz[k] = s;
    zz[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (zz[k + 1] < q) ++k;
    d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

// Squared Euclidean distance (in cells) to the nearest target on a P x P grid.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& target, int P) {
  constexpr double big = 1e20;
  std::vector<double> f(static_cast<std::size_t>(P) * P);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = target[i] ? 0.0 : big;
  std::vector<double> line(P), out(P);
  std::vector<int> v(P);
  std::vector<double> zz(P + 1);
  for (int a = 0; a < P; ++a) {
    for (int b = 0; b < P; ++b) line[b] = f[static_cast<std::size_t>(a) * P + b];
    dt1d(line.data(), out.data(), P, v, zz);
    for (int b = 0; b < P; ++b) f[static_cast<std::size_t>(a) * P + b] = out[b];
  }
  for (int b = 0; b < P; ++b) {
    for (int a = 0; a < P; ++a) line[a] = f[static_cast<std::size_t>(a) * P + b];
    dt1d(line.data(), out.data(), P, v, zz);
    for (int a = 0; a < P; ++a) f[static_cast<std::size_t>(a) * P + b] = out[a];
  }
  return f;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
};

}  // namespace

std::vector<double> signed_distance(const BitMask& e) {
  const int n = e.grid.n();
  const int P = n + 2;
  const double h = e.grid.h();
  std::vector<std::uint8_t> in(static_cast<std::size_t>(P) * P, 0), out(in.size(), 1);
  bool any = false;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const bool x = e[static_cast<std::size_t>(a) * n + b];
      const std::size_t j = static_cast<std::size_t>(a + 1) * P + (b + 1);
      in[j] = x ? 1 : 0;
      out[j] = x ? 0 : 1;
      any = any || x;
    }
  }
  const auto d_to_in = squared_edt(in, P);
  const auto d_to_out = squared_edt(out, P);
  std::vector<double> sd(e.grid.cells());
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const std::size_t i = static_cast<std::size_t>(a) * n + b;
      const std::size_t j = static_cast<std::size_t>(a + 1) * P + (b + 1);
      if (e[i]) {
        sd[i] = -(std::sqrt(d_to_out[j]) - 0.5) * h;
      } else {
        sd[i] = any ? (std::sqrt(d_to_in[j]) - 0.5) * h : 2.0 * n * h;
      }
    }
  }
  return sd;
}

DiameterReport diameter_report(const BitMask& e) {
  const int n = e.grid.n();
  DiameterReport r;
  if (e.count() == 0) throw std::invalid_argument("diameter_report: empty mask");
  std::vector<Vec> rim;
  UnionFind uf(e.grid.cells());
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const std::size_t i = static_cast<std::size_t>(a) * n + b;
      if (!e[i]) continue;
      const bool wall = a == 0 || b == 0 || a == n - 1 || b == n - 1;
      r.touches_wall = r.touches_wall || wall;
      const bool edge = wall || !e[i - n] || !e[i + n] || !e[i - 1] || !e[i + 1];
      if (edge) rim.push_back(e.grid.cell_center(i));
      if (a + 1 < n && e[i + n]) uf.parent[uf.find(i)] = uf.find(i + n);
      if (b + 1 < n && e[i + 1]) uf.parent[uf.find(i)] = uf.find(i + 1);
    }
  }
  for (std::size_t i = 0; i < e.grid.cells(); ++i) r.components += (e[i] && uf.find(i) == i) ? 1 : 0;
  double d2 = 0.0;
  for (std::size_t i = 0; i < rim.size(); ++i) {
    for (std::size_t j = i + 1; j < rim.size(); ++j) {
      const Vec d = rim[i] - rim[j];
      d2 = std::max(d2, dot(d, d));
    }
  }
  r.diameter = std::sqrt(d2);
  if (r.touches_wall) r.warning = "box too small";
  return r;
}

// ---------------------------------------------------------------------------

const std::array<std::array<int, 2>, EdgeTV::directions>& EdgeTV::offsets() {
  static const std::array<std::array<int, 2>, directions> k{
      {{1, 0}, {0, 1}, {1, 1}, {1, -1}, {2, 1}, {1, 2}, {2, -1}, {1, -2}}};
  return k;
}

std::array<double, EdgeTV::directions> EdgeTV::fit_weights(const BaseNorm& base, double* max_rel_error) {
  constexpr int samples = 360;
  const auto& ks = offsets();
  std::vector<std::array<double, directions>> A(samples);
  std::vector<double> b(samples);
  for (int s = 0; s < samples; ++s) {
    const double t = std::numbers::pi * s / samples;
    const Vec nu = vec2(std::cos(t), std::sin(t));
    for (int k = 0; k < directions; ++k) A[s][k] = std::abs(ks[k][0] * nu[0] + ks[k][1] * nu[1]);
    b[s] = base.value(nu);
  }
  // coordinate descent for nonnegative least squares
  std::array<double, directions> w{};
  std::vector<double> r(b);  // r = b - A w
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double moved = 0.0;
    for (int k = 0; k < directions; ++k) {
      double num = 0.0, den = 0.0;
      for (int s = 0; s < samples; ++s) {
        num += A[s][k] * r[s];
        den += A[s][k] * A[s][k];
      }
      const double nk = std::max(0.0, w[k] + num / den);
      const double d = nk - w[k];
      if (d != 0.0) {
        for (int s = 0; s < samples; ++s) r[s] -= d * A[s][k];
        w[k] = nk;
        moved = std::max(moved, std::abs(d));
      }
    }
    if (moved < 1e-15) break;
  }
  if (max_rel_error) {
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) worst = std::max(worst, std::abs(r[s]) / b[s]);
    *max_rel_error = worst;
  }
  return w;
}

EdgeTV::EdgeTV(const PeriodicMetric& m, const Grid& box, double period) : box_(box) {
  if (box.is_torus()) throw std::invalid_argument("edge tv: the domain must be a box grid");
  const auto w = fit_weights(m.base());
  const int n = box.n();
  const double h = box.h();
  const Vec& o = box.origin();
  auto inside = [n](int a, int b) { return a >= 0 && b >= 0 && a < n && b < n; };
  for (int k = 0; k < directions; ++k) {
    if (w[k] <= 0.0) continue;
    const int da = offsets()[k][0], db = offsets()[k][1];
    for (int a = -2; a < n + 2; ++a) {
      for (int b = -2; b < n + 2; ++b) {
        const bool in0 = inside(a, b), in1 = inside(a + da, b + db);
        if (!in0 && !in1) continue;
        from_.push_back(in0 ? static_cast<std::int64_t>(a) * n + b : -1);
        to_.push_back(in1 ? static_cast<std::int64_t>(a + da) * n + (b + db) : -1);
        const Vec mid = vec2(o[0] + (a + 0.5 * da + 0.5) * h, o[1] + (b + 0.5 * db + 0.5) * h);
        cap_.push_back(w[k] * m.coefficient((1.0 / period) * mid));
      }
    }
  }
  std::vector<std::size_t> deg(box.cells() + 1, 0);
  for (std::size_t e = 0; e < cap_.size(); ++e) {
    if (from_[e] >= 0) ++deg[from_[e] + 1];
    if (to_[e] >= 0) ++deg[to_[e] + 1];
  }
  std::partial_sum(deg.begin(), deg.end(), deg.begin());
  incident_start_ = deg;
  incident_.resize(deg.back());
  std::vector<std::size_t> fill(deg.begin(), deg.end() - 1);
  for (std::size_t e = 0; e < cap_.size(); ++e) {
    if (from_[e] >= 0) incident_[fill[from_[e]]++] = e;
    if (to_[e] >= 0) incident_[fill[to_[e]]++] = e;
  }
}

void EdgeTV::apply(std::span<const double> u, std::span<double> du) const {
  for (std::size_t e = 0; e < cap_.size(); ++e) {
    du[e] = (to_[e] >= 0 ? u[to_[e]] : 0.0) - (from_[e] >= 0 ? u[from_[e]] : 0.0);
  }
}

void EdgeTV::apply_adjoint(std::span<const double> z, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t e = 0; e < cap_.size(); ++e) {
    if (to_[e] >= 0) out[to_[e]] += z[e];
    if (from_[e] >= 0) out[from_[e]] -= z[e];
  }
}

double EdgeTV::value(std::span<const double> u) const {
  double s = 0.0;
  for (std::size_t e = 0; e < cap_.size(); ++e) {
    s += cap_[e] * std::abs((to_[e] >= 0 ? u[to_[e]] : 0.0) - (from_[e] >= 0 ? u[from_[e]] : 0.0));
  }
  return box_.h() * s;
}

double EdgeTV::of_bits(const std::vector<std::uint8_t>& bits) const {
  double s = 0.0;
  for (std::size_t e = 0; e < cap_.size(); ++e) {
    const int a = from_[e] >= 0 ? bits[from_[e]] : 0, b = to_[e] >= 0 ? bits[to_[e]] : 0;
    if (a != b) s += cap_[e];
  }
  return box_.h() * s;
}

double EdgeTV::flip_delta(const std::vector<std::uint8_t>& bits, std::size_t i) const {
  double d = 0.0;
  for (std::size_t k = incident_start_[i]; k < incident_start_[i + 1]; ++k) {
    const std::size_t e = incident_[k];
    const std::int64_t other = from_[e] == static_cast<std::int64_t>(i) ? to_[e] : from_[e];
    const int ob = other >= 0 ? bits[other] : 0;
    d += (ob == bits[i]) ? cap_[e] : -cap_[e];
  }
  return box_.h() * d;
}

// ---------------------------------------------------------------------------

namespace {

struct SubResult {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double scale = 0.0;
  int iters = 0;
  bool certified = false;
};

// min_w TV(w) + |w - f|^2 / (2 gamma) for the unweighted pairwise TV, by
// accelerated projected gradient on the edge field z, w = f - gamma D^T z.
SubResult solve_rof(const EdgeTV& tv, const std::vector<double>& f, double gamma, const SolverParams& sp,
                    std::vector<double>& z, std::vector<double>& w) {
  const std::size_t N = f.size(), E = tv.edges();
  const auto& cap = tv.capacity();
  const double step = 1.0 / (gamma * EdgeTV::norm_bound_sq());
  const double inv_h = 1.0 / tv.grid().h();
  std::vector<double> y(z), zold(E), dz(N), dw(E);
  double theta = 1.0;
  SubResult out;
  w.resize(N);
  auto primal_from = [&](const std::vector<double>& zz) {
    tv.apply_adjoint(zz, dz);
    for (std::size_t i = 0; i < N; ++i) w[i] = f[i] - gamma * dz[i];
  };
  for (int it = 1; it <= sp.max_iters; ++it) {
    primal_from(y);
    tv.apply(w, dw);
    zold = z;
    for (std::size_t e = 0; e < E; ++e) z[e] = std::clamp(y[e] + step * dw[e], -cap[e], cap[e]);
    const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const double beta = (theta - 1.0) / next;
    theta = next;
    for (std::size_t e = 0; e < E; ++e) y[e] = z[e] + beta * (z[e] - zold[e]);
    out.iters = it;
    if (it % sp.check_every == 0 || it == sp.max_iters) {
      require_finite(z, "minimizing movement iteration");
      primal_from(z);
      double fit = 0.0, dual = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        fit += (w[i] - f[i]) * (w[i] - f[i]);
        dual += f[i] * dz[i] - 0.5 * gamma * dz[i] * dz[i];
      }
      const double J = tv.value(w) * inv_h;
      out.primal = J + fit / (2.0 * gamma);
      out.dual = dual;
      out.gap = out.primal - out.dual;
      out.scale = J;
      if (out.gap <= sp.tol_gap * std::max(J, 1e-300)) {
        out.certified = true;
        break;
      }
    }
  }
  primal_from(z);
  return out;
}

std::vector<std::uint8_t> nearest_cells(const Grid& box, std::size_t center, std::size_t k) {
  const int n = box.n();
  const int ca = static_cast<int>(center / n), cb = static_cast<int>(center % n);
  std::vector<std::pair<long long, std::size_t>> d;
  for (std::size_t i = 0; i < box.cells(); ++i) {
    const long long da = static_cast<long long>(i / n) - ca, db = static_cast<long long>(i % n) - cb;
    d.emplace_back(da * da + db * db, i);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::uint8_t> bits(box.cells(), 0);
  for (std::size_t j = 0; j < k && j < d.size(); ++j) bits[d[j].second] = 1;
  return bits;
}

// Disc of k cells around the box center, ties by distance then index.
// Signed distance to the zero level line of phi (linear interpolation along
// grid edges), negative where phi < 0; fast sweeping away from the interface.
std::vector<double> redistance(const std::vector<double>& phi, int n, double h) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t N = phi.size();
  std::vector<double> d(N, inf);
  std::vector<std::uint8_t> fixed(N, 0);
  auto at = [n](int a, int b) { return static_cast<std::size_t>(a) * n + b; };
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double p0 = phi[at(a, b)];
      double ax[2] = {inf, inf};
      const int nb[4][3] = {{a - 1, b, 0}, {a + 1, b, 0}, {a, b - 1, 1}, {a, b + 1, 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= n || q[1] >= n) continue;
        const double p1 = phi[at(q[0], q[1])];
        if ((p0 < 0.0) == (p1 < 0.0)) continue;
        ax[q[2]] = std::min(ax[q[2]], h * p0 / (p0 - p1));
      }
      double r = inf;
      if (std::isfinite(ax[0]) && std::isfinite(ax[1])) {
        r = ax[0] * ax[1] / std::max(std::hypot(ax[0], ax[1]), 1e-300);
      } else {
        r = std::min(ax[0], ax[1]);
      }
      if (std::isfinite(r)) {
        d[at(a, b)] = r;
        fixed[at(a, b)] = 1;
      }
    }
  }
  auto update = [&](int a, int b) {
    const std::size_t i = at(a, b);
    if (fixed[i]) return;
    const double x = std::min(a > 0 ? d[at(a - 1, b)] : inf, a + 1 < n ? d[at(a + 1, b)] : inf);
    const double y = std::min(b > 0 ? d[at(a, b - 1)] : inf, b + 1 < n ? d[at(a, b + 1)] : inf);
    double c;
    if (!std::isfinite(x) && !std::isfinite(y)) return;
    if (std::abs(x - y) >= h) {
      c = std::min(x, y) + h;
    } else {
      c = 0.5 * (x + y + std::sqrt(2.0 * h * h - (x - y) * (x - y)));
    }
    d[i] = std::min(d[i], c);
  };
  for (int round = 0; round < 2; ++round) {
    for (int a = 0; a < n; ++a) for (int b = 0; b < n; ++b) update(a, b);
    for (int a = n - 1; a >= 0; --a) for (int b = 0; b < n; ++b) update(a, b);
    for (int a = n - 1; a >= 0; --a) for (int b = n - 1; b >= 0; --b) update(a, b);
    for (int a = 0; a < n; ++a) for (int b = n - 1; b >= 0; --b) update(a, b);
  }
  const double far = 2.0 * n * h;
  for (std::size_t i = 0; i < N; ++i) {
    const double v = std::isfinite(d[i]) ? d[i] : far;
    d[i] = phi[i] < 0.0 ? -v : v;
  }
  return d;
}

struct Objective {
  const MaskEnergy& energy;
  IsoMode mode;
  double volume;
  double mu;
  double penalty(std::size_t count) const {
    if (mode == IsoMode::constrained) return 0.0;
    return mu * std::abs(static_cast<double>(count) * energy.grid().cell_volume() - volume);
  }
};

// Best-improvement local search over swaps (and single flips in penalized mode).
void local_search(const Objective& obj, std::vector<std::uint8_t>& bits, bool all_candidates) {
  const Grid& box = obj.energy.grid();
  const int n = box.n();
  std::size_t count = std::accumulate(bits.begin(), bits.end(), std::size_t{0});
  auto near_boundary = [&](std::size_t i) {
    const int a = static_cast<int>(i / n), b = static_cast<int>(i % n);
    for (int da = -1; da <= 1; ++da) {
      for (int db = -1; db <= 1; ++db) {
        const int x = a + da, y = b + db;
        const int v = (x < 0 || y < 0 || x >= n || y >= n) ? 0 : bits[static_cast<std::size_t>(x) * n + y];
        if (v != bits[i]) return true;
      }
    }
    return false;
  };
  for (int pass = 0; pass < 100000; ++pass) {
    std::vector<std::size_t> ins, outs;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!all_candidates && !near_boundary(i)) continue;
      (bits[i] ? ins : outs).push_back(i);
    }
    double best = -1e-12;
    std::size_t bi = SIZE_MAX, bj = SIZE_MAX;
    const double base_pen = obj.penalty(count);
    if (obj.mode == IsoMode::penalized) {
      for (std::size_t i : ins) {
        const double d = obj.energy.flip_delta(bits, i) + obj.penalty(count - 1) - base_pen;
        if (d < best) { best = d; bi = i; bj = SIZE_MAX; }
      }
      for (std::size_t j : outs) {
        const double d = obj.energy.flip_delta(bits, j) + obj.penalty(count + 1) - base_pen;
        if (d < best) { best = d; bi = SIZE_MAX; bj = j; }
      }
    }
    for (std::size_t i : ins) {
      const double di = obj.energy.flip_delta(bits, i);
      bits[i] = 0;
      for (std::size_t j : outs) {
        const double d = di + obj.energy.flip_delta(bits, j);
        if (d < best) { best = d; bi = i; bj = j; }
      }
      bits[i] = 1;
    }
    if (bi == SIZE_MAX && bj == SIZE_MAX) return;
    if (bi != SIZE_MAX) { bits[bi] = 0; --count; }
    if (bj != SIZE_MAX) { bits[bj] = 1; ++count; }
  }
}

bool lex_less(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  // compare as integers with cell i at bit i
  for (std::size_t i = a.size(); i-- > 0;) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

}  // namespace

IsoResult solve_iso(const PeriodicMetric& m, const IsoParams& params) {
  params.validate();
  if (m.dim() != 2) throw std::invalid_argument("iso: only d = 2 media are supported");
  const Grid& box = params.box;
  const std::size_t N = box.cells();
  const double cv = box.cell_volume();
  const double h = box.h();
  const MaskEnergy energy(m, box, params.period, params.g ? &*params.g : nullptr);
  const Objective obj{energy, params.mode, params.volume, params.mu};

  std::vector<double> gvals(N, 0.0);
  if (params.g) {
    const double mean = std::accumulate(params.g->values.begin(), params.g->values.end(), 0.0) / double(N);
    for (std::size_t i = 0; i < N; ++i) gvals[i] = params.g->values[i] - mean;
  }

  IsoResult res(box);
  const EdgeTV tv(m, box, params.period);
  const std::size_t K = std::min<std::size_t>(N, static_cast<std::size_t>(std::llround(params.volume / cv)));
  std::vector<double> z(tv.edges(), 0.0), w(N), f(N), d(N);

  // The interface is carried at sub-cell resolution (a signed distance, not a
  // mask) so that steps shorter than a cell still accumulate.
  const double radius = std::sqrt(params.volume / std::numbers::pi);
  const Vec centre = box.origin() + vec2(0.5 * box.side(), 0.5 * box.side());

  // Each step minimizes J(F) + (1/t) int_F (d + t g) - lambda |F| for all
  // lambda at once: the minimizers are the sublevel sets of w. Larger steps
  // flatten w over a disc of radius ~ sqrt(6 t) and the volume level then
  // falls on a plateau, so t stays below R^2 / (12 a_max).
  const double t = std::min(params.mm_step * h * radius, radius * radius / (12.0 * m.coefficient_max()));
  SubResult last;
  std::vector<std::size_t> order(N);
  auto sorted_by = [&](const std::vector<double>& u) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  };
  // number of cells in the next set: closest volume, or in penalized mode the
  // sublevel set minimizing surrogate + penalty + (1/t) int_F d (movement term; null when t = 0)
  auto choose_count = [&](const std::vector<double>& u, double step) {
    sorted_by(u);
    auto cut = [&](std::size_t k) { return k == 0 || k == N || u[order[k]] != u[order[k - 1]]; };
    std::size_t best_k = 0;
    if (params.mode == IsoMode::constrained) {
      double best = std::abs(params.volume);
      for (std::size_t k = 1; k <= N; ++k) {
        const double err = std::abs(static_cast<double>(k) * cv - params.volume);
        if (cut(k) && err <= best) {
          best = err;
          best_k = k;
        }
      }
    } else {
      std::vector<std::uint8_t> bits(N, 0);
      double en = 0.0, best = obj.penalty(0);
      for (std::size_t k = 1; k <= N; ++k) {
        en += tv.flip_delta(bits, order[k - 1]) + cv * gvals[order[k - 1]];
        if (step > 0.0) en += cv * d[order[k - 1]] / step;
        bits[order[k - 1]] = 1;
        const double val = en + obj.penalty(k);
        if (cut(k) && val < best) {
          best = val;
          best_k = k;
        }
      }
    }
    return best_k;
  };

  // one flow per elliptic start of volume v; the lowest surrogate objective wins
  std::vector<double> best_d;
  SubResult best_last;
  double best_obj = std::numeric_limits<double>::infinity();
  for (const auto& [aspect, angle] : params.start_shapes) {
    const double c = std::cos(angle * std::numbers::pi / 180.0), sn = std::sin(angle * std::numbers::pi / 180.0);
    const double ra = radius * std::sqrt(aspect), rb = radius / std::sqrt(aspect);
    for (std::size_t i = 0; i < N; ++i) {
      const Vec x = box.cell_center(i) - centre;
      const double u = (c * x[0] + sn * x[1]) / ra, v = (-sn * x[0] + c * x[1]) / rb;
      // first-order distance to the ellipse boundary
      const double q = std::hypot(u, v);
      d[i] = q > 0.0 ? (q - 1.0) * q / std::hypot(u / ra, v / rb) : -std::min(ra, rb);
    }
    for (int outer = 1; outer <= params.max_outer; ++outer) {
      for (std::size_t i = 0; i < N; ++i) f[i] = d[i] + t * gvals[i];
      last = solve_rof(tv, f, t / h, params.inner, z, w);
      res.inner_iters += last.iters;
      ++res.outer_iters;
      const std::size_t k = choose_count(w, t);
      if (k == 0 || k == N) {
        for (std::size_t i = 0; i < N; ++i) d[i] = k == 0 ? h : -h;
        break;
      }
      const double s = 0.5 * (w[order[k - 1]] + w[order[k]]);
      for (std::size_t i = 0; i < N; ++i) f[i] = w[i] - s;
      std::vector<double> next = redistance(f, box.n(), h);
      {
        // shift the interface uniformly to the sub-cell volume of the chosen set
        const double target = static_cast<double>(k) * cv;
        double lo = -h, hi = h;
        for (int it = 0; it < 60; ++it) {
          const double c = 0.5 * (lo + hi);
          double vol = 0.0;
          for (double x : next) vol += std::clamp(0.5 - (x - c) / h, 0.0, 1.0);
          (vol * cv < target ? lo : hi) = c;
        }
        for (double& x : next) x -= 0.5 * (lo + hi);
      }
      double moved = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        if (std::abs(next[i]) < 2.0 * h) moved = std::max(moved, std::abs(next[i] - d[i]));
      }
      d = std::move(next);
      if (moved < params.mm_tol * h) break;
    }

    const std::size_t k = choose_count(d, 0.0);
    std::vector<std::uint8_t> bits(N, 0);
    double val = obj.penalty(k);
    for (std::size_t j = 0; j < k; ++j) {
      bits[order[j]] = 1;
      val += cv * gvals[order[j]];
    }
    val += tv.of_bits(bits);
    if (val < best_obj - 1e-12) {
      best_obj = val;
      best_d = d;
      best_last = last;
    }
  }
  d = std::move(best_d);
  last = best_last;

  const std::size_t k = choose_count(d, 0.0);
  BitMask e(box);
  for (std::size_t j = 0; j < k; ++j) e.set(order[j], true);
  // diffuse indicator of width h around the selected set
  for (std::size_t i = 0; i < N; ++i) res.density[i] = std::clamp(0.5 - d[i] / h, 0.0, 1.0);
  for (std::size_t i = 0; i < N; ++i) {
    if (e[i] && !(res.density[i] > 0.5)) res.density[i] = std::nextafter(0.5, 1.0);
    if (!e[i] && res.density[i] > 0.5) res.density[i] = 0.5;
  }
  res.level = 0.5;

  std::vector<std::uint8_t> best_bits = e.bits;
  double best_val = energy.of_bits(best_bits) + obj.penalty(e.count());
  res.starts = static_cast<int>(params.start_shapes.size());
  if (N <= params.polish_max_cells) {
    std::vector<std::vector<std::uint8_t>> starts{e.bits};
    if (params.mode == IsoMode::constrained) {
      // swaps keep the count, so start from exactly K cells in flow order
      std::fill(starts[0].begin(), starts[0].end(), 0);
      for (std::size_t j = 0; j < K; ++j) starts[0][order[j]] = 1;
    } else {
      starts.emplace_back(N, 0);
      starts.emplace_back(N, 1);
    }
    for (std::size_t i = 0; i < N; ++i) starts.push_back(nearest_cells(box, i, K));
    std::mt19937_64 rng(params.seed);
    for (int s = 0; s < params.random_starts; ++s) {
      std::vector<std::size_t> idx(N);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<std::uint8_t> bits(N, 0);
      for (std::size_t k = 0; k < K; ++k) bits[idx[k]] = 1;
      starts.push_back(bits);
    }
    bool first = true;
    for (auto& bits : starts) {
      local_search(obj, bits, true);
      const double val = energy.of_bits(bits) + obj.penalty(std::accumulate(bits.begin(), bits.end(), std::size_t{0}));
      if (first || val < best_val - 1e-12 || (std::abs(val - best_val) <= 1e-12 && lex_less(bits, best_bits))) {
        best_val = val;
        best_bits = bits;
        first = false;
      }
    }
    res.starts += static_cast<int>(starts.size());
  }
  res.mask.bits = best_bits;
  const std::size_t count = res.mask.count();
  res.volume = static_cast<double>(count) * cv;
  res.energy = energy(res.mask);
  res.objective = res.energy + obj.penalty(count);

  res.surrogate_energy = tv.of_bits(res.mask.bits);
  res.relaxed_energy = tv.value(res.density.values);
  for (std::size_t i = 0; i < N; ++i) {
    res.surrogate_energy += cv * gvals[i] * res.mask[i];
    res.relaxed_energy += cv * gvals[i] * res.density[i];
  }
  res.gap = last.gap;
  res.relative_gap = last.scale > 0.0 ? last.gap / last.scale : 0.0;
  res.certified = last.certified;
  if (count > 0) {
    const DiameterReport d = diameter_report(res.mask);
    res.diameter = d.diameter;
    res.touches_wall = d.touches_wall;
    res.components = d.components;
  }
  return res;
}

IsoResult solve_penalized(const PeriodicMetric& m, IsoParams params) {
  params.mode = IsoMode::penalized;
  return solve_iso(m, params);
}

std::size_t perimeter_cells(const BitMask& e) {
  const int n = e.grid.n();
  std::size_t count = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!e[std::size_t(y) * n + x]) continue;
      const bool interior = x > 0 && y > 0 && x + 1 < n && y + 1 < n && e[std::size_t(y) * n + x - 1] &&
                            e[std::size_t(y) * n + x + 1] && e[std::size_t(y - 1) * n + x] &&
                            e[std::size_t(y + 1) * n + x];
      if (!interior) ++count;
    }
  }
  return count;
}

PenaltySearch find_penalty_threshold(const PeriodicMetric& m, IsoParams params, int max_doublings) {
  params.mode = IsoMode::penalized;
  const double h = params.box.h();
  PenaltySearch out;
  double mu = 1.0 / m.c0();
  std::optional<IsoResult> prev;
  bool prev_close = false;
  for (int k = 0; k <= max_doublings; ++k, mu *= 2.0) {
    params.mu = mu;
    IsoResult r = solve_iso(m, params);
    const bool close = std::abs(r.volume - params.volume) <= h * h * double(perimeter_cells(r.mask));
    const bool same = prev && prev->mask == r.mask;
    out.trials.push_back({mu, r.volume, r.objective, close, same});
    if (close && prev_close && same) {
      out.found = true;
      out.mu = mu / 2.0;
      out.result = std::move(prev);
      return out;
    }
    prev_close = close;
    prev.emplace(std::move(r));
  }
  out.mu = mu / 2.0;
  out.result = std::move(prev);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

BruteForceResult enumerate(const MaskEnergy& energy, int k, const std::function<double(int)>& penalty,
                           BruteForceResult best, bool& have) {
  const Grid& box = energy.grid();
  const int N = static_cast<int>(box.cells());
  std::vector<std::uint8_t> bits(N);
  auto evaluate = [&](std::uint64_t mask) {
    for (int i = 0; i < N; ++i) bits[i] = (mask >> i) & 1u;
    const double val = energy.of_bits(bits) + penalty(k);
    ++best.evaluated;
    std::uint64_t cur = 0;
    for (int i = 0; i < N; ++i) cur |= static_cast<std::uint64_t>(best.mask.bits[i]) << i;
    if (!have || val < best.energy - 1e-12 || (std::abs(val - best.energy) <= 1e-12 && mask < cur)) {
      have = true;
      best.energy = val;
      best.mask.bits = bits;
    }
  };
  if (k == 0) {
    evaluate(0);
    return best;
  }
  // Gosper's hack over k-subsets
  std::uint64_t mask = (std::uint64_t{1} << k) - 1;
  const std::uint64_t limit = std::uint64_t{1} << N;
  while (mask < limit) {
    evaluate(mask);
    const std::uint64_t c = mask & (~mask + 1);
    const std::uint64_t r = mask + c;
    mask = (((r ^ mask) >> 2) / c) | r;
  }
  return best;
}

}  // namespace

BruteForceResult brute_force_iso(const PeriodicMetric& m, const Grid& box, int cells, const ScalarField* g,
                                 double period) {
  if (box.is_torus()) throw std::invalid_argument("brute force: the domain must be a box grid");
  if (box.cells() > 25) throw std::invalid_argument("brute force: at most 25 cells");
  if (cells < 0 || cells > static_cast<int>(box.cells())) throw std::invalid_argument("brute force: bad cell count");
  const MaskEnergy energy(m, box, period, g);
  bool have = false;
  return enumerate(energy, cells, [](int) { return 0.0; }, BruteForceResult{BitMask(box)}, have);
}

BruteForceResult brute_force_penalized(const PeriodicMetric& m, const Grid& box, double volume, double mu,
                                       const ScalarField* g, double period) {
  if (box.is_torus()) throw std::invalid_argument("brute force: the domain must be a box grid");
  if (box.cells() > 25) throw std::invalid_argument("brute force: at most 25 cells");
  const MaskEnergy energy(m, box, period, g);
  const double cv = box.cell_volume();
  auto pen = [&](int k) { return mu * std::abs(k * cv - volume); };
  bool have = false;
  BruteForceResult best{BitMask(box)};
  for (int k = 0; k <= static_cast<int>(box.cells()); ++k) best = enumerate(energy, k, pen, best, have);
  return best;
}

// ---------------------------------------------------------------------------

Shape disc_shape(double radius, int segments) {
  Shape s;
  s.contains = [radius](const Vec& x) { return x[0] * x[0] + x[1] * x[1] <= radius * radius; };
  s.area = std::numbers::pi * radius * radius;
  for (int k = 0; k < segments; ++k) {
    const double t = 2.0 * std::numbers::pi * k / segments;
    s.boundary.push_back(vec2(radius * std::cos(t), radius * std::sin(t)));
  }
  return s;
}

Shape wulff_shape(const WulffShape& w, double lambda) {
  Shape s;
  s.contains = [w, lambda](const Vec& x) { return w.contains((1.0 / lambda) * x, 1e-12); };
  s.area = lambda * lambda * w.area;
  s.centroid = lambda * w.centroid();
  for (const auto& v : w.vertices) s.boundary.push_back(lambda * v);
  return s;
}

namespace {

double point_segment(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm2(p - (a + t * ab));
}

}  // namespace

ShapeMetrics compare_to_shape(const BitMask& e, const Shape& s, int supersample) {
  if (supersample < 1) throw std::invalid_argument("compare_to_shape: supersample must be >= 1");
  const Grid& box = e.grid;
  const int n = box.n();
  const double h = box.h();
  ShapeMetrics out;
  const std::size_t count = e.count();
  if (count == 0) throw std::invalid_argument("compare_to_shape: empty mask");
  Vec c{};
  for (std::size_t i = 0; i < box.cells(); ++i) {
    if (e[i]) c = c + box.cell_center(i);
  }
  c = (1.0 / static_cast<double>(count)) * c;
  out.shift = s.centroid - c;
  out.volume = static_cast<double>(count) * box.cell_volume();

  double overlap = 0.0;
  const double w = 1.0 / (supersample * supersample);
  for (std::size_t i = 0; i < box.cells(); ++i) {
    if (!e[i]) continue;
    const Vec x0 = box.cell_center(i) + out.shift;
    int hits = 0;
    for (int a = 0; a < supersample; ++a) {
      for (int b = 0; b < supersample; ++b) {
        const Vec off = vec2(((a + 0.5) / supersample - 0.5) * h, ((b + 0.5) / supersample - 0.5) * h);
        hits += s.contains(x0 + off) ? 1 : 0;
      }
    }
    overlap += hits * w * box.cell_volume();
  }
  out.symmetric_difference = (out.volume + s.area - 2.0 * overlap) / s.area;

  // boundary edges of the mask, as midpoints shifted by z
  std::vector<Vec> edges;
  auto bit = [&](int a, int b) {
    return a >= 0 && b >= 0 && a < n && b < n && e[static_cast<std::size_t>(a) * n + b];
  };
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (!bit(a, b)) continue;
      const Vec x = box.cell_center(static_cast<std::size_t>(a) * n + b) + out.shift;
      if (!bit(a - 1, b)) edges.push_back(x + vec2(-0.5 * h, 0));
      if (!bit(a + 1, b)) edges.push_back(x + vec2(0.5 * h, 0));
      if (!bit(a, b - 1)) edges.push_back(x + vec2(0, -0.5 * h));
      if (!bit(a, b + 1)) edges.push_back(x + vec2(0, 0.5 * h));
    }
  }
  const auto& poly = s.boundary;
  double d1 = 0.0;
  for (const auto& p : edges) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < poly.size(); ++k) best = std::min(best, point_segment(p, poly[k], poly[(k + 1) % poly.size()]));
    d1 = std::max(d1, best);
  }
  double d2 = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec a = poly[k], b = poly[(k + 1) % poly.size()];
    const int steps = std::max(1, static_cast<int>(std::ceil(norm2(b - a) / (0.25 * h))));
    for (int t = 0; t < steps; ++t) {
      const Vec q = a + (static_cast<double>(t) / steps) * (b - a);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : edges) best = std::min(best, norm2(q - p));
      d2 = std::max(d2, best);
    }
  }
  out.hausdorff = std::max(d1, d2);
  return out;
}

RescaleReport rescale_experiment(const PeriodicMetric& m, const WulffShape& w, const RescaleParams& params,
                                 int workers) {
  if (params.epsilons.empty()) throw std::invalid_argument("rescale: no epsilons");
  if (!(params.lambda > 0.0)) throw std::invalid_argument("rescale: lambda must be positive");
  const Shape target = wulff_shape(w, params.lambda);
  const double side = params.side > 0.0 ? params.side : 6.0 * params.lambda * w.max_radius();
  RescaleReport rep;
  struct Row {
    ShapeMetrics metrics;
    std::optional<BitMask> mask;
  };
  const auto rows = parallel_map<Row>(params.epsilons.size(), workers, [&](std::size_t k) {
    IsoParams ip = params.iso;
    ip.box = Grid::box(params.n, side, vec2(-0.5 * side, -0.5 * side));
    ip.volume = target.area;
    ip.period = params.epsilons[k];
    ip.inner.tau = ip.inner.sigma = -1.0;
    IsoResult r = solve_iso(m, ip);
    Row row{compare_to_shape(r.mask, target), std::move(r.mask)};
    row.metrics.epsilon = params.epsilons[k];
    row.metrics.energy = r.energy;
    row.metrics.touches_wall = r.touches_wall;
    row.metrics.certified = r.certified;
    return row;
  });
  for (const auto& row : rows) {
    rep.rows.push_back(row.metrics);
    rep.masks.push_back(*row.mask);
  }
  rep.non_increasing = true;
  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    if (rep.rows[k].symmetric_difference > (1.0 + params.slack) * rep.rows[k - 1].symmetric_difference) {
      rep.non_increasing = false;
    }
  }
  return rep;
}

}  // namespace stablenorm
