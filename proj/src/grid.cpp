#include "stablenorm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stablenorm {

namespace {

std::size_t ipow(int base, int e) {
  std::size_t r = 1;
  for (int k = 0; k < e; ++k) r *= static_cast<std::size_t>(base);
  return r;
}

}  // namespace

Grid::Grid(Topology t, int dim, int n, double side, Vec origin)
    : topology_(t), dim_(dim), n_(n), side_(side), origin_(origin) {
  cells_ = ipow(n_, dim_);
  flux_cells_ = ipow(flux_n(), dim_);
}

Grid Grid::torus(int dim, int n) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("torus grid: dim must be 2 or 3");
  if (n < 4) throw std::invalid_argument("torus grid: n must be >= 4");
  return Grid(Topology::torus, dim, n, 1.0, {});
}

Grid Grid::box(int n, double side, Vec origin) {
  if (n < 1) throw std::invalid_argument("box grid: n must be >= 1");
  if (!(side > 0.0) || !std::isfinite(side)) throw std::invalid_argument("box grid: side must be positive");
  return Grid(Topology::box, 2, n, side, origin);
}

double Grid::cell_volume() const { return std::pow(h(), dim_); }

std::array<int, 3> Grid::unravel(std::size_t i) const {
  std::array<int, 3> idx{0, 0, 0};
  for (int k = dim_ - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(i % n_);
    i /= n_;
  }
  return idx;
}

std::size_t Grid::ravel(const std::array<int, 3>& idx) const {
  std::size_t i = 0;
  for (int k = 0; k < dim_; ++k) i = i * n_ + idx[k];
  return i;
}

Vec Grid::cell_center(std::size_t i) const {
  const auto idx = unravel(i);
  Vec x{};
  for (int k = 0; k < dim_; ++k) x[k] = origin_[k] + (2.0 * idx[k] + 1.0) * side_ / (2.0 * n_);
  return x;
}

Vec Grid::flux_center(std::size_t j) const {
  if (is_torus()) return cell_center(j);
  const int fn = flux_n();
  Vec x{};
  for (int k = dim_ - 1; k >= 0; --k) {
    const int c = static_cast<int>(j % fn) - 1;
    j /= fn;
    x[k] = origin_[k] + (2.0 * c + 1.0) * side_ / (2.0 * n_);
  }
  return x;
}

Vec VectorField::at(std::size_t j) const {
  Vec v{};
  for (int k = 0; k < grid.dim(); ++k) v[k] = values[k * grid.flux_cells() + j];
  return v;
}

void VectorField::set(std::size_t j, const Vec& v) {
  for (int k = 0; k < grid.dim(); ++k) values[k * grid.flux_cells() + j] = v[k];
}

std::size_t BitMask::count() const { return std::accumulate(bits.begin(), bits.end(), std::size_t{0}); }

// ---------------------------------------------------------------------------
// Kernels. On the torus each axis is processed as a set of lines of length n
// with stride n^(d-1-k); on the box (d = 2) the flux lattice is (n+1)^2 with
// offset one.

void gradient_into(const Grid& g, std::span<const double> v, std::span<double> z) {
  const int n = g.n();
  const double inv_h = 1.0 / g.h();
  if (g.is_torus()) {
    const std::size_t cells = g.cells();
    for (int k = 0; k < g.dim(); ++k) {
      double* out = z.data() + k * cells;
      const std::size_t stride = ipow(n, g.dim() - 1 - k);
      const std::size_t outer = cells / (stride * n);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t r = 0; r < stride; ++r) {
          const std::size_t base = o * stride * n + r;
          for (int m = 0; m < n - 1; ++m) {
            const std::size_t i = base + m * stride;
            out[i] = (v[i + stride] - v[i]) * inv_h;
          }
          const std::size_t last = base + (n - 1) * stride;
          out[last] = (v[base] - v[last]) * inv_h;
        }
      }
    }
    return;
  }
  const int fn = n + 1;
  const std::size_t fc = g.flux_cells();
  auto val = [&](int a, int b) -> double {
    return (a < 0 || b < 0 || a >= n || b >= n) ? 0.0 : v[static_cast<std::size_t>(a) * n + b];
  };
  for (int ja = 0; ja < fn; ++ja) {
    for (int jb = 0; jb < fn; ++jb) {
      const int a = ja - 1, b = jb - 1;
      const std::size_t j = static_cast<std::size_t>(ja) * fn + jb;
      const double c = val(a, b);
      z[j] = (val(a + 1, b) - c) * inv_h;
      z[fc + j] = (val(a, b + 1) - c) * inv_h;
    }
  }
}

void divergence_into(const Grid& g, std::span<const double> z, std::span<double> v) {
  const int n = g.n();
  const double inv_h = 1.0 / g.h();
  if (g.is_torus()) {
    const std::size_t cells = g.cells();
    std::fill(v.begin(), v.end(), 0.0);
    for (int k = 0; k < g.dim(); ++k) {
      const double* zk = z.data() + k * cells;
      const std::size_t stride = ipow(n, g.dim() - 1 - k);
      const std::size_t outer = cells / (stride * n);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t r = 0; r < stride; ++r) {
          const std::size_t base = o * stride * n + r;
          const std::size_t last = base + (n - 1) * stride;
          v[base] += (zk[base] - zk[last]) * inv_h;
          for (int m = 1; m < n; ++m) {
            const std::size_t i = base + m * stride;
            v[i] += (zk[i] - zk[i - stride]) * inv_h;
          }
        }
      }
    }
    return;
  }
  const int fn = n + 1;
  const std::size_t fc = g.flux_cells();
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const std::size_t j = static_cast<std::size_t>(a + 1) * fn + (b + 1);
      v[static_cast<std::size_t>(a) * n + b] = (z[j] - z[j - fn] + z[fc + j] - z[fc + j - 1]) * inv_h;
    }
  }
}

VectorField gradient(const ScalarField& v) {
  VectorField z(v.grid);
  gradient_into(v.grid, v.values, z.values);
  return z;
}

ScalarField divergence(const VectorField& z) {
  ScalarField v(z.grid);
  divergence_into(z.grid, z.values, v.values);
  return v;
}

BitMask extract_levelset(const ScalarField& u, double s) {
  BitMask m(u.grid);
  for (std::size_t i = 0; i < u.values.size(); ++i) m.bits[i] = u.values[i] > s ? 1 : 0;
  return m;
}

double inner(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("inner: grid mismatch");
  return a.grid.cell_volume() * std::inner_product(a.values.begin(), a.values.end(), b.values.begin(), 0.0);
}

double inner(const VectorField& a, const VectorField& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("inner: grid mismatch");
  return a.grid.cell_volume() * std::inner_product(a.values.begin(), a.values.end(), b.values.begin(), 0.0);
}

double weighted_norm(std::span<const double> values, const Grid& g) {
  double s = 0.0;
  for (double x : values) s += x * x;
  return std::sqrt(g.cell_volume() * s);
}

double gradient_norm_bound_sq(const Grid& g) { return 4.0 * g.dim() / (g.h() * g.h()); }

void require_finite(std::span<const double> values, const std::string& stage) {
  for (double x : values) {
    if (!std::isfinite(x)) throw std::runtime_error("non-finite value detected after " + stage);
  }
}

}  // namespace stablenorm
