#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stablenorm/vec.hpp"

namespace stablenorm {

enum class Topology { torus, box };

/// Uniform rectangular grid, either the unit torus R^d/Z^d or a box with a
/// zero exterior.
///
/// Cell i covers origin + [i h, (i+1) h) and is addressed by a row-major flat
/// index (last axis fastest). Gradients live on the "flux lattice": the cells
/// themselves on the torus, and cells -1..n-1 per axis on a box so that every
/// wall crossing is charged.
class Grid {
 public:
  static Grid torus(int dim, int n);
  /// Square box of `n` cells per side and physical side length `side`, lower corner at `origin`.
  static Grid box(int n, double side, Vec origin = {});

  Topology topology() const { return topology_; }
  bool is_torus() const { return topology_ == Topology::torus; }
  int dim() const { return dim_; }
  int n() const { return n_; }
  double side() const { return side_; }
  double h() const { return side_ / n_; }
  double cell_volume() const;
  const Vec& origin() const { return origin_; }

  std::size_t cells() const { return cells_; }
  int flux_n() const { return is_torus() ? n_ : n_ + 1; }
  std::size_t flux_cells() const { return flux_cells_; }

  std::array<int, 3> unravel(std::size_t i) const;
  std::size_t ravel(const std::array<int, 3>& idx) const;
  /// Physical center of cell i; coordinates are (2 i + 1) side / (2 n).
  Vec cell_center(std::size_t i) const;
  /// Physical center of flux cell j (on a box, flux index j maps to cell j - 1).
  Vec flux_center(std::size_t j) const;

  bool operator==(const Grid& other) const = default;

 private:
  Grid(Topology t, int dim, int n, double side, Vec origin);

  Topology topology_ = Topology::torus;
  int dim_ = 2;
  int n_ = 4;
  double side_ = 1.0;
  Vec origin_{};
  std::size_t cells_ = 0;
  std::size_t flux_cells_ = 0;
};

struct ScalarField {
  Grid grid;
  std::vector<double> values;

  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.cells(), fill) {}
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// d components per flux cell, stored component-major: values[k * flux_cells + j].
struct VectorField {
  Grid grid;
  std::vector<double> values;

  explicit VectorField(const Grid& g, double fill = 0.0)
      : grid(g), values(g.flux_cells() * static_cast<std::size_t>(g.dim()), fill) {}
  std::span<double> component(int k) { return {values.data() + k * grid.flux_cells(), grid.flux_cells()}; }
  std::span<const double> component(int k) const {
    return {values.data() + k * grid.flux_cells(), grid.flux_cells()};
  }
  Vec at(std::size_t j) const;
  void set(std::size_t j, const Vec& v);
};

struct BitMask {
  Grid grid;
  std::vector<std::uint8_t> bits;

  explicit BitMask(const Grid& g, bool fill = false) : grid(g), bits(g.cells(), fill ? 1 : 0) {}
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  void set(std::size_t i, bool v) { bits[i] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BitMask& other) const = default;
};

// Raw kernels on flat arrays. `v` has grid.cells() entries; `z` holds
// dim * grid.flux_cells() entries, component-major.
void gradient_into(const Grid& g, std::span<const double> v, std::span<double> z);
void divergence_into(const Grid& g, std::span<const double> z, std::span<double> v);

/// Forward differences (v(i+e_k) - v(i)) / h, periodic wrap on the torus, zero exterior on a box.
VectorField gradient(const ScalarField& v);
/// Negative adjoint of `gradient` for the h^d-weighted inner products (backward differences).
ScalarField divergence(const VectorField& z);
/// Cells with u(i) > s.
BitMask extract_levelset(const ScalarField& u, double s);

double inner(const ScalarField& a, const ScalarField& b);
double inner(const VectorField& a, const VectorField& b);
/// h^d-weighted 2-norm.
double weighted_norm(std::span<const double> values, const Grid& g);

/// Upper bound on the squared operator norm of `gradient`: 4 d / h^2.
double gradient_norm_bound_sq(const Grid& g);

/// Throws std::runtime_error naming `stage` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& stage);

}  // namespace stablenorm
