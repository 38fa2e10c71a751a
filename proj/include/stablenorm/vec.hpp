#pragma once

#include <array>
#include <cmath>

namespace stablenorm {

// Points and directions in R^d, d <= 3. Unused trailing components are zero,
// which every norm in this library treats as absent.
using Vec = std::array<double, 3>;

inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec vec2(double x, double y) { return {x, y, 0.0}; }

}  // namespace stablenorm
