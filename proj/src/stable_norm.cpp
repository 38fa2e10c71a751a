#include "stablenorm/stable_norm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stablenorm/parallel.hpp"

namespace stablenorm {

bool FanResult::all_certified() const {
  return std::all_of(samples.begin(), samples.end(), [](const FanSample& s) { return s.certified; });
}

std::vector<Vec> equiangular_directions(int count, double offset) {
  if (count < 1) throw std::invalid_argument("equiangular_directions: count must be positive");
  std::vector<Vec> dirs;
  for (int k = 0; k < count; ++k) {
    const double t = offset + 2.0 * std::numbers::pi * k / count;
    dirs.push_back(vec2(std::cos(t), std::sin(t)));
  }
  return dirs;
}

FanResult sample_fan(const PeriodicMetric& m, const Grid& g, const std::vector<Vec>& directions,
                     const SolverParams& params, int workers) {
  for (const auto& d : directions) {
    if (!(norm2(d) > 0.0)) throw std::invalid_argument("sample_fan: directions must be nonzero");
  }
  FanResult fan;
  fan.samples = parallel_map<FanSample>(directions.size(), workers, [&](std::size_t i) {
    const Vec p = (1.0 / norm2(directions[i])) * directions[i];
    const CellSolution sol = solve_cell(m, g, p, params);
    FanSample s;
    s.direction = p;
    s.phi = sol.primal;
    s.dual = sol.dual;
    s.gap = sol.gap;
    s.complementarity = sol.complementarity_bound();
    s.subgradient = subgradient_estimate(sol).value;
    s.certified = sol.certified;
    s.iters = sol.iters + sol.coarse_iters;
    return s;
  });
  return fan;
}

// ---------------------------------------------------------------------------

LayerProfile LayerProfile::from_metric(const PeriodicMetric& m) {
  const auto& s = m.spec();
  if (s.kind != MediumKind::laminate) throw std::invalid_argument("layer profile: medium is not a laminate");
  if (s.base.kind != BaseNormKind::euclidean) throw std::invalid_argument("layer profile: base norm must be euclidean");
  return LayerProfile{{s.theta, 1.0 - s.theta}, {s.a_low, s.a_high}};
}

double LayerProfile::min() const { return *std::min_element(values.begin(), values.end()); }

double LayerProfile::chord_integral(double c) const {
  double sum = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    sum += widths[k] * std::sqrt(std::max(0.0, values[k] * values[k] - c * c));
  }
  return sum;
}

LaminateOracle laminate_oracle(const LayerProfile& profile, const Vec& p, int axis) {
  if (profile.values.empty() || profile.values.size() != profile.widths.size()) {
    throw std::invalid_argument("laminate oracle: widths and values must be nonempty and of equal length");
  }
  const double lo = profile.min();
  if (!(lo > 0.0)) throw std::invalid_argument("laminate oracle: min a must be positive");
  const double total = std::accumulate(profile.widths.begin(), profile.widths.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("laminate oracle: widths must sum to 1");

  const double pn = p[axis];
  const double pt = std::sqrt(std::max(0.0, dot(p, p) - pn * pn));
  auto f = [&](double c) { return pn * c + pt * profile.chord_integral(c); };

  // f is concave on [-lo, lo]
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = -lo, b = lo;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 1e-12) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    }
  }
  LaminateOracle out;
  out.c_opt = 0.5 * (a + b);
  out.phi = f(out.c_opt);
  for (double c : {-lo, lo}) {
    if (f(c) > out.phi) {
      out.phi = f(c);
      out.c_opt = c;
    }
  }
  out.facet_opening = 2.0 * profile.chord_integral(lo);
  return out;
}

// ---------------------------------------------------------------------------

SolveValue solve_value(const PeriodicMetric& m, const Grid& g, const Vec& p, const SolverParams& params) {
  const CellSolution sol = solve_cell(m, g, p, params);
  return {sol.primal, std::max(sol.gap, 0.0) + sol.v_norm * sol.div_residual, sol.certified};
}

DerivativeEstimate directional_derivative(const PeriodicMetric& m, const Grid& g, const Vec& p, const Vec& q,
                                          const SolverParams& params, double t0) {
  if (!(norm2(p) > 0.0)) throw std::invalid_argument("directional_derivative: p must be nonzero");
  return directional_derivative(m, g, p, q, params, solve_value(m, g, p, params), t0);
}

DerivativeEstimate directional_derivative(const PeriodicMetric& m, const Grid& g, const Vec& p, const Vec& q,
                                          const SolverParams& params, const SolveValue& at_p, double t0) {
  if (!(norm2(p) > 0.0)) throw std::invalid_argument("directional_derivative: p must be nonzero");
  if (!(norm2(q) > 0.0)) throw std::invalid_argument("directional_derivative: q must be nonzero");
  if (!(t0 > 0.0)) throw std::invalid_argument("directional_derivative: t0 must be positive");
  DerivativeEstimate est;
  std::array<double, 3> u{};
  bool ok = at_p.certified;
  for (int j = 0; j < 3; ++j) {
    const double t = t0 / (1 << j);
    const SolveValue s = solve_value(m, g, p + t * q, params);
    ok = ok && s.certified;
    est.quotients[j] = (s.phi - at_p.phi) / t;
    u[j] = (s.error + at_p.error) / t;
  }
  const auto& D = est.quotients;
  const double first = 2.0 * D[2] - D[1];
  est.value = (8.0 * D[2] - 6.0 * D[1] + D[0]) / 3.0;
  est.correction = std::abs(est.value - first);
  est.uncertainty = (8.0 * u[2] + 6.0 * u[1] + u[0]) / 3.0;
  est.error_bar = std::max(est.correction, est.uncertainty);
  est.certified = ok;
  return est;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kink: return "kink";
    case Verdict::smooth: return "smooth";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

std::vector<std::array<int, 3>> orthogonal_probes(const std::array<int, 3>& p, int dim, int q_max) {
  std::vector<std::array<int, 3>> out;
  const int hi = q_max;
  const int lo3 = dim == 3 ? -hi : 0, hi3 = dim == 3 ? hi : 0;
  for (int a = -hi; a <= hi; ++a) {
    for (int b = -hi; b <= hi; ++b) {
      for (int c = lo3; c <= hi3; ++c) {
        const std::array<int, 3> q{a, b, c};
        if (a == 0 && b == 0 && c == 0) continue;
        if (a * p[0] + b * p[1] + c * p[2] != 0) continue;
        if (a * a + b * b + c * c > q_max * q_max) continue;
        if (std::gcd(std::gcd(std::abs(a), std::abs(b)), std::abs(c)) != 1) continue;
        const int lead = a != 0 ? a : (b != 0 ? b : c);
        if (lead < 0) continue;
        out.push_back(q);
      }
    }
  }
  return out;
}

int integer_rank(const std::vector<std::array<int, 3>>& vs) {
  std::vector<std::array<double, 3>> rows;
  for (const auto& v : vs) rows.push_back({double(v[0]), double(v[1]), double(v[2])});
  int rank = 0;
  for (int col = 0; col < 3 && rank < static_cast<int>(rows.size()); ++col) {
    int piv = -1;
    double best = 1e-9;
    for (int r = rank; r < static_cast<int>(rows.size()); ++r) {
      if (std::abs(rows[r][col]) > best) {
        best = std::abs(rows[r][col]);
        piv = r;
      }
    }
    if (piv < 0) continue;
    std::swap(rows[rank], rows[piv]);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      if (r == rank) continue;
      const double f = rows[r][col] / rows[rank][col];
      for (int k = 0; k < 3; ++k) rows[r][k] -= f * rows[rank][k];
    }
    ++rank;
  }
  return rank;
}

FacetReport facet_probe(const PeriodicMetric& m, const Grid& g, const std::array<int, 3>& p,
                        const SolverParams& params, const FacetParams& fp) {
  if (p[0] == 0 && p[1] == 0 && p[2] == 0) throw std::invalid_argument("facet_probe: p must be nonzero");
  if (g.dim() == 2 && p[2] != 0) throw std::invalid_argument("facet_probe: p has a third component on a 2D grid");
  FacetReport rep;
  rep.p = p;
  rep.delta_facet = fp.delta_facet;
  const Vec pv{double(p[0]), double(p[1]), double(p[2])};
  const SolveValue at_p = solve_value(m, g, pv, params);
  rep.certified = at_p.certified;
  std::vector<std::array<int, 3>> kinks;
  for (const auto& q : orthogonal_probes(p, g.dim(), fp.q_max)) {
    const Vec qv{double(q[0]), double(q[1]), double(q[2])};
    FacetProbe pr;
    pr.q = q;
    pr.plus = directional_derivative(m, g, pv, qv, params, at_p, fp.t0);
    pr.minus = directional_derivative(m, g, pv, -1.0 * qv, params, at_p, fp.t0);
    pr.opening = pr.plus.value + pr.minus.value;
    pr.error_bar = pr.plus.error_bar + pr.minus.error_bar;
    pr.threshold = std::max(fp.delta_facet, 3.0 * pr.error_bar);
    const bool ok = pr.plus.certified && pr.minus.certified;
    if (!ok) {
      pr.verdict = Verdict::inconclusive;
    } else if (pr.opening > pr.threshold) {
      pr.verdict = Verdict::kink;
      kinks.push_back(q);
    } else if (pr.opening < fp.delta_facet && 3.0 * pr.error_bar < fp.delta_facet) {
      pr.verdict = Verdict::smooth;
    } else {
      pr.verdict = Verdict::inconclusive;
    }
    rep.certified = rep.certified && ok;
    rep.probes.push_back(pr);
  }
  rep.subgradient_dim = integer_rank(kinks);
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<Vec, Vec>> convexity_pairs(int count, double min_angle_deg) {
  std::vector<std::pair<Vec, Vec>> out;
  const double deg = std::numbers::pi / 180.0;
  const double span = 180.0 - 2.0 * min_angle_deg;
  for (int k = 0; k < count; ++k) {
    const double t1 = (3.0 + 360.0 * k / count) * deg;
    const double gap = count > 1 ? min_angle_deg + span * k / (count - 1) : min_angle_deg;
    const double t2 = t1 + gap * deg;
    out.emplace_back(vec2(std::cos(t1), std::sin(t1)), vec2(std::cos(t2), std::sin(t2)));
  }
  return out;
}

ConvexityReport strict_convexity_scan(const PeriodicMetric& m, const Grid& g, const FanResult& fan,
                                      const std::vector<std::pair<Vec, Vec>>& pairs, const SolverParams& params,
                                      int workers) {
  auto lookup = [&](const Vec& p, bool& cert) {
    for (const auto& s : fan.samples) {
      if (s.direction == p) {
        cert = s.certified;
        return s.phi;
      }
    }
    const SolveValue v = solve_value(m, g, p, params);
    cert = v.certified;
    return v.phi;
  };
  ConvexityReport rep;
  rep.pairs = parallel_map<ConvexityPair>(pairs.size(), workers, [&](std::size_t i) {
    ConvexityPair c;
    c.p1 = pairs[i].first;
    c.p2 = pairs[i].second;
    const double cosang = std::clamp(dot(c.p1, c.p2) / (norm2(c.p1) * norm2(c.p2)), -1.0, 1.0);
    c.angle_deg = std::acos(cosang) * 180.0 / std::numbers::pi;
    c.parallel = std::abs(cosang - 1.0) < 1e-12;
    bool c1 = false, c2 = false;
    c.phi1 = lookup(c.p1, c1);
    c.phi2 = lookup(c.p2, c2);
    const SolveValue s12 = solve_value(m, g, c.p1 + c.p2, params);
    c.phi12 = s12.phi;
    c.certified = c1 && c2 && s12.certified;
    c.slack = c.phi1 + c.phi2 - c.phi12;
    c.tolerance = params.tol_gap * std::max({c.phi1, c.phi2, c.phi12});
    c.pass = c.certified && (c.parallel ? std::abs(c.slack) <= 2.0 * c.tolerance : c.slack > 3.0 * c.tolerance);
    return c;
  });
  rep.min_slack_nonparallel = std::numeric_limits<double>::infinity();
  rep.all_pass = true;
  for (const auto& c : rep.pairs) {
    if (!c.parallel) rep.min_slack_nonparallel = std::min(rep.min_slack_nonparallel, c.slack);
    rep.all_pass = rep.all_pass && c.pass;
  }
  return rep;
}

// ---------------------------------------------------------------------------

bool WulffShape::contains(const Vec& x, double slack) const {
  for (const auto& [nu, phi] : support) {
    if (dot(x, nu) > phi + slack) return false;
  }
  return true;
}

double WulffShape::support_value(const Vec& nu) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& v : vertices) best = std::max(best, dot(v, nu));
  return best;
}

Vec WulffShape::centroid() const {
  double cx = 0.0, cy = 0.0, a2 = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Vec& p = vertices[i];
    const Vec& q = vertices[(i + 1) % vertices.size()];
    const double cr = p[0] * q[1] - q[0] * p[1];
    a2 += cr;
    cx += (p[0] + q[0]) * cr;
    cy += (p[1] + q[1]) * cr;
  }
  return vec2(cx / (3.0 * a2), cy / (3.0 * a2));
}

double WulffShape::min_radius() const {
  double r = std::numeric_limits<double>::infinity();
  for (int k : active) r = std::min(r, support[k].second);
  return r;
}

double WulffShape::max_radius() const {
  double r = 0.0;
  for (const auto& v : vertices) r = std::max(r, norm2(v));
  return r;
}

WulffShape build_wulff(const FanResult& fan) {
  if (fan.samples.size() < 16) throw std::invalid_argument("build_wulff: need at least 16 fan directions");
  if (!fan.all_certified()) throw std::invalid_argument("build_wulff: fan contains uncertified samples");
  std::vector<std::pair<Vec, double>> support;
  for (const auto& s : fan.samples) support.emplace_back(s.direction, s.phi);
  return build_wulff(support);
}

WulffShape build_wulff(const std::vector<std::pair<Vec, double>>& raw) {
  WulffShape w;
  for (const auto& [nu, phi] : raw) {
    const double len = norm2(nu);
    if (!(len > 0.0) || !(phi > 0.0)) throw std::invalid_argument("build_wulff: support samples must be positive");
    w.support.emplace_back((1.0 / len) * nu, phi / len);
  }
  std::vector<int> order(w.support.size());
  std::iota(order.begin(), order.end(), 0);
  auto angle = [&](int k) { return std::atan2(w.support[k].first[1], w.support[k].first[0]); };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return angle(a) < angle(b); });

  // Clip a large square by each half-plane in angular order.
  double big = 0.0;
  for (const auto& s : w.support) big = std::max(big, s.second);
  big *= 1e3;
  struct V {
    Vec x;
    int edge;  // half-plane that produced the edge leaving this vertex, -1 for the bounding box
  };
  std::vector<V> poly{{vec2(-big, -big), -1}, {vec2(big, -big), -1}, {vec2(big, big), -1}, {vec2(-big, big), -1}};
  for (int k : order) {
    const auto& [nu, phi] = w.support[k];
    std::vector<V> next;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const V& a = poly[i];
      const V& b = poly[(i + 1) % n];
      const double fa = dot(a.x, nu) - phi, fb = dot(b.x, nu) - phi;
      if (fa <= 0.0) next.push_back(a);
      if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
        const double t = fa / (fa - fb);
        const Vec x = a.x + t * (b.x - a.x);
        // entering the half-plane keeps the old edge label, leaving starts the new edge
        next.push_back({x, fa > 0.0 ? a.edge : k});
      } else if (fa <= 0.0 && fb > 0.0) {
        next.back().edge = k;
      }
    }
    poly = std::move(next);
    if (poly.empty()) throw std::runtime_error("build_wulff: empty intersection");
  }
  // drop zero-length edges
  std::vector<V> clean;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const V& b = poly[(i + 1) % poly.size()];
    if (norm2(poly[i].x - b.x) > 1e-14 * big) clean.push_back(poly[i]);
  }
  for (const auto& v : clean) {
    if (v.edge < 0) throw std::runtime_error("build_wulff: support samples do not bound a polygon");
    w.vertices.push_back(v.x);
    w.active.push_back(v.edge);
  }
  std::vector<int> distinct(w.active);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw std::runtime_error("build_wulff: fewer than 3 active half-planes");
  double a2 = 0.0;
  for (std::size_t i = 0; i < w.vertices.size(); ++i) {
    const Vec& p = w.vertices[i];
    const Vec& q = w.vertices[(i + 1) % w.vertices.size()];
    a2 += p[0] * q[1] - q[0] * p[1];
  }
  w.area = 0.5 * a2;
  return w;
}

}  // namespace stablenorm
