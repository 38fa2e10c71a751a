#include "stablenorm/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace stablenorm::io {

namespace {

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw SchemaError(where + ": unknown key '" + k + "'");
  }
}

double number(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw SchemaError(where + "." + key + ": expected a number");
  return j[key].get<double>();
}

int integer(const json& j, const char* key, int fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw SchemaError(where + "." + key + ": expected an integer");
  return j[key].get<int>();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t k = line.find(sep, start);
    out.push_back(line.substr(start, k - start));
    if (k == std::string::npos) break;
    start = k + 1;
  }
  return out;
}

json vec_json(const Vec& v, int dim) {
  json a = json::array();
  for (int k = 0; k < dim; ++k) a.push_back(v[k]);
  return a;
}

json int3_json(const std::array<int, 3>& v, int dim) {
  json a = json::array();
  for (int k = 0; k < dim; ++k) a.push_back(v[k]);
  return a;
}

json derivative_json(const DerivativeEstimate& d) {
  return {{"value", d.value},
          {"error_bar", d.error_bar},
          {"correction", d.correction},
          {"uncertainty", d.uncertainty},
          {"quotients", d.quotients},
          {"certified", d.certified}};
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double x = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  const auto r = std::from_chars(first, last, x);
  if (r.ec != std::errc() || r.ptr != last) throw SchemaError("not a number: '" + s + "'");
  return x;
}

// ---------------------------------------------------------------------------

json medium_to_json(const MediumSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["base_norm"] = to_string(s.base.kind);
  if (s.base.kind == BaseNormKind::ellipse) j["axes"] = vec_json(s.base.axes, s.dim);
  if (s.dim != 2) j["dim"] = s.dim;
  json p = json::object();
  switch (s.kind) {
    case MediumKind::homogeneous: p["a"] = s.a; break;
    case MediumKind::laminate:
      p = {{"a_low", s.a_low}, {"a_high", s.a_high}, {"theta", s.theta}, {"axis", s.axis}};
      break;
    case MediumKind::checkerboard_smoothed:
      p = {{"a_low", s.a_low}, {"a_high", s.a_high}, {"width", s.width}};
      break;
    case MediumKind::smooth_trig: p = {{"mean", s.mean}, {"amplitude", s.amplitude}}; break;
    case MediumKind::sampled: p = {{"n", s.sample_n}, {"values", s.samples}}; break;
  }
  j["params"] = p;
  return j;
}

MediumSpec medium_from_json(const json& j, const std::filesystem::path& base_dir) {
  const std::string where = "medium";
  only_keys(j, {"kind", "base_norm", "axes", "dim", "params"}, where);
  if (!j.contains("kind") || !j["kind"].is_string()) throw SchemaError(where + ".kind: required string");
  MediumSpec s;
  try {
    s.kind = medium_kind_from_string(j["kind"].get<std::string>());
    if (j.contains("base_norm")) {
      if (!j["base_norm"].is_string()) throw SchemaError(where + ".base_norm: expected a string");
      s.base.kind = base_norm_from_string(j["base_norm"].get<std::string>());
    }
  } catch (const std::invalid_argument& e) {
    throw SchemaError(where + ": " + e.what());
  }
  s.dim = integer(j, "dim", 2, where);
  if (j.contains("axes")) {
    if (s.base.kind != BaseNormKind::ellipse) throw SchemaError(where + ".axes: only valid for the ellipse base");
    const json& a = j["axes"];
    if (!a.is_array() || static_cast<int>(a.size()) != s.dim) throw SchemaError(where + ".axes: expected dim numbers");
    for (int k = 0; k < s.dim; ++k) {
      if (!a[k].is_number()) throw SchemaError(where + ".axes: expected numbers");
      s.base.axes[k] = a[k].get<double>();
    }
  }
  const json p = j.contains("params") ? j["params"] : json::object();
  const std::string pw = where + ".params";
  switch (s.kind) {
    case MediumKind::homogeneous:
      only_keys(p, {"a"}, pw);
      s.a = number(p, "a", 1.0, pw);
      break;
    case MediumKind::laminate:
      only_keys(p, {"a_low", "a_high", "theta", "axis"}, pw);
      s.a_low = number(p, "a_low", s.a_low, pw);
      s.a_high = number(p, "a_high", s.a_high, pw);
      s.theta = number(p, "theta", s.theta, pw);
      s.axis = integer(p, "axis", s.axis, pw);
      break;
    case MediumKind::checkerboard_smoothed:
      only_keys(p, {"a_low", "a_high", "width"}, pw);
      s.a_low = number(p, "a_low", s.a_low, pw);
      s.a_high = number(p, "a_high", s.a_high, pw);
      s.width = number(p, "width", s.width, pw);
      break;
    case MediumKind::smooth_trig:
      only_keys(p, {"mean", "amplitude"}, pw);
      s.mean = number(p, "mean", s.mean, pw);
      s.amplitude = number(p, "amplitude", s.amplitude, pw);
      break;
    case MediumKind::sampled: {
      only_keys(p, {"n", "values", "csv"}, pw);
      if (p.contains("values") == p.contains("csv")) throw SchemaError(pw + ": give exactly one of values, csv");
      if (p.contains("values")) {
        if (!p["values"].is_array()) throw SchemaError(pw + ".values: expected an array");
        for (const auto& v : p["values"]) {
          if (!v.is_number()) throw SchemaError(pw + ".values: expected numbers");
          s.samples.push_back(v.get<double>());
        }
      } else {
        if (!p["csv"].is_string()) throw SchemaError(pw + ".csv: expected a path");
        std::filesystem::path path = p["csv"].get<std::string>();
        if (path.is_relative()) path = base_dir / path;
        s.samples = read_sampled_csv(path);
      }
      const int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(s.samples.size()))));
      s.sample_n = integer(p, "n", n, pw);
      if (static_cast<std::size_t>(s.sample_n) * s.sample_n != s.samples.size()) {
        throw SchemaError(pw + ": expected n*n sample values");
      }
      break;
    }
  }
  try {
    PeriodicMetric check(s);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return s;
}

void write_sampled_csv(const std::filesystem::path& path, const std::vector<double>& values) {
  std::string out = "a\n";
  for (double v : values) out += format_double(v) + "\n";
  atomic_write(path, out);
}

std::vector<double> read_sampled_csv(const std::filesystem::path& path) {
  const auto lines = split_lines(read_text(path));
  if (lines.empty() || lines[0] != "a") throw SchemaError(path.string() + ": expected header 'a'");
  std::vector<double> out;
  for (std::size_t k = 1; k < lines.size(); ++k) out.push_back(parse_double(lines[k]));
  return out;
}

// ---------------------------------------------------------------------------

json grid_to_json(const Grid& g) {
  return {{"topology", g.is_torus() ? "torus" : "box"},
          {"dim", g.dim()},
          {"n", g.n()},
          {"side", g.side()},
          {"origin", vec_json(g.origin(), g.dim())}};
}

Grid grid_from_json(const json& j) {
  only_keys(j, {"topology", "dim", "n", "side", "origin"}, "grid");
  const std::string topo = j.value("topology", "");
  const int dim = integer(j, "dim", 2, "grid");
  const int n = integer(j, "n", 0, "grid");
  try {
    if (topo == "torus") return Grid::torus(dim, n);
    if (topo == "box") {
      Vec o{};
      if (j.contains("origin")) {
        if (!j["origin"].is_array() || j["origin"].size() != 2) throw SchemaError("grid.origin: expected 2 numbers");
        o = vec2(j["origin"][0].get<double>(), j["origin"][1].get<double>());
      }
      return Grid::box(n, number(j, "side", 1.0, "grid"), o);
    }
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("grid: ") + e.what());
  }
  throw SchemaError("grid.topology: expected 'torus' or 'box'");
}

namespace {

void write_columns(const std::filesystem::path& csv, const std::filesystem::path& header, const Grid& g,
                   const std::string& kind, const std::vector<std::string>& names, std::size_t rows,
                   const std::vector<double>& values) {
  std::string out;
  for (std::size_t k = 0; k < names.size(); ++k) out += (k ? "," : "") + names[k];
  out += "\n";
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (k) out += ",";
      out += format_double(values[k * rows + i]);
    }
    out += "\n";
  }
  atomic_write(csv, out);
  json h = {{"grid", grid_to_json(g)}, {"kind", kind}, {"columns", names}, {"rows", rows}};
  atomic_write(header, h.dump(2) + "\n");
}

std::vector<double> read_columns(const std::filesystem::path& csv, const json& h, std::size_t rows,
                                 std::size_t width) {
  const auto lines = split_lines(read_text(csv));
  std::string expect;
  for (std::size_t k = 0; k < width; ++k) expect += (k ? "," : "") + h["columns"][k].get<std::string>();
  if (lines.empty() || lines[0] != expect) throw SchemaError(csv.string() + ": expected header '" + expect + "'");
  if (lines.size() != rows + 1) throw SchemaError(csv.string() + ": row count does not match the header");
  std::vector<double> values(rows * width);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto cols = split(lines[i + 1], ',');
    if (cols.size() != width) throw SchemaError(csv.string() + ": wrong column count on line " + std::to_string(i + 2));
    for (std::size_t k = 0; k < width; ++k) values[k * rows + i] = parse_double(cols[k]);
  }
  return values;
}

json read_header(const std::filesystem::path& header, const std::string& kind) {
  json h;
  try {
    h = json::parse(read_text(header));
  } catch (const json::parse_error& e) {
    throw SchemaError(header.string() + ": " + e.what());
  }
  only_keys(h, {"grid", "kind", "columns", "rows"}, "field header");
  if (h.value("kind", "") != kind) throw SchemaError(header.string() + ": expected a " + kind + " field");
  return h;
}

}  // namespace

void write_field(const std::filesystem::path& csv, const std::filesystem::path& header, const ScalarField& f) {
  write_columns(csv, header, f.grid, "scalar", {"u"}, f.grid.cells(), f.values);
}

void write_field(const std::filesystem::path& csv, const std::filesystem::path& header, const VectorField& f) {
  std::vector<std::string> names;
  for (int k = 0; k < f.grid.dim(); ++k) names.push_back("z" + std::to_string(k));
  write_columns(csv, header, f.grid, "vector", names, f.grid.flux_cells(), f.values);
}

ScalarField read_scalar_field(const std::filesystem::path& csv, const std::filesystem::path& header) {
  const json h = read_header(header, "scalar");
  ScalarField f(grid_from_json(h["grid"]));
  f.values = read_columns(csv, h, f.grid.cells(), 1);
  return f;
}

VectorField read_vector_field(const std::filesystem::path& csv, const std::filesystem::path& header) {
  const json h = read_header(header, "vector");
  VectorField f(grid_from_json(h["grid"]));
  f.values = read_columns(csv, h, f.grid.flux_cells(), static_cast<std::size_t>(f.grid.dim()));
  return f;
}

// ---------------------------------------------------------------------------

std::string mask_to_csv(const BitMask& m) {
  std::string out = "index\n";
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m[i]) out += std::to_string(i) + "\n";
  }
  return out;
}

BitMask mask_from_csv(const std::string& text, const Grid& g) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "index") throw SchemaError("mask csv: expected header 'index'");
  BitMask m(g);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    std::size_t i = 0;
    const auto r = std::from_chars(lines[k].data(), lines[k].data() + lines[k].size(), i);
    if (r.ec != std::errc() || r.ptr != lines[k].data() + lines[k].size() || i >= g.cells()) {
      throw SchemaError("mask csv: bad cell index '" + lines[k] + "'");
    }
    m.set(i, true);
  }
  return m;
}

std::string mask_to_rle(const BitMask& m) {
  std::string out;
  bool value = false;
  std::size_t run = 0;
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m[i] != value) {
      out += std::to_string(run) + " ";
      value = !value;
      run = 0;
    }
    ++run;
  }
  out += std::to_string(run);
  return out;
}

BitMask mask_from_rle(const std::string& text, const Grid& g) {
  BitMask m(g);
  std::istringstream in(text);
  std::size_t pos = 0, run = 0;
  bool value = false;
  while (in >> run) {
    if (pos + run > g.cells()) throw SchemaError("mask rle: runs exceed the grid");
    for (std::size_t k = 0; k < run; ++k) m.set(pos + k, value);
    pos += run;
    value = !value;
  }
  if (!in.eof() || pos != g.cells()) throw SchemaError("mask rle: runs do not cover the grid");
  return m;
}

// ---------------------------------------------------------------------------

std::string fan_to_csv(const FanResult& fan) {
  std::string out = std::string(fan_columns) + "\n";
  for (const auto& s : fan.samples) {
    double angle = std::atan2(s.direction[1], s.direction[0]);
    if (angle < 0.0) angle += 2.0 * std::numbers::pi;
    for (double x : {angle, s.direction[0], s.direction[1], s.phi, s.gap}) out += format_double(x) + ",";
    out += s.certified ? "1," : "0,";
    out += format_double(s.subgradient[0]) + "," + format_double(s.subgradient[1]) + "\n";
  }
  return out;
}

FanResult fan_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != fan_columns) throw SchemaError(std::string("fan csv: expected header ") + fan_columns);
  FanResult fan;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto c = split(lines[k], ',');
    if (c.size() != 8) throw SchemaError("fan csv: wrong column count on line " + std::to_string(k + 1));
    FanSample s;
    s.direction = vec2(parse_double(c[1]), parse_double(c[2]));
    s.phi = parse_double(c[3]);
    s.gap = parse_double(c[4]);
    if (c[5] != "0" && c[5] != "1") throw SchemaError("fan csv: certified must be 0 or 1");
    s.certified = c[5] == "1";
    s.subgradient = vec2(parse_double(c[6]), parse_double(c[7]));
    fan.samples.push_back(s);
  }
  return fan;
}

std::string wulff_to_csv(const WulffShape& w) {
  std::string out = "x,y,normal_x,normal_y,support\n";
  for (std::size_t k = 0; k < w.vertices.size(); ++k) {
    const auto& [nu, phi] = w.support[w.active[k]];
    out += format_double(w.vertices[k][0]) + "," + format_double(w.vertices[k][1]) + "," + format_double(nu[0]) +
           "," + format_double(nu[1]) + "," + format_double(phi) + "\n";
  }
  return out;
}

json wulff_to_json(const WulffShape& w) {
  const Vec c = w.centroid();
  return {{"vertices", w.vertices.size()},
          {"supports", w.support.size()},
          {"area", w.area},
          {"centroid", vec_json(c, 2)},
          {"min_radius", w.min_radius()},
          {"max_radius", w.max_radius()}};
}

json to_json(const CellSolution& s) {
  const int d = s.v.grid.dim();
  return {{"p", vec_json(s.p, d)},
          {"n", s.v.grid.n()},
          {"primal", s.primal},
          {"dual", s.dual},
          {"gap", s.gap},
          {"relative_gap", s.relative_gap()},
          {"div_residual", s.div_residual},
          {"feas_residual", s.feas_residual},
          {"complementarity_bound", s.complementarity_bound()},
          {"iters", s.iters},
          {"coarse_iters", s.coarse_iters},
          {"certified", s.certified}};
}

json to_json(const FacetReport& r) {
  json probes = json::array();
  for (const auto& p : r.probes) {
    probes.push_back({{"q", int3_json(p.q, 2)},
                      {"opening", p.opening},
                      {"error_bar", p.error_bar},
                      {"threshold", p.threshold},
                      {"verdict", to_string(p.verdict)},
                      {"plus", derivative_json(p.plus)},
                      {"minus", derivative_json(p.minus)}});
  }
  return {{"p", int3_json(r.p, 2)},
          {"delta_facet", r.delta_facet},
          {"subgradient_dim", r.subgradient_dim},
          {"certified", r.certified},
          {"probes", probes}};
}

json to_json(const ConvexityReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"p1", vec_json(p.p1, 2)},
                     {"p2", vec_json(p.p2, 2)},
                     {"angle_deg", p.angle_deg},
                     {"phi1", p.phi1},
                     {"phi2", p.phi2},
                     {"phi12", p.phi12},
                     {"slack", p.slack},
                     {"tolerance", p.tolerance},
                     {"parallel", p.parallel},
                     {"certified", p.certified},
                     {"pass", p.pass}});
  }
  return {{"min_slack_nonparallel", r.min_slack_nonparallel}, {"all_pass", r.all_pass}, {"pairs", pairs}};
}

json to_json(const SlabReport& r) {
  return {{"m_obs", r.m_obs},
          {"m_obs_wide", r.m_obs_wide},
          {"boundary_count", r.boundary_count},
          {"boundary_components", r.boundary_components},
          {"finite", r.finite},
          {"stable", r.stable},
          {"pass", r.pass}};
}

json to_json(const BirkhoffReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"q", int3_json(c.q, 2)},
                      {"p_dot_q", c.p_dot_q},
                      {"containment", c.containment},
                      {"violations", c.violations},
                      {"pass", c.pass}});
  }
  return {{"total_violations", r.total_violations}, {"pass", r.pass}, {"checks", checks}};
}

json to_json(const LaminationReport& r) {
  return {{"eta", r.eta},
          {"gap_fraction", r.gap_fraction},
          {"coverage_fraction", r.coverage_fraction},
          {"components", r.components}};
}

json to_json(const CalibrationReport& r) {
  return {{"cells", r.cells},
          {"sup_residual", r.sup_residual},
          {"mean_residual", r.mean_residual},
          {"weighted_mean_residual", r.weighted_mean_residual},
          {"certified_relative_gap", r.certified_relative_gap}};
}

json to_json(const IsoResult& r) {
  return {{"level", r.level},
          {"cells", r.mask.count()},
          {"volume", r.volume},
          {"energy", r.energy},
          {"objective", r.objective},
          {"surrogate_energy", r.surrogate_energy},
          {"relaxed_energy", r.relaxed_energy},
          {"gap", r.gap},
          {"relative_gap", r.relative_gap},
          {"diameter", r.diameter},
          {"touches_wall", r.touches_wall},
          {"components", r.components},
          {"outer_iters", r.outer_iters},
          {"inner_iters", r.inner_iters},
          {"starts", r.starts},
          {"certified", r.certified}};
}

json to_json(const ShapeMetrics& m) {
  return {{"epsilon", m.epsilon},
          {"symmetric_difference", m.symmetric_difference},
          {"hausdorff", m.hausdorff},
          {"shift", vec_json(m.shift, 2)},
          {"volume", m.volume},
          {"energy", m.energy},
          {"touches_wall", m.touches_wall},
          {"certified", m.certified}};
}

json to_json(const RescaleReport& r) {
  json rows = json::array();
  for (const auto& m : r.rows) rows.push_back(to_json(m));
  return {{"non_increasing", r.non_increasing}, {"rows", rows}};
}

// ---------------------------------------------------------------------------

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

}  // namespace stablenorm::io
