#include "stablenorm/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "stablenorm/planelike.hpp"

namespace stablenorm::cli {

using io::json;
using io::SchemaError;

namespace {

// Typed access to one config object; rejects keys outside `keys`.
class Block {
 public:
  Block(const json& j, std::string where, std::initializer_list<const char*> keys) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw SchemaError(where_ + ": expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : j.items()) {
      if (!allowed.count(k)) throw SchemaError(where_ + ": unknown key '" + k + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return where_ + "." + key; }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_number()) throw SchemaError(path(key) + ": expected a number");
    return j_[key].get<double>();
  }
  double positive(const char* key, double fallback) const {
    const double x = number(key, fallback);
    if (!(x > 0.0) || !std::isfinite(x)) throw SchemaError(path(key) + ": must be positive");
    return x;
  }
  int integer(const char* key, int fallback, int min = std::numeric_limits<int>::min()) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_number_integer()) throw SchemaError(path(key) + ": expected an integer");
    const long long x = j_[key].get<long long>();
    if (x < min || x > std::numeric_limits<int>::max()) {
      throw SchemaError(path(key) + ": must be at least " + std::to_string(min));
    }
    return static_cast<int>(x);
  }
  bool flag(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_boolean()) throw SchemaError(path(key) + ": expected true or false");
    return j_[key].get<bool>();
  }
  std::string text(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_string()) throw SchemaError(path(key) + ": expected a string");
    return j_[key].get<std::string>();
  }
  Vec vec(const char* key, const Vec& fallback) const {
    if (!has(key)) return fallback;
    const json& a = j_[key];
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
      throw SchemaError(path(key) + ": expected [x, y]");
    }
    return vec2(a[0].get<double>(), a[1].get<double>());
  }
  std::vector<std::array<int, 3>> int_vectors(const char* key, const std::vector<std::array<int, 3>>& fallback) const {
    if (!has(key)) return fallback;
    const json& a = j_[key];
    if (!a.is_array() || a.empty()) throw SchemaError(path(key) + ": expected a nonempty list of [i, j]");
    std::vector<std::array<int, 3>> out;
    for (const auto& e : a) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
        throw SchemaError(path(key) + ": expected integer pairs [i, j]");
      }
      const std::array<int, 3> q{e[0].get<int>(), e[1].get<int>(), 0};
      if (q[0] == 0 && q[1] == 0) throw SchemaError(path(key) + ": directions must be nonzero");
      out.push_back(q);
    }
    return out;
  }
  std::vector<double> numbers(const char* key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    const json& a = j_[key];
    if (!a.is_array() || a.empty()) throw SchemaError(path(key) + ": expected a nonempty list of numbers");
    std::vector<double> out;
    for (const auto& e : a) {
      if (!e.is_number() || !(e.get<double>() > 0.0)) throw SchemaError(path(key) + ": expected positive numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string where_;
};

const json& child(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j[key] : empty;
}

SolverParams parse_solver(const json& j, const std::string& where, SolverParams sp) {
  const Block b(j, where, {"tol_gap", "tol_feas", "max_iters", "check_every", "multilevel", "coarsest_n"});
  sp.tol_gap = b.positive("tol_gap", sp.tol_gap);
  sp.tol_feas = b.number("tol_feas", sp.tol_feas);
  sp.max_iters = b.integer("max_iters", sp.max_iters, 1);
  sp.check_every = b.integer("check_every", sp.check_every, 1);
  sp.multilevel = b.flag("multilevel", sp.multilevel);
  sp.coarsest_n = b.integer("coarsest_n", sp.coarsest_n, 4);
  return sp;
}

IsoParams parse_iso_params(const Block& b, IsoParams ip) {
  ip.period = b.positive("period", ip.period);
  ip.max_outer = b.integer("max_outer", ip.max_outer, 1);
  ip.mm_step = b.positive("mm_step", ip.mm_step);
  ip.mm_tol = b.positive("mm_tol", ip.mm_tol);
  ip.polish_max_cells = static_cast<std::size_t>(b.integer("polish_max_cells", int(ip.polish_max_cells), 0));
  ip.random_starts = b.integer("random_starts", ip.random_starts, 0);
  if (b.has("inner")) ip.inner = parse_solver(b.at("inner"), b.path("inner"), ip.inner);
  return ip;
}

json vec_json(const Vec& v) { return json::array({v[0], v[1]}); }
json int_json(const std::array<int, 3>& q) { return json::array({q[0], q[1]}); }

std::string tag(const std::array<int, 3>& q) { return std::to_string(q[0]) + "_" + std::to_string(q[1]); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Collects outputs and task records; the only writer into the output directory.
class Run {
 public:
  Run(std::string command, const RunConfig& cfg, const std::string& config_text)
      : command_(std::move(command)), cfg_(cfg), digest_(io::sha256_hex(config_text)) {
    std::filesystem::create_directories(cfg.output);
  }

  void write(const std::string& name, const std::string& content) {
    io::atomic_write(cfg_.output / name, content);
    outputs_.push_back({{"file", name}, {"sha256", io::sha256_hex(content)}, {"bytes", content.size()}});
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  void write_field(const std::string& stem, const ScalarField& f) {
    io::write_field(cfg_.output / (stem + ".csv"), cfg_.output / (stem + ".json"), f);
    record(stem + ".csv");
    record(stem + ".json");
  }
  void write_field(const std::string& stem, const VectorField& f) {
    io::write_field(cfg_.output / (stem + ".csv"), cfg_.output / (stem + ".json"), f);
    record(stem + ".csv");
    record(stem + ".json");
  }

  void task(const std::string& name, bool certified, double seconds, long long iters, json extra = json::object()) {
    json t = {{"name", name}, {"certified", certified}, {"seconds", seconds}, {"iters", iters}};
    for (auto& [k, v] : extra.items()) t[k] = v;
    tasks_.push_back(std::move(t));
    certified_ = certified_ && certified;
  }
  void fail(const std::string& why) {
    failures_.push_back(why);
    certified_ = false;
  }

  int finish(std::ostream& out) {
    const int code = certified_ ? 0 : 2;
    const SolverParams& sp = cfg_.solver;
    json m = {{"version", version},
              {"command", command_},
              {"config_sha256", digest_},
              {"medium", io::medium_to_json(cfg_.medium)},
              {"grid", io::grid_to_json(Grid::torus(cfg_.medium.dim, cfg_.n))},
              {"tolerances",
               {{"tol_gap", sp.tol_gap},
                {"tol_feas", sp.tol_feas},
                {"max_iters", sp.max_iters},
                {"check_every", sp.check_every},
                {"multilevel", sp.multilevel}}},
              {"workers", cfg_.workers},
              {"seed", cfg_.seed},
              {"certified", certified_},
              {"exit_code", code},
              {"failures", failures_},
              {"tasks", tasks_},
              {"outputs", outputs_}};
    io::atomic_write(cfg_.output / "manifest.json", m.dump(2) + "\n");
    out << (certified_ ? "certified" : "NOT CERTIFIED") << ", outputs in " << cfg_.output.string() << "\n";
    return code;
  }

 private:
  void record(const std::string& name) {
    const std::string content = io::read_text(cfg_.output / name);
    outputs_.push_back({{"file", name}, {"sha256", io::sha256_hex(content)}, {"bytes", content.size()}});
  }

  std::string command_;
  const RunConfig& cfg_;
  std::string digest_;
  json tasks_ = json::array();
  json outputs_ = json::array();
  std::vector<std::string> failures_;
  bool certified_ = true;
};

using Clock = std::chrono::steady_clock;

void cmd_phi(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  const Grid g = Grid::torus(cfg.medium.dim, cfg.n);
  const auto t0 = Clock::now();
  const CellSolution sol = solve_cell(m, g, cfg.phi.p, cfg.solver);
  const SubgradientEstimate sg = subgradient_estimate(sol);
  json j = io::to_json(sol);
  j["subgradient"] = vec_json(sg.value);
  run.write_json("phi.json", j);
  if (cfg.phi.dump_fields) {
    run.write_field("v", sol.v);
    run.write_field("z", sol.z);
  }
  run.task("phi", sol.certified, seconds_since(t0), sol.iters + sol.coarse_iters);
  out << std::setprecision(10) << "phi = " << sol.primal << "  gap = " << sol.gap << "  subgradient = ("
      << sg.value[0] << ", " << sg.value[1] << ")  certified = " << (sol.certified ? "yes" : "no") << "\n";
}

FanResult run_fan(const PeriodicMetric& m, const Grid& g, int count, double offset, const RunConfig& cfg, Run& run) {
  const auto t0 = Clock::now();
  const FanResult fan = sample_fan(m, g, equiangular_directions(count, offset), cfg.solver, cfg.workers);
  run.write("fan.csv", io::fan_to_csv(fan));
  long long iters = 0;
  for (const auto& s : fan.samples) iters += s.iters;
  run.task("fan", fan.all_certified(), seconds_since(t0), iters, {{"directions", count}, {"n", g.n()}});
  return fan;
}

void cmd_fan(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  const FanResult fan = run_fan(m, Grid::torus(cfg.medium.dim, cfg.n), cfg.fan.directions, cfg.fan.offset, cfg, run);
  double lo = fan.samples.front().phi, hi = lo;
  for (const auto& s : fan.samples) {
    lo = std::min(lo, s.phi);
    hi = std::max(hi, s.phi);
  }
  out << std::setprecision(8) << "fan: " << fan.samples.size() << " directions, phi in [" << lo << ", " << hi
      << "]\n";
}

void cmd_facets(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  const Grid g = Grid::torus(cfg.medium.dim, cfg.n);
  json reports = json::array();
  for (const auto& p : cfg.facets.p) {
    const auto t0 = Clock::now();
    const FacetReport r = facet_probe(m, g, p, cfg.solver, cfg.facets.probe);
    reports.push_back(io::to_json(r));
    run.task("facets " + tag(p), r.certified, seconds_since(t0), 0, {{"subgradient_dim", r.subgradient_dim}});
    for (const auto& pr : r.probes) {
      out << std::setprecision(6) << "facet p=(" << p[0] << "," << p[1] << ") q=(" << pr.q[0] << "," << pr.q[1]
          << ") opening=" << pr.opening << " error_bar=" << pr.error_bar << " verdict=" << to_string(pr.verdict)
          << "\n";
    }
  }
  run.write_json("facets.json", reports);
}

void cmd_wulff(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  const Grid g = Grid::torus(cfg.medium.dim, cfg.n);
  const FanResult fan = run_fan(m, g, cfg.wulff.directions, 0.0, cfg, run);
  if (!fan.all_certified()) {
    run.fail("wulff: fan has uncertified samples; shape not built");
    return;
  }
  const WulffShape w = build_wulff(fan);
  run.write("wulff.csv", io::wulff_to_csv(w));
  run.write_json("wulff.json", io::wulff_to_json(w));
  out << std::setprecision(8) << "wulff: " << w.vertices.size() << " vertices, area " << w.area << "\n";
  if (cfg.wulff.convexity_pairs > 0) {
    const auto t0 = Clock::now();
    const ConvexityReport c = strict_convexity_scan(
        m, g, fan, convexity_pairs(cfg.wulff.convexity_pairs, cfg.wulff.min_angle), cfg.solver, cfg.workers);
    bool certified = true;
    for (const auto& p : c.pairs) certified = certified && p.certified;
    run.write_json("convexity.json", io::to_json(c));
    run.task("convexity", certified, seconds_since(t0), 0, {{"all_pass", c.all_pass}});
    out << "convexity: min slack " << c.min_slack_nonparallel << (c.all_pass ? ", all pairs pass" : ", FAILED")
        << "\n";
  }
}

void cmd_planelike(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  const Grid g = Grid::torus(cfg.medium.dim, cfg.n);
  const PlanelikeBlock& b = cfg.planelike;
  json rows = json::array();
  for (const auto& p : b.p) {
    const auto t0 = Clock::now();
    const CellSolution sol = solve_cell(m, g, vec2(p[0], p[1]), cfg.solver);
    const PlaneLikeSet e = extract_planelike(sol, b.s, b.copies);
    const SlabReport slab = check_slab(sol, b.s, b.copies);
    const BirkhoffReport birk = check_birkhoff(e, b.q_max);
    const LaminationReport lam = lamination_coverage(sol, b.eta);
    const CalibrationReport cal = check_calibration(m, sol, b.eta, &e);
    const std::string t = tag(p);
    run.write("set_" + t + ".csv", io::mask_to_csv(e.mask));
    run.write("gap_" + t + ".csv", io::mask_to_csv(lam.gap));
    run.write_field("v_" + t, sol.v);
    rows.push_back({{"p", int_json(p)},
                    {"s", b.s},
                    {"copies", b.copies},
                    {"window", io::grid_to_json(e.mask.grid)},
                    {"solve", io::to_json(sol)},
                    {"slab", io::to_json(slab)},
                    {"birkhoff", io::to_json(birk)},
                    {"lamination", io::to_json(lam)},
                    {"calibration", io::to_json(cal)}});
    run.task("planelike " + t, sol.certified, seconds_since(t0), sol.iters + sol.coarse_iters,
             {{"slab_pass", slab.pass}, {"birkhoff_pass", birk.pass}});
    out << std::setprecision(6) << "planelike p=(" << p[0] << "," << p[1] << ") M_obs=" << slab.m_obs
        << " slab=" << (slab.pass ? "pass" : "FAIL") << " birkhoff=" << (birk.pass ? "pass" : "FAIL")
        << " gap_fraction=" << lam.gap_fraction << "\n";
  }
  run.write_json("planelike.json", rows);
}

void cmd_iso(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  IsoParams ip = cfg.iso.params;
  ip.seed = cfg.seed;
  const auto t0 = Clock::now();
  json extra = json::object();
  std::optional<IsoResult> found;
  if (cfg.iso.auto_mu) {
    PenaltySearch search = find_penalty_threshold(m, ip);
    json trials = json::array();
    for (const auto& t : search.trials) {
      trials.push_back(
          {{"mu", t.mu}, {"volume", t.volume}, {"objective", t.objective}, {"volume_matched", t.volume_matched}, {"mask_repeated", t.mask_repeated}});
    }
    extra["mu"] = search.mu;
    extra["mu_found"] = search.found;
    extra["mu_trials"] = trials;
    if (!search.found) run.fail("iso: no mu with two consecutive matching solves");
    ip.mu = search.mu;
    found = std::move(search.result);
  } else {
    found = solve_iso(m, ip);
  }
  const IsoResult& r = *found;
  json j = io::to_json(r);
  j["mode"] = to_string(ip.mode);
  j["mu"] = ip.mu;
  j["target_volume"] = ip.volume;
  j["box"] = io::grid_to_json(ip.box);
  for (auto& [k, v] : extra.items()) j[k] = v;
  const double cv = ip.box.cell_volume();
  if (cfg.iso.oracle) {
    const BruteForceResult b =
        ip.mode == IsoMode::constrained
            ? brute_force_iso(m, ip.box, static_cast<int>(std::lround(ip.volume / cv)), nullptr, ip.period)
            : brute_force_penalized(m, ip.box, ip.volume, ip.mu, nullptr, ip.period);
    const double reached = ip.mode == IsoMode::constrained ? r.energy : r.objective;
    const bool match = std::abs(reached - b.energy) <= 1e-9;
    j["oracle"] = {{"energy", b.energy}, {"evaluated", b.evaluated}, {"match", match}};
    out << std::setprecision(12) << (match ? "ORACLE MATCH" : "ORACLE MISMATCH") << " solver=" << reached
        << " brute_force=" << b.energy << "\n";
    if (!match) run.fail("iso: oracle mismatch");
  }
  run.write_json("iso.json", j);
  run.write("mask.csv", io::mask_to_csv(r.mask));
  run.write("mask.rle", io::mask_to_rle(r.mask) + "\n");
  run.write_field("u", r.density);
  extra.erase("mu_trials");
  run.task("iso", r.certified, seconds_since(t0), r.inner_iters, extra);
  out << std::setprecision(8) << "iso: " << r.mask.count() << " cells, volume " << r.volume << ", energy "
      << r.energy << "\n";
  if (r.touches_wall) out << "warning: box too small, the set touches the wall\n";
}

void cmd_rescale(const RunConfig& cfg, Run& run, std::ostream& out) {
  const PeriodicMetric m(cfg.medium);
  const Grid g = Grid::torus(cfg.medium.dim, cfg.rescale.fan_n);
  const FanResult fan = run_fan(m, g, cfg.rescale.directions, 0.0, cfg, run);
  if (!fan.all_certified()) {
    run.fail("rescale: fan has uncertified samples; Wulff shape not built");
    return;
  }
  const WulffShape w = build_wulff(fan);
  run.write("wulff.csv", io::wulff_to_csv(w));
  run.write_json("wulff.json", io::wulff_to_json(w));
  RescaleParams rp = cfg.rescale.params;
  rp.iso.seed = cfg.seed;
  const auto t0 = Clock::now();
  const RescaleReport rep = rescale_experiment(m, w, rp, cfg.workers);
  json j = io::to_json(rep);
  j["lambda"] = rp.lambda;
  j["side"] = rp.side > 0.0 ? rp.side : 6.0 * rp.lambda * w.max_radius();
  j["n"] = rp.n;
  j["slack"] = rp.slack;
  json masks = json::array();
  bool certified = true;
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    const std::string name = "mask_eps_" + std::to_string(k) + ".csv";
    run.write(name, io::mask_to_csv(rep.masks[k]));
    masks.push_back({{"epsilon", rep.rows[k].epsilon}, {"file", name}, {"box", io::grid_to_json(rep.masks[k].grid)}});
    certified = certified && rep.rows[k].certified;
    out << std::setprecision(6) << "rescale eps=" << rep.rows[k].epsilon
        << " symmetric_difference=" << rep.rows[k].symmetric_difference << "\n";
  }
  j["masks"] = masks;
  run.write_json("rescale.json", j);
  run.task("rescale", certified, seconds_since(t0), 0, {{"non_increasing", rep.non_increasing}});
}

// ---------------------------------------------------------------------------

struct Check {
  std::ostream& out;
  int failed = 0;

  void operator()(const std::string& name, bool ok, double value) {
    out << (ok ? "ok   " : "FAIL ") << name << "  (" << std::setprecision(10) << value << ")\n";
    if (!ok) ++failed;
  }
};

}  // namespace

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  const Block top(j, "config",
                  {"medium", "n", "solver", "output", "workers", "seed", "phi", "fan", "facets", "wulff", "planelike",
                   "iso", "rescale"});
  RunConfig c;
  if (!top.has("medium")) throw SchemaError("config.medium: required");
  c.medium = io::medium_from_json(top.at("medium"), base_dir);
  try {
    PeriodicMetric check(c.medium);
  } catch (const std::exception& e) {
    throw SchemaError(std::string("config.medium: ") + e.what());
  }
  c.n = top.integer("n", c.n, 4);
  if (top.has("solver")) c.solver = parse_solver(top.at("solver"), "config.solver", c.solver);
  c.output = top.text("output", c.output.string());
  c.workers = top.integer("workers", c.workers, 1);
  c.seed = static_cast<std::uint64_t>(top.integer("seed", 0, 0));

  {
    const Block b(child(j, "phi"), "config.phi", {"p", "dump_fields"});
    c.phi.p = b.vec("p", c.phi.p);
    if (!(norm2(c.phi.p) > 0.0)) throw SchemaError("config.phi.p: must be nonzero");
    c.phi.dump_fields = b.flag("dump_fields", false);
  }
  {
    const Block b(child(j, "fan"), "config.fan", {"directions", "offset"});
    c.fan.directions = b.integer("directions", c.fan.directions, 1);
    c.fan.offset = b.number("offset", c.fan.offset);
  }
  {
    const Block b(child(j, "facets"), "config.facets", {"p", "q_max", "delta_facet", "t0"});
    c.facets.p = b.int_vectors("p", c.facets.p);
    c.facets.probe.q_max = b.integer("q_max", c.facets.probe.q_max, 1);
    c.facets.probe.delta_facet = b.positive("delta_facet", c.facets.probe.delta_facet);
    c.facets.probe.t0 = b.positive("t0", c.facets.probe.t0);
  }
  {
    const Block b(child(j, "wulff"), "config.wulff", {"directions", "convexity_pairs", "min_angle"});
    c.wulff.directions = b.integer("directions", c.wulff.directions, 16);
    c.wulff.convexity_pairs = b.integer("convexity_pairs", c.wulff.convexity_pairs, 0);
    c.wulff.min_angle = b.number("min_angle", c.wulff.min_angle);
    if (!(c.wulff.min_angle > 0.0 && c.wulff.min_angle < 90.0)) {
      throw SchemaError("config.wulff.min_angle: must lie in (0, 90)");
    }
  }
  {
    const Block b(child(j, "planelike"), "config.planelike", {"p", "s", "copies", "q_max", "eta"});
    c.planelike.p = b.int_vectors("p", c.planelike.p);
    c.planelike.s = b.number("s", c.planelike.s);
    c.planelike.copies = b.integer("copies", c.planelike.copies, 1);
    c.planelike.q_max = b.integer("q_max", c.planelike.q_max, 0);
    c.planelike.eta = b.number("eta", c.planelike.eta);
    if (2 * c.planelike.copies <= c.planelike.q_max) {
      throw SchemaError("config.planelike: 2 * copies must exceed q_max");
    }
  }
  {
    const Block b(child(j, "iso"), "config.iso",
                  {"n", "side", "volume", "mode", "mu", "period", "oracle", "max_outer", "mm_step", "mm_tol",
                   "polish_max_cells", "random_starts", "inner"});
    IsoParams& ip = c.iso.params;
    ip = parse_iso_params(b, ip);
    const int n = b.integer("n", 32, 2);
    const double side = b.positive("side", 1.0);
    ip.box = Grid::box(n, side);
    ip.volume = b.positive("volume", 0.25 * side * side);
    const std::string mode = b.text("mode", "constrained");
    if (mode == "constrained") {
      ip.mode = IsoMode::constrained;
    } else if (mode == "penalized") {
      ip.mode = IsoMode::penalized;
    } else {
      throw SchemaError("config.iso.mode: expected 'constrained' or 'penalized'");
    }
    if (b.has("mu") && b.at("mu").is_string()) {
      if (b.at("mu").get<std::string>() != "auto") throw SchemaError("config.iso.mu: expected a number or \"auto\"");
      c.iso.auto_mu = true;
    } else {
      ip.mu = b.number("mu", 0.0);
    }
    if (c.iso.auto_mu && ip.mode != IsoMode::penalized) {
      throw SchemaError("config.iso.mu: \"auto\" needs mode penalized");
    }
    c.iso.oracle = b.flag("oracle", false);
    if (c.iso.oracle && ip.box.cells() > 36) throw SchemaError("config.iso.oracle: box has more than 36 cells");
    try {
      IsoParams probe = ip;
      if (c.iso.auto_mu) probe.mu = 1.0;
      probe.validate();
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("config.iso: ") + e.what());
    }
  }
  {
    const Block b(child(j, "rescale"), "config.rescale",
                  {"epsilons", "n", "side", "lambda", "slack", "fan_n", "directions", "period", "max_outer",
                   "mm_step", "mm_tol", "polish_max_cells", "random_starts", "inner"});
    RescaleParams& rp = c.rescale.params;
    rp.iso = parse_iso_params(b, rp.iso);
    rp.epsilons = b.numbers("epsilons", rp.epsilons);
    rp.n = b.integer("n", rp.n, 4);
    rp.side = b.number("side", rp.side);
    if (rp.side < 0.0) throw SchemaError("config.rescale.side: must be >= 0 (0 selects the default)");
    rp.lambda = b.positive("lambda", rp.lambda);
    rp.slack = b.number("slack", rp.slack);
    c.rescale.fan_n = b.integer("fan_n", c.rescale.fan_n, 4);
    c.rescale.directions = b.integer("directions", c.rescale.directions, 16);
  }
  try {
    c.solver.validate(Grid::torus(c.medium.dim, c.n));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("config.solver: ") + e.what());
  }
  return c;
}

int run_command(const std::string& command, const RunConfig& cfg, const std::string& config_text, std::ostream& out,
                std::ostream& err) {
  Run run(command, cfg, config_text);
  try {
    if (command == "phi") {
      cmd_phi(cfg, run, out);
    } else if (command == "fan") {
      cmd_fan(cfg, run, out);
    } else if (command == "facets") {
      cmd_facets(cfg, run, out);
    } else if (command == "wulff") {
      cmd_wulff(cfg, run, out);
    } else if (command == "planelike") {
      cmd_planelike(cfg, run, out);
    } else if (command == "iso") {
      cmd_iso(cfg, run, out);
    } else if (command == "rescale") {
      cmd_rescale(cfg, run, out);
    } else {
      err << "unknown command '" << command << "'\n";
      return 1;
    }
  } catch (const std::exception& e) {
    err << command << ": " << e.what() << "\n";
    run.fail(command + ": " + e.what());
  }
  return run.finish(out);
}

int selftest(Fault fault, std::ostream& out) {
  Check check{out};
  const auto t0 = Clock::now();
  const PeriodicMetric hom(MediumSpec::homogeneous_medium());
  const PeriodicMetric lam(MediumSpec::laminate_medium(1.0, 2.0));

  check("metric: homogeneous F((0.3,0.7), (3,4)) = 5", std::abs(hom.eval(vec2(0.3, 0.7), vec2(3, 4)) - 5.0) < 1e-12,
        hom.eval(vec2(0.3, 0.7), vec2(3, 4)));
  check("metric: laminate F((0.25,0.75), (0,1)) = 2", std::abs(lam.eval(vec2(0.25, 0.75), vec2(0, 1)) - 2.0) < 1e-12,
        lam.eval(vec2(0.25, 0.75), vec2(0, 1)));
  const Vec gp = hom.grad_p(vec2(0.1, 0.2), vec2(3, 4));
  check("metric: grad_p (3,4) = (0.6,0.8)", norm2(gp - vec2(0.6, 0.8)) < 1e-12, gp[0]);
  const Vec pr = lam.project_dual(vec2(0.25, 0.25), vec2(3, 4));
  check("metric: projection of (3,4) onto a = 1 ball", norm2(pr - vec2(0.6, 0.8)) < 1e-12, pr[0]);

  {
    const Grid g = Grid::torus(2, 16);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    ScalarField v(g);
    VectorField z(g);
    for (auto& x : v.values) x = U(rng);
    for (auto& x : z.values) x = U(rng);
    ScalarField div = divergence(z);
    if (fault == Fault::adjointness) div.values[3] += 1e-3;
    const double lhs = inner(gradient(v), z);
    const double rhs = -inner(v, div);
    const double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
    check("grid: <Dv, z> = -<v, div z> (relative 1e-12)", rel <= 1e-12, rel);
  }

  SolverParams sp;
  const Grid g32 = Grid::torus(2, 32);
  {
    const CellSolution s = solve_cell(hom, g32, vec2(1, 0), sp);
    check("cell: homogeneous phi(1,0) = 1 within 0.02", s.certified && std::abs(s.primal - 1.0) <= 0.02, s.primal);
  }
  {
    const CellSolution s1 = solve_cell(lam, g32, vec2(1, 0), sp);
    const CellSolution s2 = solve_cell(lam, g32, vec2(0, 1), sp);
    const LayerProfile prof = LayerProfile::from_metric(lam);
    const double o1 = laminate_oracle(prof, vec2(1, 0)).phi;
    const double o2 = laminate_oracle(prof, vec2(0, 1)).phi;
    check("cell: laminate phi(e1) matches oracle 1.5", s1.certified && std::abs(s1.primal - o1) <= 0.015, s1.primal);
    check("cell: laminate phi(e2) matches oracle 1.0", s2.certified && std::abs(s2.primal - o2) <= 0.01, s2.primal);
  }
  {
    const FanResult fan = sample_fan(hom, g32, equiangular_directions(16), sp);
    double worst = 0.0;
    for (const auto& s : fan.samples) worst = std::max(worst, std::abs(s.phi - 1.0));
    check("fan: 16 homogeneous directions certified, phi = 1 within 0.02", fan.all_certified() && worst <= 0.02,
          worst);
    const FanResult fan64 = sample_fan(hom, Grid::torus(2, 16), equiangular_directions(64), sp);
    const WulffShape w = build_wulff(fan64);
    check("wulff: homogeneous area = pi within 1%", std::abs(w.area - std::numbers::pi) <= 0.01 * std::numbers::pi,
          w.area);
    const ConvexityReport c = strict_convexity_scan(hom, g32, fan, {{vec2(1, 0), vec2(0, 1)}}, sp);
    check("convexity: homogeneous slack of e1, e2 = 2 - sqrt 2", std::abs(c.pairs[0].slack - (2.0 - std::sqrt(2.0))) <= 0.01,
          c.pairs[0].slack);
  }
  {
    const Grid box = Grid::box(8, 1.0);
    BitMask one(box);
    one.set(box.ravel({3, 3, 0}), true);
    const double h = box.h();
    const double e = set_energy(hom, box, one);
    check("iso: single cell energy = (2 + sqrt 2) h", std::abs(e - (2.0 + std::sqrt(2.0)) * h) <= 1e-12, e);
  }
  {
    const Grid box = Grid::box(4, 1.0);
    IsoParams ip;
    ip.box = box;
    ip.volume = 5 * box.cell_volume();
    const IsoResult r = solve_iso(lam, ip);
    const BruteForceResult b = brute_force_iso(lam, box, 5);
    check("iso: 4x4 laminate, 5 cells, brute-force oracle", std::abs(r.energy - b.energy) <= 1e-9, r.energy - b.energy);
  }
  {
    const Grid g = Grid::torus(2, 8);
    ScalarField f(g);
    for (std::size_t i = 0; i < g.cells(); ++i) f[i] = std::sin(0.3 * double(i)) / 3.0;
    const auto dir = std::filesystem::temp_directory_path() / ("stablenorm_selftest_" + std::to_string(::getpid()));
    io::write_field(dir / "f.csv", dir / "f.json", f);
    const ScalarField back = io::read_scalar_field(dir / "f.csv", dir / "f.json");
    std::filesystem::remove_all(dir);
    check("io: scalar field CSV round trip is bit-exact", back.values == f.values, 0.0);
  }
  const double secs = seconds_since(t0);
  out << (check.failed ? "SELFTEST FAILED" : "SELFTEST PASSED") << " (" << check.failed << " failures, "
      << std::setprecision(3) << secs << " s)\n";
  return check.failed ? 2 : 0;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Periodic stable norms, plane-like sets and Wulff shapes", "stablenorm"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  int workers = 0;
  long long seed = -1;
  std::vector<CLI::App*> subs;
  for (const char* name : commands) {
    CLI::App* s = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    s->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_dir, "output directory (overrides config.output)");
    s->add_option("--workers", workers, "worker threads (overrides config.workers)")->check(CLI::PositiveNumber);
    s->add_option("--seed", seed, "seed for randomized starts (overrides config.seed)")->check(CLI::NonNegativeNumber);
    subs.push_back(s);
  }
  CLI::App* st = app.add_subcommand("selftest", "run the built-in example suite");
  std::string fault_name = "none";
  st->add_option("--inject-fault", fault_name, "deliberately break a check")
      ->check(CLI::IsMember({"none", "adjointness"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n";
    const auto* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failing->help();
    return 1;
  }

  if (st->parsed()) return selftest(fault_name == "adjointness" ? Fault::adjointness : Fault::none, out);

  std::string command;
  for (auto* s : subs) {
    if (s->parsed()) command = s->get_name();
  }
  std::string text;
  RunConfig cfg;
  try {
    text = io::read_text(config_path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("config: not valid JSON: ") + e.what());
    }
    cfg = parse_config(j, std::filesystem::path(config_path).parent_path());
  } catch (const std::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  }
  if (!out_dir.empty()) cfg.output = out_dir;
  if (workers > 0) cfg.workers = workers;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  return run_command(command, cfg, text, out, err);
}

}  // namespace stablenorm::cli
