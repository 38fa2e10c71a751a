#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "stablenorm/cli.hpp"

using namespace stablenorm;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Invocation {
  int code;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "stablenorm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workspace(const char* name) {
  const fs::path p = fs::temp_directory_path() / "stablenorm_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  io::atomic_write(p, j.dump(2));
  return p;
}

json laminate_config() {
  return json::parse(R"({
    "medium": {"kind": "laminate", "base_norm": "euclidean",
               "params": {"a_low": 1, "a_high": 2, "theta": 0.5, "axis": 1}},
    "n": 16
  })");
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("configuration schema") {
    const cli::RunConfig cfg = cli::parse_config(laminate_config());
    CHECK(cfg.n == 16);
    CHECK(cfg.workers == 1);
    CHECK(cfg.fan.directions == 16);
    CHECK(cfg.medium.kind == MediumKind::laminate);

    json no_medium = laminate_config();
    no_medium.erase("medium");
    CHECK_THROWS_AS(cli::parse_config(no_medium), io::SchemaError);
    json typo = laminate_config();
    typo["fan"] = {{"direction", 8}};
    CHECK_THROWS_AS(cli::parse_config(typo), io::SchemaError);
    json bad_n = laminate_config();
    bad_n["n"] = 2;
    CHECK_THROWS_AS(cli::parse_config(bad_n), io::SchemaError);
    json bad_tol = laminate_config();
    bad_tol["solver"] = {{"tol_gap", -1.0}};
    CHECK_THROWS_AS(cli::parse_config(bad_tol), io::SchemaError);
    json auto_mu = laminate_config();
    auto_mu["iso"] = {{"mu", "auto"}};
    CHECK_THROWS_AS(cli::parse_config(auto_mu), io::SchemaError);
    auto_mu["iso"]["mode"] = "penalized";
    CHECK(cli::parse_config(auto_mu).iso.auto_mu);
    json big_oracle = laminate_config();
    big_oracle["iso"] = {{"n", 8}, {"oracle", true}};
    CHECK_THROWS_AS(cli::parse_config(big_oracle), io::SchemaError);
  }

  TEST_CASE("usage errors exit with 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"fan"}).code == 1);
    CHECK(invoke({"fan", "--config", "/nonexistent/config.json"}).code == 1);
    CHECK(invoke({"teleport"}).code == 1);
    const fs::path dir = workspace("usage");
    json typo = laminate_config();
    typo["fann"] = json::object();
    const Invocation r = invoke({"fan", "--config", write_config(dir, typo).string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("fann") != std::string::npos);
    io::atomic_write(dir / "broken.json", "{\"medium\": ");
    CHECK(invoke({"fan", "--config", (dir / "broken.json").string()}).code == 1);
    CHECK(invoke({"selftest", "--inject-fault", "gravity"}).code == 1);
  }

  TEST_CASE("fan run writes CSV and manifest, deterministically") {
    const fs::path dir = workspace("fan");
    json cfg = json::parse(R"({"medium": {"kind": "homogeneous", "base_norm": "euclidean", "params": {"a": 1}},
                               "n": 16, "fan": {"directions": 16}})");
    const fs::path config = write_config(dir, cfg);
    const Invocation a = invoke({"fan", "--config", config.string(), "--out", (dir / "a").string()});
    CHECK(a.code == 0);
    const std::string csv = io::read_text(dir / "a" / "fan.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
    const FanResult fan = io::fan_from_csv(csv);
    for (const FanSample& s : fan.samples) {
      CHECK(s.certified);
      CHECK(s.phi == doctest::Approx(1.0).epsilon(1e-6));
    }
    const json manifest = json::parse(io::read_text(dir / "a" / "manifest.json"));
    CHECK(manifest["command"] == "fan");
    CHECK(manifest["certified"] == true);
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest["config_sha256"] == io::sha256_hex(io::read_text(config)));
    bool listed = false;
    for (const auto& o : manifest["outputs"]) {
      if (o["file"] == "fan.csv") {
        listed = true;
        CHECK(o["sha256"] == io::sha256_hex(csv));
      }
    }
    CHECK(listed);

    const Invocation b = invoke({"fan", "--config", config.string(), "--out", (dir / "b").string(), "--workers", "2"});
    CHECK(b.code == 0);
    CHECK(io::read_text(dir / "b" / "fan.csv") == csv);
  }

  TEST_CASE("phi on the laminate") {
    const fs::path dir = workspace("phi");
    json cfg = laminate_config();
    cfg["phi"] = {{"p", {0, 1}}, {"dump_fields", true}};
    const Invocation r = invoke({"phi", "--config", write_config(dir, cfg).string(), "--out", (dir / "o").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("certified = yes") != std::string::npos);
    const json phi = json::parse(io::read_text(dir / "o" / "phi.json"));
    CHECK(phi["primal"].get<double>() == doctest::Approx(1.0).epsilon(0.02));
    CHECK(fs::exists(dir / "o" / "v.csv"));
  }

  TEST_CASE("uncertified runs exit with 2 and still write a manifest") {
    const fs::path dir = workspace("uncertified");
    json cfg = laminate_config();
    cfg["solver"] = {{"max_iters", 3}, {"multilevel", false}};
    cfg["fan"] = {{"directions", 4}};
    const Invocation r = invoke({"fan", "--config", write_config(dir, cfg).string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.out.find("NOT CERTIFIED") != std::string::npos);
    const json manifest = json::parse(io::read_text(dir / "o" / "manifest.json"));
    CHECK(manifest["certified"] == false);
    CHECK(manifest["exit_code"] == 2);
  }

  TEST_CASE("iso oracle mode") {
    const fs::path dir = workspace("iso");
    json cfg = laminate_config();
    cfg["iso"] = {{"n", 5}, {"volume", 0.32}, {"oracle", true}};
    const Invocation r = invoke({"iso", "--config", write_config(dir, cfg).string(), "--out", (dir / "o").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("ORACLE MATCH") != std::string::npos);
    const std::string rle = io::read_text(dir / "o" / "mask.rle");
    const BitMask m = io::mask_from_rle(rle, Grid::box(5, 1.0));
    CHECK(m.count() == 8);
  }

  TEST_CASE("selftest") {
    const Invocation ok = invoke({"selftest"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("SELFTEST PASSED") != std::string::npos);
    const Invocation bad = invoke({"selftest", "--inject-fault", "adjointness"});
    CHECK(bad.code == 2);
    CHECK(bad.out.find("SELFTEST FAILED") != std::string::npos);
  }
}
