#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stablenorm/io.hpp"

namespace stablenorm::cli {

inline constexpr const char* version = "1.0.0";

struct PhiBlock {
  Vec p = vec2(1.0, 0.0);
  bool dump_fields = false;
};

struct FanBlock {
  int directions = 16;
  double offset = 0.0;
};

struct FacetsBlock {
  std::vector<std::array<int, 3>> p{{0, 1, 0}, {1, 0, 0}};
  FacetParams probe;
};

struct WulffBlock {
  int directions = 64;
  int convexity_pairs = 0;
  double min_angle = 10.0;
};

struct PlanelikeBlock {
  std::vector<std::array<int, 3>> p{{1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 1, 0}};
  double s = 0.0;
  int copies = 3;
  int q_max = 3;
  double eta = -1.0;
};

struct IsoBlock {
  IsoParams params;
  bool auto_mu = false;
  bool oracle = false;
};

struct RescaleBlock {
  RescaleParams params;
  int fan_n = 64;
  int directions = 64;
};

/// Parsed and validated configuration. Every block has defaults; the medium is required.
struct RunConfig {
  MediumSpec medium;
  int n = 64;  // torus cells per side
  SolverParams solver;
  std::filesystem::path output = "out";
  int workers = 1;
  std::uint64_t seed = 0;
  PhiBlock phi;
  FanBlock fan;
  FacetsBlock facets;
  WulffBlock wulff;
  PlanelikeBlock planelike;
  IsoBlock iso;
  RescaleBlock rescale;
};

/// Throws io::SchemaError on any schema violation, including unknown keys.
RunConfig parse_config(const io::json& j, const std::filesystem::path& base_dir = {});

inline constexpr std::array<const char*, 7> commands{"phi", "fan", "facets", "wulff", "planelike", "iso", "rescale"};

/// Exit codes: 0 certified, 1 usage or configuration error, 2 uncertified.
int run_command(const std::string& command, const RunConfig& cfg, const std::string& config_text, std::ostream& out,
                std::ostream& err);

enum class Fault { none, adjointness };

int selftest(Fault fault, std::ostream& out);

/// Entry point of the command-line tool; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stablenorm::cli
