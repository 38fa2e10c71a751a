#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stablenorm/isoperimetric.hpp"
#include "stablenorm/planelike.hpp"
#include "stablenorm/stable_norm.hpp"

namespace stablenorm::io {

using json = nlohmann::ordered_json;

/// Thrown for malformed or schema-violating input; the message names the offending key.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& s);

// ---------------------------------------------------------------------------
// media

/// {"kind", "base_norm", "params"}; sampled media carry "n" and "values" in params.
json medium_to_json(const MediumSpec& spec);
/// Unknown keys are rejected. A sampled medium may give params.csv instead of
/// params.values, resolved against `base_dir`.
MediumSpec medium_from_json(const json& j, const std::filesystem::path& base_dir = {});

/// Header "a", then n*n values row-major.
void write_sampled_csv(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_sampled_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// fields

json grid_to_json(const Grid& g);
Grid grid_from_json(const json& j);

/// CSV with header "u" (scalar) or "z0,z1[,z2]" (vector), one line per cell,
/// plus a JSON header {"grid", "kind", "columns", "rows"} next to it.
void write_field(const std::filesystem::path& csv, const std::filesystem::path& header, const ScalarField& f);
void write_field(const std::filesystem::path& csv, const std::filesystem::path& header, const VectorField& f);
ScalarField read_scalar_field(const std::filesystem::path& csv, const std::filesystem::path& header);
VectorField read_vector_field(const std::filesystem::path& csv, const std::filesystem::path& header);

// ---------------------------------------------------------------------------
// masks

/// Header "index", one set cell per line.
std::string mask_to_csv(const BitMask& m);
BitMask mask_from_csv(const std::string& text, const Grid& g);
/// Alternating run lengths starting with a run of zeros, e.g. "3 2 4".
std::string mask_to_rle(const BitMask& m);
BitMask mask_from_rle(const std::string& text, const Grid& g);

// ---------------------------------------------------------------------------
// results

inline constexpr const char* fan_columns = "angle,px,py,phi,gap,certified,sgx,sgy";
std::string fan_to_csv(const FanResult& fan);
FanResult fan_from_csv(const std::string& text);

/// Header "x,y,normal_x,normal_y,support" (outgoing edge of each vertex).
std::string wulff_to_csv(const WulffShape& w);
json wulff_to_json(const WulffShape& w);

json to_json(const CellSolution& sol);
json to_json(const FacetReport& r);
json to_json(const ConvexityReport& r);
json to_json(const SlabReport& r);
json to_json(const BirkhoffReport& r);
json to_json(const LaminationReport& r);
json to_json(const CalibrationReport& r);
json to_json(const IsoResult& r);
json to_json(const ShapeMetrics& m);
json to_json(const RescaleReport& r);

// ---------------------------------------------------------------------------
// files

std::string read_text(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string sha256_hex(const std::string& bytes);

}  // namespace stablenorm::io
