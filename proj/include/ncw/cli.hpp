// JSON-configured command line: density | mc | outliers | compare.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure on more than
// 10% of the grid (or every MC trial failed), 4 a configured threshold failed.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncw/core.hpp"
#include "ncw/montecarlo.hpp"
#include "ncw/pastur.hpp"

namespace ncw::cli {

using Json = nlohmann::json;

enum ExitCode { kOk = 0, kConfigError = 2, kSolverFailure = 3, kThresholdFailed = 4 };

struct ConfigError : Error {
  using Error::Error;
};

// Where the ensemble came from, kept so the configuration can be echoed.
struct EnsembleSource {
  Json description;  // normalized: builder parameters, inline matrices or file paths
  EnsembleSpec spec;
};

struct GridSpec {
  enum class Mode { Auto, Range, Values } mode = Mode::Auto;
  double min = 0.0;
  double max = 0.0;
  int points = 200;
  std::vector<double> values;
};

struct Thresholds {
  std::optional<double> sup;
  std::optional<double> kolmogorov;
  std::optional<double> outlier_relative;
};

struct RunConfig {
  EnsembleSource ensemble;
  std::string variant = "auto";  // as requested
  Variant resolved = Variant::Cwe;
  GridSpec grid;
  SolverConfig solver;
  std::optional<McConfig> mc;
  Thresholds thresholds;
  std::vector<int> outlier_indices;          // empty: the largest spike
  std::optional<EnsembleSource> mc_ensemble;  // sample from a different spec
};

// Parses a configuration document. Relative matrix paths resolve against
// base_dir. Throws ConfigError (or a spec error) on invalid input.
RunConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

// Normalized echo; parse_config(config_to_json(c)) reproduces c.
Json config_to_json(const RunConfig& cfg);

// Row-major CSV matrix without header.
Matrix read_matrix_csv(const std::filesystem::path& path);

// 64-bit FNV-1a over the defining data of a spec, as 16 hex digits.
std::string spec_digest(const EnsembleSpec& spec);

// Grid of the configuration (auto grids come from the bulk locator, so this
// returns the solved curve directly).
DensityCurve theory_curve(const RunConfig& cfg);

// Prediction records as emitted by the outliers command. Records with
// "status" other than "ok" carry a "reason" instead of numbers.
Json outlier_records(const RunConfig& cfg);

int cmd_density(const RunConfig& cfg, const std::filesystem::path& out_dir);
int cmd_mc(const RunConfig& cfg, const std::filesystem::path& out_dir);
int cmd_outliers(const RunConfig& cfg, const std::filesystem::path& out_dir);
int cmd_compare(const RunConfig& cfg, const std::filesystem::path& out_dir);

// Entry point of the ncwishart executable.
int run(int argc, char** argv);

}  // namespace ncw::cli
