#ifndef HESSFIT_IO_HPP
#define HESSFIT_IO_HPP

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>

#include "hessfit/experiments.hpp"
#include "hessfit/manifold.hpp"

namespace hessfit {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// File persistence (atomic: temp file in the same directory, then rename).
// Floats are written with 17 significant digits, '.' decimal, no locale.
// ---------------------------------------------------------------------------

void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

void write_cloud_csv(const std::string& path, const PointCloud& cloud,
                     const Json& meta);
PointCloud read_cloud_csv(const std::string& path);  // sidecar optional
std::optional<Json> read_cloud_meta(const std::string& path);

void write_vector_csv(const std::string& path, const Vec& v, const std::string& header);
Vec read_vector_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Config parsing. Unknown keys are rejected with the offending key named.
// ---------------------------------------------------------------------------

ManifoldModel model_from_json(const Json& j);
Json model_to_json(const ManifoldModel& m);
DensityModel density_from_json(const ManifoldModel& m, const Json& j);
Json density_to_json(const DensityModel& rho);
ScalarField field_from_json(const ManifoldModel& m, const Json& j);

struct SampleConfig {
  ManifoldModel model = ManifoldModel::sphere(2);
  DensityModel density = DensityModel::uniform(ManifoldModel::sphere(2));
  std::optional<ScalarField> field;
  long n = 1000;
  std::uint64_t seed = 0;
};

struct EstimateConfig {
  std::string cloud_path;
  std::string fvals;        // path to a CSV or a catalog field name
  std::string z;            // comma-separated coordinates or "index:<i>"
  double eps = 0.1;
  int dim = 2;
  std::string out_path;
};

struct MomentsConfig {
  int d = 2;
  double delta = 0.0;
  double eps = 0.1;
  long mc_samples = 1000000;
  std::uint64_t seed = 0;
  std::string report_path;
};

struct GramCliConfig {
  GramConfig gram;
  std::string out_path;
};

struct ConvergeCliConfig {
  ConvergenceConfig conv;
  std::string out_prefix;
};

enum class Subcommand { Sample, Estimate, Moments, Gram, Converge };

struct RunConfig {
  Subcommand sub = Subcommand::Sample;
  SampleConfig sample;
  std::string sample_out = "cloud.csv";
  std::string sample_fvals_out;
  EstimateConfig estimate;
  MomentsConfig moments;
  GramCliConfig gram;
  ConvergeCliConfig converge;
};

SampleConfig parse_sample_config(const Json& j);
Json sample_config_to_json(const SampleConfig& c);
ConvergenceConfig parse_converge_config(const Json& j);
Json converge_config_to_json(const ConvergenceConfig& c);
GramConfig parse_gram_config(const Json& j);

// Parse a full run config document {"subcommand": ..., ...}.
RunConfig parse_config(const std::string& text);

// Dispatch; returns the process exit status (0 ok, 2 validation, 3 numerical).
int run(const RunConfig& config);

// report writers (used by run() and by tests)
void write_convergence_outputs(const ConvergenceReport& rep,
                               const ConvergenceConfig& cfg,
                               const std::string& out_prefix);
void write_gram_csv(const GramReport& rep, const std::string& path);
std::string moments_report_csv(const MomentsConfig& cfg);

}  // namespace hessfit

#endif
