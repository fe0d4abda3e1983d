#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sppm/core.hpp"
#include "sppm/sampler.hpp"
#include "sppm/summary.hpp"

namespace sppm {

enum class ModelMode { NoClustering, Ppm, SppmG1, SppmG2, SppmG3, SppmG4 };

ModelMode parse_model_mode(const std::string& name);
std::string to_string(ModelMode mode);
SimilarityKind similarity_of(ModelMode mode);

struct EmitFlags {
  bool draws = true;
  bool cocluster = true;
  bool geojson = true;
  bool bands = true;
};

struct RunConfig {
  std::filesystem::path series_path;
  std::filesystem::path stations_path;
  std::filesystem::path out_dir;
  Hyperparams hyper;
  ChainConfig chain;
  ModelMode mode = ModelMode::Ppm;
  LossKind loss = LossKind::Vi;
  EmitFlags emit;
  int chains = 1;
  /// Fill mu0/Lambda0 from the coordinate sample unless the caller set them.
  bool niw_from_data = true;

  void validate() const;
};

/// Long-format ingestion. The stations file has columns station_id,lon,lat;
/// the series file station_id,date,value. Every station must carry a value
/// for every date in the file's date grid; gaps, duplicates, unknown
/// stations and unparseable fields are hard errors.
Dataset ingest(const std::filesystem::path& series_path,
               const std::filesystem::path& stations_path);

/// Inverse of ingest: long series.csv plus stations.csv, values printed
/// with 17 significant digits so the round trip is exact.
void emit_dataset(const Dataset& data, const std::filesystem::path& series_path,
                  const std::filesystem::path& stations_path);

/// Wide convenience export: date column plus one column per station.
void emit_wide(const Dataset& data, const std::filesystem::path& path);

struct SyntheticCluster {
  int size = 0;
  double phi = 0.5;
  double tau2 = 1.0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double spread = 0.1;
};

struct SyntheticSpec {
  int t_len = 200;
  std::uint64_t seed = 1;
  std::string start_date = "2019-01-01";
  std::vector<SyntheticCluster> clusters;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(4);
  double sigma2 = 1.0;
  std::string station_prefix = "S";

  int n() const;
  void validate() const;
};

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

struct SyntheticData {
  Dataset data;
  Partition truth;
  std::vector<Ar1Params> atoms;
};

/// Forward simulation of the observation model: stationary AR(1) latent
/// series per station (w_1 from the stationary marginal), seasonal
/// regression mean, Gaussian noise. Returns the generating partition and
/// atoms for recovery tests.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Writes the synthetic dataset plus a truth.json with the generating
/// partition and atoms into `out_dir`.
void emit_synthetic(const SyntheticData& synth, const std::filesystem::path& out_dir);

void write_draws_jsonl(const std::filesystem::path& path,
                       const std::vector<PosteriorDraws>& per_chain);
PosteriorDraws read_draws_jsonl(const std::filesystem::path& path);

void write_cocluster_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& station_ids, const CoclusterMatrix& cc);
void write_partition_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& station_ids, const Partition& partition,
                         const std::vector<ClusterParamSummary>& clusters);
void write_geojson(const std::filesystem::path& path, const Dataset& data,
                   const Partition& partition, const std::vector<ClusterParamSummary>& clusters);

struct BandsRow {
  int cluster = 0;
  std::string time;
  double mean = 0, q05 = 0, q25 = 0, q75 = 0, q95 = 0;
};

/// Per (cluster, time): mean and 5/25/75/95 percentiles across the member
/// stations' observed series (quantiles by linear interpolation).
std::vector<BandsRow> emit_bands(const Dataset& data, const Partition& partition);

void write_bands_csv(const std::filesystem::path& path, std::span<const BandsRow> rows);

struct RunResult {
  Partition point_estimate;
  double expected_loss = 0.0;
  std::vector<ClusterParamSummary> clusters;
  double seconds_per_iter = 0.0;
};

/// Full batch pipeline on an already-loaded dataset: fit chain(s), emit
/// draws/cocluster, search the point estimate, conditionally re-estimate
/// cluster parameters, and write every requested artifact to out_dir.
RunResult run_with_dataset(const RunConfig& config, const Dataset& data);

/// ingest + run_with_dataset.
RunResult run(const RunConfig& config);

/// summarize subcommand: point estimate and within-cluster parameter
/// averages recomputed from a stored draws.jsonl.
void summarize_draws(const std::filesystem::path& draws_path, LossKind loss,
                     const std::filesystem::path& out_dir, std::uint64_t seed);

/// ISO date `days` days after `start`.
std::string add_days(const std::string& start, int days);

}  // namespace sppm
