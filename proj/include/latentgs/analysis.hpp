#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "latentgs/autoencoder.hpp"
#include "latentgs/dataset.hpp"
#include "latentgs/latent_vqe.hpp"
#include "latentgs/training.hpp"

namespace latentgs {

// ---------------------------------------------------------------------------
// Run metadata

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// {tool, version, command, config, config_hash, seed, created_utc}. Only
/// created_utc differs between two runs with the same inputs.
nlohmann::json run_manifest(const std::string& command, const nlohmann::json& config,
                            std::uint64_t seed);

/// `<output>.manifest.json` next to an artifact.
std::filesystem::path manifest_path(const std::filesystem::path& output);
void write_manifest(const std::filesystem::path& output, const nlohmann::json& manifest);

// ---------------------------------------------------------------------------
// Train-and-evaluate jobs

/// Everything that determines one trained model apart from the dataset itself.
struct TrainJob {
  std::size_t n_parents = 0;  // 0 keeps every parent record
  std::uint64_t split_seed = 0;
  int latent_dim = 1;
  LossWeights weights;
  TrainConfig config;  // config.seed is the initialization seed

  nlohmann::json to_json() const;
};

struct JobOptions {
  /// Cache directory for trained models; empty disables caching.
  std::filesystem::path model_dir;
  /// Run latent energy minimization on the first `vqe_potentials` test parents.
  bool evaluate_vqe = false;
  std::size_t vqe_potentials = 200;
  LatentOptConfig vqe;
};

struct JobOutcome {
  AutoencoderModel model;
  int epochs = 0;
  int best_epoch = 0;
  bool from_cache = false;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
  double test_rmse_raw = std::numeric_limits<double>::quiet_NaN();
  EnergyErrorSummary opt;
  std::vector<OptResult> opt_results;
};

/// Cache file for `job` on `dataset` inside `dir`; the name carries a hash of
/// the dataset header and the job so stale models are never reused.
std::filesystem::path cached_model_path(const std::filesystem::path& dir, const DatasetHeader& dataset,
                                        const TrainJob& job);

/// Trains (or loads from cache) and evaluates one model.
JobOutcome run_train_job(const Dataset& dataset, const TrainJob& job, const JobOptions& options);

// ---------------------------------------------------------------------------
// Compression / data-efficiency sweep

struct SweepConfig {
  std::vector<int> latent_dims;
  std::vector<std::uint64_t> seeds;
  /// Parent counts for data-efficiency curves; {0} uses every parent.
  std::vector<std::size_t> dataset_sizes{0};
  std::uint64_t split_seed = 0;
  LossWeights weights;
  TrainConfig train;
  JobOptions job;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SweepConfig from_json(const nlohmann::json& j);
};

struct CompressionRow {
  int sites = 0;
  int electrons = 0;
  FeatureMode mode = FeatureMode::omega;
  std::size_t n_parents = 0;
  int latent_dim = 0;
  std::uint64_t seed = 0;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
  double test_rmse_raw = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse = std::numeric_limits<double>::quiet_NaN();
  double opt_relative_rmse = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse_all = std::numeric_limits<double>::quiet_NaN();
  double retained = std::numeric_limits<double>::quiet_NaN();
  int epochs = 0;
  int best_epoch = 0;
  /// Empty on success; the failure message otherwise.
  std::string error;
};

struct SweepResult {
  std::vector<CompressionRow> rows;
};

using JobProgress = std::function<void(const CompressionRow&)>;

/// One row per (dataset, size, d, seed). Jobs run on `config.threads` workers;
/// a failing job fills `error` and the sweep continues. Rows are sorted by
/// (L, N, mode, n_parents, d, seed).
SweepResult run_compression_sweep(std::span<const Dataset> datasets, const SweepConfig& config,
                                  const JobProgress& progress = {});

void write_sweep_result_csv(const std::filesystem::path& path, const SweepResult& result);

struct DimStatistics {
  int latent_dim = 0;
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
};

/// Mean and sample std of test_rmse per latent dimension over successful rows
/// (optionally restricted to one system size and parent count).
std::vector<DimStatistics> rmse_by_dimension(const SweepResult& result, int sites = 0,
                                             std::size_t n_parents = 0);

// ---------------------------------------------------------------------------
// Ablation

enum class AblationVariant { full, rec_only, no_lip, no_well, no_repel, linear };

std::string to_string(AblationVariant variant);
AblationVariant parse_ablation_variant(const std::string& text);
std::vector<AblationVariant> all_ablation_variants();

/// Loss weights and training settings of `variant` derived from the full model.
struct VariantSettings {
  LossWeights weights;
  TrainConfig config;
};
VariantSettings variant_settings(AblationVariant variant, const LossWeights& full, const TrainConfig& config);

struct AblationConfig {
  std::vector<AblationVariant> variants = all_ablation_variants();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int latent_dim = 0;  // 0 means L - 1
  std::size_t n_parents = 0;
  std::uint64_t split_seed = 0;
  LossWeights weights;
  TrainConfig train;
  JobOptions job;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static AblationConfig from_json(const nlohmann::json& j);
};

struct AblationRun {
  AblationVariant variant = AblationVariant::full;
  std::uint64_t seed = 0;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse = std::numeric_limits<double>::quiet_NaN();
  double opt_relative_rmse = std::numeric_limits<double>::quiet_NaN();
  /// Over all optimized potentials, rejected ones included.
  double opt_rmse_all = std::numeric_limits<double>::quiet_NaN();
  double retained = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

/// Mean and sample std over seeds. The opt statistics use the seeds that
/// retained at least one point; with none they stay NaN.
struct AblationSummary {
  AblationVariant variant = AblationVariant::full;
  std::size_t runs = 0;
  double test_rmse_mean = std::numeric_limits<double>::quiet_NaN();
  double test_rmse_std = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse_mean = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse_std = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse_all_mean = std::numeric_limits<double>::quiet_NaN();
  double opt_rmse_all_std = std::numeric_limits<double>::quiet_NaN();
  double retained_mean = std::numeric_limits<double>::quiet_NaN();
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> summary;

  const AblationSummary& find(AblationVariant variant) const;
};

AblationResult run_ablation(const Dataset& dataset, const AblationConfig& config);

/// sqrt((s_a^2 + s_b^2) / 2); NaN entries count as zero spread.
double pooled_std(double std_a, double std_b);

void write_ablation_runs_csv(const std::filesystem::path& path, const AblationResult& result);
void write_ablation_summary_csv(const std::filesystem::path& path, const AblationResult& result);

// ---------------------------------------------------------------------------
// Encoder interpretability

/// Coordinates in which the encoder Jacobian is reported. Standardized is
/// d z / d x_std; raw divides each column by the feature scale.
enum class JacobianSpace { standardized, raw };

struct FeatureBlock {
  std::string name;
  Eigen::Index begin = 0;
  Eigen::Index size = 0;
};

/// {hop, dens, docc} for omega features, a single block for the 2-RDM.
std::vector<FeatureBlock> feature_blocks(const DatasetHeader& header);

struct JacobianReport {
  std::size_t n_samples = 0;
  Eigen::MatrixXd mean;      // d x n_in, signed
  Eigen::MatrixXd mean_abs;  // d x n_in
  Eigen::MatrixXd std;       // d x n_in, population std over samples
  /// sum(std) / sum(|mean|); zero for an exactly linear encoder.
  double variability_ratio = 0.0;
  std::vector<FeatureBlock> blocks;
  /// Sample mean of the per-sample relative Frobenius contributions.
  std::vector<double> block_contributions;
};

/// Per-sample Jacobians from d reverse passes through the encoder. `x_std`
/// holds standardized samples as columns; at most `max_samples` are used.
JacobianReport encoder_jacobian_report(const AutoencoderModel& model, const Eigen::MatrixXd& x_std,
                                       std::size_t max_samples = 10000,
                                       JacobianSpace space = JacobianSpace::standardized);

/// Relative Frobenius norm of each block of one Jacobian; sums to one unless J = 0.
std::vector<double> relative_frobenius(const Eigen::MatrixXd& jacobian, std::span<const FeatureBlock> blocks);

void write_jacobian_csv(const std::filesystem::path& path, const JacobianReport& report);
void write_block_contributions_csv(const std::filesystem::path& path, const JacobianReport& report);

// ---------------------------------------------------------------------------
// Degenerate ground states

struct DegeneracyReport {
  int sites = 0;
  int electrons = 0;
  /// Lowest singlet levels at mu = 0, ascending with multiplicity.
  std::vector<double> singlet_energies;
  /// Lowest sector levels of any spin.
  std::vector<double> sector_energies;
  double gap_1 = std::numeric_limits<double>::infinity();  // E1 - E0 (singlets)
  double gap_2 = std::numeric_limits<double>::infinity();  // E2 - E0 (singlets)
  bool degenerate = false;                                  // gap_1 < tol

  nlohmann::json to_json() const;
};

DegeneracyReport ground_state_gaps(int sites, int electrons, double hopping = 1.0, double interaction = 4.0,
                                   double degeneracy_tol = 1e-8);

// ---------------------------------------------------------------------------
// Latent geometry export

struct LatentGeometry {
  Eigen::MatrixXd z;         // d x n
  Eigen::VectorXd z_norm;    // n
  Eigen::VectorXd strength;  // n, |mu - mean(mu)|_2
};

/// Encodes every record (parents, not augmented) with the model's standardizer.
LatentGeometry export_latent_geometry(const AutoencoderModel& model, std::span<const DatasetRecord> records);

/// Columns z_1..z_d, z_norm, strength.
void write_latent_geometry_csv(const std::filesystem::path& path, const LatentGeometry& geometry);

/// Linear-interpolated quantile q in [0, 1] of the values.
double quantile(std::vector<double> values, double q);

}  // namespace latentgs
