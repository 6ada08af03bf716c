#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "latentgs/ground_state.hpp"
#include "latentgs/hubbard.hpp"
#include "latentgs/rng.hpp"

namespace latentgs {

/// omega: the 3L observable vector; gamma: the flattened L^4 two-particle RDM.
enum class FeatureMode { omega, gamma };

std::string to_string(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& text);

struct DatasetRecord {
  std::vector<double> mu;
  std::vector<double> features;
  double energy = 0.0;
  std::uint64_t seed_tag = 0;

  bool operator==(const DatasetRecord&) const = default;
};

struct DatasetHeader {
  static constexpr int kFormatVersion = 1;

  int sites = 0;
  int electrons = 0;
  double hopping = 1.0;
  double interaction = 4.0;
  FeatureMode mode = FeatureMode::omega;
  std::size_t n_records = 0;
  bool augmented = false;
  std::uint64_t seed = 0;
  int version = kFormatVersion;

  std::size_t feature_dim() const;
  /// Doubles per record: mu, features, energy, seed_tag.
  std::size_t record_width() const { return static_cast<std::size_t>(sites) + feature_dim() + 2; }

  HubbardInstance instance(std::span<const double> mu) const;

  nlohmann::json to_json() const;
  static DatasetHeader from_json(const nlohmann::json& j);
};

struct Dataset {
  DatasetHeader header;
  std::vector<DatasetRecord> records;
};

/// Potential sampler parameters in units of t.
struct PotentialSampler {
  double strength_min = 0.005;
  double strength_max = 2.5;
  double sigma_max = 0.4;
  std::size_t max_attempts = 1'000'000;
};

/// Population standard deviation over sites, sqrt(<mu^2> - <mu>^2).
double potential_sigma(std::span<const double> mu);

/// |mu - mean(mu)|_2, the strength used to colour latent-space plots.
double potential_strength(std::span<const double> mu);

/// Rejection sampler: W ~ U[strength_min, strength_max], mu_i ~ U[-W, W]
/// i.i.d., accepted when potential_sigma(mu) < sigma_max.
std::vector<double> sample_potential(int sites, Rng& rng, const PotentialSampler& sampler = {},
                                     double hopping = 1.0);

struct GenerateOptions {
  int sites = 4;
  int electrons = 2;
  double hopping = 1.0;
  double interaction = 4.0;
  std::size_t n_inst = 0;
  FeatureMode mode = FeatureMode::omega;
  std::uint64_t seed = 0;
  int threads = 1;
  PotentialSampler sampler;
  SolverOptions solver;
};

/// Solves one instance and returns its record.
DatasetRecord solve_record(const DatasetHeader& header, std::vector<double> mu,
                           std::uint64_t seed_tag, const SolverOptions& solver = {});

/// Record i draws its potential from an RNG seeded by derive_seed(seed, i), so
/// the output does not depend on the number of worker threads.
Dataset generate_dataset(const GenerateOptions& options);

/// Maps every omega-mode record onto its 2L lattice images (identity first).
std::vector<DatasetRecord> augment_symmetries(std::span<const DatasetRecord> records, int sites,
                                              FeatureMode mode);

struct SplitRatios {
  double train = 0.81;
  double val = 0.09;
  double test = 0.10;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded permutation of [0, n) cut into disjoint train/val/test index sets.
SplitIndices split_dataset(std::size_t n, std::uint64_t seed, const SplitRatios& ratios = {});

/// Per-feature affine standardization fit on the training split.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale);

  /// Columns of `x` are samples. Features with std < 1e-12 get scale 1.
  static Standardizer fit(const Eigen::MatrixXd& x);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  std::size_t constant_features() const { return n_constant_; }
  Eigen::Index dim() const { return mean_.size(); }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  std::size_t n_constant_ = 0;
};

/// Feature columns of the given records as a (feature_dim x n) matrix.
Eigen::MatrixXd feature_matrix(std::span<const DatasetRecord> records);

/// Energy-contraction coefficients matching the feature layout of `mode`.
Eigen::VectorXd energy_coefficients(const HubbardInstance& instance, FeatureMode mode);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

struct PrepareOptions {
  std::uint64_t split_seed = 0;
  bool augment = true;
  /// Use only the first `max_parents` parent records when nonzero.
  std::size_t max_parents = 0;
  SplitRatios ratios;
};

/// Splits at the parent level, augments the training split only (omega mode),
/// then fits the standardizer on the training features.
struct PreparedData {
  PrepareOptions options;
  DatasetHeader header;
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> val;
  std::vector<DatasetRecord> test;
  Standardizer standardizer;
  Eigen::MatrixXd train_x;
  Eigen::MatrixXd val_x;
  Eigen::MatrixXd test_x;
};

PreparedData prepare_data(const Dataset& dataset, const PrepareOptions& options);

}  // namespace latentgs
