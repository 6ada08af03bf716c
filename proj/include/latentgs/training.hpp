#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "latentgs/autoencoder.hpp"
#include "latentgs/dataset.hpp"

namespace latentgs {

/// Weights of the auxiliary loss terms plus the well radius and the
/// repulsion stabilizer.
struct LossWeights {
  double alpha = 1e-7;  // radial well
  double beta = 1e-7;   // contrastive repulsion
  double gamma = 1e-9;  // encoder Lipschitz bounds
  double delta = 1e-8;  // decoder Lipschitz bounds
  double radius = 2.0;
  double epsilon = 1e-8;

  static LossWeights reconstruction_only();
  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

/// Scalar loss and its gradient with respect to the matrix argument named in
/// each function's comment.
struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

/// mean_i |x_i - y_i|^2; gradient w.r.t. the reconstruction y.
LossValue loss_rec(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// mean_i max(0, |z_i| - r)^2; gradient w.r.t. z.
LossValue loss_well(const Eigen::MatrixXd& z, double radius);

/// sum_{i<j} a_ij / (q_ij + eps) / sum_{i<j} a_ij with a, q the squared
/// pairwise distances in x and z. Zero for batches under two samples or when
/// every a_ij vanishes. Gradient w.r.t. z.
LossValue loss_repel(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, double epsilon);

/// sum over rescaled layers of log softplus(c). Adds d/dc into `grad`.
double loss_lip(const Network& net, Eigen::VectorXd* grad = nullptr);

struct LossTerms {
  double rec = 0.0;
  double well = 0.0;
  double repel = 0.0;
  double lip_enc = 0.0;
  double lip_dec = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms& operator*=(double s);
};

/// Objective on one batch of standardized samples (columns). Gradient
/// buffers, when given, are overwritten.
LossTerms evaluate_objective(const AutoencoderModel& model, const Eigen::MatrixXd& x,
                             const LossWeights& weights, Eigen::VectorXd* encoder_grad = nullptr,
                             Eigen::VectorXd* decoder_grad = nullptr);

/// Objective averaged over consecutive batches of `x` in column order.
LossTerms batched_objective(const AutoencoderModel& model, const Eigen::MatrixXd& x,
                            const LossWeights& weights, int batch_size);

struct TrainConfig {
  int batch_size = 256;
  int max_epochs = 3000;
  double early_stop_delta = 1e-10;
  int early_stop_patience = 30;
  double learning_rate = 4e-3;
  double plateau_factor = 0.5;
  int plateau_patience = 10;
  double plateau_threshold = 1e-8;
  std::uint64_t seed = 0;
  double width_scale = 20.0;
  bool linear = false;
  bool rescale_heads = true;
  /// After every epoch, minimize the objective along the reconstruction-
  /// preserving orbit z -> s z (see AutoencoderModel::rescale_latent). Only the
  /// well, repulsion and two Lipschitz terms vary along it; skipped when
  /// alpha = 0 because the orbit then has no minimum.
  bool latent_scale_search = true;
  /// Training columns used to evaluate the orbit objective.
  int scale_search_samples = 4096;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  LossTerms train;
  LossTerms val;
};

struct TrainResult {
  AutoencoderModel model;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  double test_rmse = 0.0;      // standardized units
  double test_rmse_raw = 0.0;  // physical units
};

/// Per-epoch callback; used for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Builds the architecture for `latent_dim` from `config`, trains with Adam on
/// shuffled mini-batches, halves the learning rate on validation plateaus and
/// stops early on the total validation loss. Returns the best-validation model.
TrainResult train(const PreparedData& data, int latent_dim, const LossWeights& weights,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Architecture used by train() for a given configuration.
Architecture training_architecture(const DatasetHeader& header, int latent_dim, const TrainConfig& config);

/// Outcome of one orbit search: the applied factor and the objective change.
struct ScaleSearchResult {
  double factor = 1.0;
  double improvement = 0.0;
};

/// Golden-section search for s in [1/2, 2] minimizing the auxiliary terms on
/// `x` (columns, processed in batches of `batch_size`). Applies the best factor
/// to the model when it lowers the objective.
ScaleSearchResult latent_scale_search(AutoencoderModel& model, const Eigen::MatrixXd& x,
                                      const LossWeights& weights, int batch_size);

/// Root mean squared reconstruction error per feature, in standardized units.
double reconstruction_rmse(const AutoencoderModel& model, const Eigen::MatrixXd& x_std);
/// Same error measured after undoing the standardization.
double reconstruction_rmse_raw(const AutoencoderModel& model, const Eigen::MatrixXd& x_std);

/// CSV columns: epoch, train_loss, val_loss, lr, then the train/val terms.
void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

}  // namespace latentgs
