#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "latentgs/rng.hpp"

namespace latentgs {

double softplus(double x);
double sigmoid(double x);
/// Inverse of softplus for y > 0.
double inverse_softplus(double y);

enum class Activation { softplus, identity };

/// Dense layer whose effective weights are row-rescaled so that every row's
/// absolute sum stays within softplus(c):
///   W_eff = diag(min(1, softplus(c) / sum_k |W_rk|)) W,  y = act(W_eff x + b).
/// Parameters live in the owning network's flat vector as W (column-major), b, c.
struct LipschitzLayer {
  int in = 0;
  int out = 0;
  Activation activation = Activation::softplus;
  bool rescale = true;
  std::size_t offset = 0;

  std::size_t weight_offset() const { return offset; }
  std::size_t bias_offset() const { return offset + static_cast<std::size_t>(in) * out; }
  std::size_t bound_offset() const { return bias_offset() + static_cast<std::size_t>(out); }
  std::size_t param_count() const { return static_cast<std::size_t>(in) * out + out + 1; }
};

/// Primal values recorded by a forward pass; enough to run reverse mode for
/// any scalar function of the output.
struct GradientTape {
  std::vector<Eigen::MatrixXd> inputs;
  /// act'(W_eff x + b); empty for identity layers.
  std::vector<Eigen::MatrixXd> slopes;
  std::vector<Eigen::MatrixXd> effective_weights;
  std::vector<Eigen::VectorXd> row_scales;
  std::vector<Eigen::VectorXd> row_sums;
};

/// Feed-forward stack of LipschitzLayers over a single flat parameter vector.
/// Batched inputs are (features x batch) matrices.
class Network {
 public:
  Network() = default;
  Network(const std::vector<int>& widths, const std::vector<Activation>& activations,
          bool rescale = true);

  int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  const std::vector<LipschitzLayer>& layers() const { return layers_; }
  std::vector<LipschitzLayer>& layers() { return layers_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  double& bound(std::size_t layer) { return params_[static_cast<Eigen::Index>(layers_[layer].bound_offset())]; }
  double bound(std::size_t layer) const { return params_[static_cast<Eigen::Index>(layers_[layer].bound_offset())]; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; each bound c
  /// is set so softplus(c) equals the initial maximum row sum.
  void initialize(Rng& rng);

  /// Resets c so that softplus(c) equals the current max row sum of W.
  void reset_bounds();

  Eigen::MatrixXd effective_weight(std::size_t layer) const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, GradientTape* tape = nullptr) const;

  /// Reverse pass for upstream gradient dL/dy. Adds dL/dparams into `grad`
  /// when it is non-null and returns dL/dx.
  Eigen::MatrixXd backward(const GradientTape& tape, const Eigen::MatrixXd& dy,
                           Eigen::VectorXd* grad) const;

 private:
  std::vector<LipschitzLayer> layers_;
  Eigen::VectorXd params_;
};

/// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               double learning_rate);

/// Halves the learning rate once the monitored loss has gone more than
/// `patience` consecutive epochs without improving the best value by at least
/// `threshold`; the counter restarts after every reduction.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double learning_rate, double factor = 0.5, int patience = 10,
                            double threshold = 1e-8)
      : lr_(learning_rate), factor_(factor), patience_(patience), threshold_(threshold) {}

  /// Feeds one epoch's loss and returns the learning rate for the next epoch.
  double step(double loss);
  double learning_rate() const { return lr_; }
  int reductions() const { return reductions_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double threshold_;
  double best_ = 0.0;
  bool has_best_ = false;
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

/// Stops once `patience` consecutive epochs fail to improve the best loss by
/// at least `min_delta`.
class EarlyStopping {
 public:
  explicit EarlyStopping(double min_delta = 1e-10, int patience = 30)
      : min_delta_(min_delta), patience_(patience) {}

  /// Returns true when training should stop after this epoch.
  bool update(double loss);
  int stale_epochs() const { return stale_; }

 private:
  double min_delta_;
  int patience_;
  double best_ = 0.0;
  bool has_best_ = false;
  int stale_ = 0;
};

}  // namespace latentgs
