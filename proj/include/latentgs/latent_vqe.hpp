#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "latentgs/autoencoder.hpp"

namespace latentgs {

struct LatentOptConfig {
  /// Initial trial step of every backtracking line search.
  double step = 8e-2;
  /// Convergence threshold on |dE/dz|, the gradient without the well term.
  double grad_tol = 3e-4;
  double r_opt = 3.0;
  /// Weight of the absorbing well w (|z| - r_opt)^2 outside r_opt.
  double w_abs = 1.0;
  int max_iter = 500;
  int history = 10;
  double armijo = 1e-4;
  int max_backtracks = 40;

  void validate() const;
  nlohmann::json to_json() const;
  static LatentOptConfig from_json(const nlohmann::json& j);
};

/// E(z) = h(mu) . destandardize(decode(z)) for a fixed potential. h is the
/// observable or 2-RDM coefficient vector matching the model's feature mode.
class LatentEnergy {
 public:
  LatentEnergy(const AutoencoderModel& model, std::span<const double> mu);

  double operator()(const Eigen::VectorXd& z, Eigen::VectorXd* grad = nullptr) const;

  /// Destandardized decoder output at z.
  Eigen::VectorXd features(const Eigen::VectorXd& z) const;

  const Eigen::VectorXd& coefficients() const { return h_; }

 private:
  const AutoencoderModel* model_;
  Eigen::VectorXd h_;
  Eigen::VectorXd h_scaled_;  // h .* scale
  double offset_ = 0.0;       // h . mean
};

double latent_energy(const AutoencoderModel& model, std::span<const double> mu, const Eigen::VectorXd& z,
                     Eigen::VectorXd* grad = nullptr);

struct OptResult {
  std::vector<double> mu;
  Eigen::VectorXd z_star;
  double e_pred = std::numeric_limits<double>::quiet_NaN();
  double e_exact = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool accepted = false;
  int iterations = 0;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  double z_norm = std::numeric_limits<double>::quiet_NaN();
  std::string diagnostic;
};

/// L-BFGS from z = 0 on E + w_abs max(0, |z| - r_opt)^2 with Armijo
/// backtracking. Accepted iff the bare gradient tolerance is met within
/// max_iter and |z*| <= r_opt.
OptResult minimize_latent(const AutoencoderModel& model, std::span<const double> mu,
                          const LatentOptConfig& config = {});

/// Runs minimize_latent over many potentials. When `exact` is empty the exact
/// energies are computed by diagonalization. Results keep input order for any
/// thread count.
std::vector<OptResult> optimize_potentials(const AutoencoderModel& model,
                                           const std::vector<std::vector<double>>& potentials,
                                           std::span<const double> exact, const LatentOptConfig& config,
                                           int threads = 1);

struct EnergyErrorSummary {
  std::size_t n_points = 0;
  std::size_t n_accepted = 0;
  /// NaN when no point was accepted.
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double relative_rmse = std::numeric_limits<double>::quiet_NaN();
  double retained = 0.0;
  /// Error at z* over every point, accepted or not; NaN if any E_pred is not
  /// finite. Defined even when nothing is retained.
  double rmse_all = std::numeric_limits<double>::quiet_NaN();
};

EnergyErrorSummary summarize_energy_errors(std::span<const OptResult> results);

struct SweepRow {
  int latent_dim = 0;
  EnergyErrorSummary summary;
};

/// One row per model, sorted by latent dimension.
std::vector<SweepRow> evaluate_sweep(const std::vector<const AutoencoderModel*>& models,
                                     const std::vector<std::vector<double>>& potentials,
                                     std::span<const double> exact, const LatentOptConfig& config,
                                     int threads = 1);

/// Columns mu_0..mu_{L-1}, E_pred, E_exact, accepted, iters, gradnorm, znorm.
void write_opt_results_csv(const std::filesystem::path& path, std::span<const OptResult> results);
/// Columns d, n_points, n_accepted, rmse, relative_rmse, retained, rmse_all.
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace latentgs
