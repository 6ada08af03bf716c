#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "latentgs/hubbard.hpp"

namespace latentgs {

struct SolverOptions {
  std::size_t max_dim = 20000;
  /// Dense eigendecomposition up to and including this dimension, Lanczos above.
  std::size_t dense_limit = 5000;
  int n_lowest = 6;
  double degeneracy_tol = 1e-8;
  double singlet_tol = 1e-6;
  double lanczos_tol = 1e-10;
  int lanczos_max_iter = 400;
};

struct GroundStateResult {
  double energy = 0.0;
  Eigen::VectorXd coefficients;
  double s2 = 0.0;
  /// E1 - E0 of the singlet spectrum (infinite when only one singlet level
  /// was found among the computed states).
  double degeneracy_gap = 0.0;
  /// The lowest sector eigenvalues that were computed, any spin, ascending.
  std::vector<double> lowest_energies;
  /// Singlet levels among them, ascending, repeated by multiplicity.
  std::vector<double> singlet_energies;
};

struct Eigenpairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// <S^2> of a real S_z = 0 state, evaluated as |S+ psi|^2.
double spin_squared(const SectorBasis& basis, const Eigen::VectorXd& state);

/// Lowest `count` eigenpairs of a symmetric operator given only through its
/// action. Each pair is found by a fully reorthogonalized Lanczos run that is
/// kept orthogonal to the pairs already found, so degenerate levels are
/// resolved one vector at a time.
Eigenpairs lanczos_lowest(
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
    std::size_t dim, int count, double tol, int max_iter);

/// Lowest `count` eigenpairs of the sector Hamiltonian with the solver chosen
/// by `options.dense_limit`.
Eigenpairs lowest_eigenpairs(const HubbardHamiltonian& hamiltonian, int count,
                             const SolverOptions& options = {});

/// Lowest singlet of the S_z = 0 sector.
GroundStateResult ground_state(const HubbardInstance& instance,
                               const SolverOptions& options = {});

}  // namespace latentgs
