#pragma once

#include <vector>

#include <Eigen/Dense>

#include "latentgs/hubbard.hpp"

namespace latentgs {

/// Per-site expectation values in the flat layout
/// [hop_0..hop_{L-1}, dens_0..dens_{L-1}, docc_0..docc_{L-1}], where
/// hop_i = <sum_s c+_{i,s} c_{i+1,s}>, dens_i = <n_i>, docc_i = <n_{i,up} n_{i,dn}>.
struct ObservableVector {
  Eigen::VectorXd hop;
  Eigen::VectorXd dens;
  Eigen::VectorXd docc;

  int sites() const { return static_cast<int>(dens.size()); }
  Eigen::VectorXd flat() const;
  static ObservableVector from_flat(const Eigen::VectorXd& flat);
};

enum class ObservableBlock { hop = 0, dens = 1, docc = 2 };

ObservableVector extract_observables(const HubbardInstance& instance,
                                     const SectorBasis& basis,
                                     const Eigen::VectorXd& state);

/// Coefficients h with h . omega = <H>: -2t on hop entries (the hermitian
/// conjugate has the same expectation for real states), mu_i on dens, U on docc.
Eigen::VectorXd hamiltonian_coefficients(const HubbardInstance& instance);

/// Spin-summed two-particle density matrix
///   G_{pqrs} = sum_{s,t} <c+_{p s} c+_{r t} c_{s t} c_{q s}>
/// stored flat with index ((p * L + q) * L + r) * L + s.
struct TwoRDM {
  int sites = 0;
  Eigen::VectorXd gamma;

  double operator()(int p, int q, int r, int s) const {
    return gamma[((p * sites + q) * sites + r) * sites + s];
  }
  double& operator()(int p, int q, int r, int s) {
    return gamma[((p * sites + q) * sites + r) * sites + s];
  }
};

TwoRDM extract_2rdm(const HubbardInstance& instance, const SectorBasis& basis,
                    const Eigen::VectorXd& state);

/// Spin-summed 1-RDM n_pq = sum_r G_{pqrr} / (N - 1). Requires N >= 2.
Eigen::MatrixXd one_rdm_from_2rdm(const TwoRDM& rdm, int electrons);

/// Observable vector implied by a 2-RDM (docc_i = G_{iiii} / 2).
ObservableVector observables_from_2rdm(const TwoRDM& rdm, int electrons);

/// Flat coefficient tensor K with K . gamma = <H> for the given instance.
Eigen::VectorXd rdm_hamiltonian_coefficients(const HubbardInstance& instance);

}  // namespace latentgs
