#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace latentgs {

/// One member of the periodic 1D Hubbard family
///   H = -t sum_{i,s} (c+_{i,s} c_{i+1,s} + h.c.) + U sum_i n_{i,up} n_{i,dn}
///       + sum_i mu_i (n_{i,up} + n_{i,dn})
/// with bond i connecting sites i and (i + 1) mod L.
struct HubbardInstance {
  int sites = 0;
  int electrons = 0;
  double hopping = 1.0;
  double interaction = 4.0;
  std::vector<double> mu;

  static HubbardInstance uniform(int sites, int electrons, double hopping = 1.0,
                                 double interaction = 4.0);

  /// Throws InvalidSector unless L >= 2, N even, 0 < N <= 2L and |mu| = L.
  void validate() const;
};

/// Fixed (n_up, n_dn) block. Orbitals are ordered up sites 0..L-1 followed by
/// down sites 0..L-1; basis index = up_index * dn_configs.size() + dn_index.
struct SectorBasis {
  int sites = 0;
  int n_up = 0;
  int n_dn = 0;
  std::vector<std::uint32_t> up_configs;
  std::vector<std::uint32_t> dn_configs;
  // mask -> position in the config list, -1 when the popcount differs
  std::vector<std::int32_t> up_lookup;
  std::vector<std::int32_t> dn_lookup;

  std::size_t dim() const { return up_configs.size() * dn_configs.size(); }
  std::size_t index(std::size_t up, std::size_t dn) const {
    return up * dn_configs.size() + dn;
  }
};

/// S_z = 0 sector with N/2 electrons of each spin.
SectorBasis build_sector_basis(int sites, int electrons);

/// Arbitrary (n_up, n_dn) block; used for spin-raising and pair-removal images.
SectorBasis build_spin_sector(int sites, int n_up, int n_dn);

/// All masks over `sites` bits with `count` bits set, ascending.
std::vector<std::uint32_t> fixed_popcount_masks(int sites, int count);

/// Fermionic sign of c+_to c_from acting on a single-spin mask that has `from`
/// occupied and `to` empty: parity of occupied orbitals strictly between them.
int hop_sign(std::uint32_t mask, int from, int to);

/// Sparse sector Hamiltonian. Up and down hopping act on their own factor of
/// the tensor-product basis, everything else is diagonal.
class HubbardHamiltonian {
 public:
  HubbardHamiltonian(const HubbardInstance& instance, const SectorBasis& basis);

  std::size_t dim() const { return diagonal_.size(); }

  /// out = H * in.
  void apply(std::span<const double> in, std::span<double> out) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

  Eigen::MatrixXd dense() const;

  const Eigen::VectorXd& diagonal() const { return diagonal_; }

 private:
  struct Hop {
    std::uint32_t from;
    std::uint32_t to;
    double amplitude;
  };

  std::size_t n_dn_configs_ = 0;
  std::vector<Hop> up_hops_;
  std::vector<Hop> dn_hops_;
  Eigen::VectorXd diagonal_;
};

/// Convenience wrapper: H * v for a state vector in `basis`.
Eigen::VectorXd apply_hamiltonian(const HubbardInstance& instance,
                                  const SectorBasis& basis,
                                  const Eigen::VectorXd& v);

}  // namespace latentgs
