#pragma once

#include <vector>

#include <Eigen/Dense>

namespace latentgs {

/// Element of the dihedral group of the periodic chain: optional reflection
/// i -> L-1-i followed by translation by `shift`.
struct LatticeSymmetry {
  int shift = 0;
  bool reflect = false;

  /// Image of site i.
  int site(int i, int sites) const;
  /// Image of bond i (the bond between sites i and i+1).
  int bond(int i, int sites) const;

  /// All 2L elements, translations first then reflections.
  static std::vector<LatticeSymmetry> all(int sites);
};

/// Push a per-site vector forward: out[site(i)] = x[i].
Eigen::VectorXd apply_symmetry_sites(const LatticeSymmetry& op, const Eigen::VectorXd& x);

/// Act on a flat observable vector [hop | dens | docc] of length 3L.
Eigen::VectorXd apply_symmetry_observables(const LatticeSymmetry& op,
                                           const Eigen::VectorXd& omega);

}  // namespace latentgs
