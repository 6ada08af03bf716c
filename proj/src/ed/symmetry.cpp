#include "latentgs/symmetry.hpp"

#include <string>

#include "latentgs/errors.hpp"

namespace latentgs {

namespace {

void check_op(const LatticeSymmetry& op, int sites) {
  if (op.shift < 0 || op.shift >= sites) {
    throw InvalidArgument("unknown lattice symmetry: shift " + std::to_string(op.shift) +
                          " outside [0, " + std::to_string(sites) + ")");
  }
}

}  // namespace

int LatticeSymmetry::site(int i, int sites) const {
  const int reflected = reflect ? sites - 1 - i : i;
  return (reflected + shift) % sites;
}

int LatticeSymmetry::bond(int i, int sites) const {
  // reflection maps bond (i, i+1) onto (L-2-i, L-1-i)
  const int reflected = reflect ? ((sites - 2 - i) % sites + sites) % sites : i;
  return (reflected + shift) % sites;
}

std::vector<LatticeSymmetry> LatticeSymmetry::all(int sites) {
  std::vector<LatticeSymmetry> ops;
  for (int r = 0; r < 2; ++r) {
    for (int k = 0; k < sites; ++k) ops.push_back({k, r == 1});
  }
  return ops;
}

Eigen::VectorXd apply_symmetry_sites(const LatticeSymmetry& op, const Eigen::VectorXd& x) {
  const int L = static_cast<int>(x.size());
  check_op(op, L);
  Eigen::VectorXd out(L);
  for (int i = 0; i < L; ++i) out[op.site(i, L)] = x[i];
  return out;
}

Eigen::VectorXd apply_symmetry_observables(const LatticeSymmetry& op,
                                           const Eigen::VectorXd& omega) {
  if (omega.size() % 3 != 0) {
    throw DimensionMismatch("observable vector length must be a multiple of 3");
  }
  const int L = static_cast<int>(omega.size() / 3);
  check_op(op, L);
  Eigen::VectorXd out(omega.size());
  for (int i = 0; i < L; ++i) {
    out[op.bond(i, L)] = omega[i];
    out[L + op.site(i, L)] = omega[L + i];
    out[2 * L + op.site(i, L)] = omega[2 * L + i];
  }
  return out;
}

}  // namespace latentgs
