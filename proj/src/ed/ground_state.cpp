#include "latentgs/ground_state.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "latentgs/errors.hpp"

namespace latentgs {

namespace {

/// Columns are S+ |v_k>, expressed in the (n_up + 1, n_dn - 1) block.
Eigen::MatrixXd raise_spin(const SectorBasis& basis, const Eigen::MatrixXd& states) {
  if (basis.n_dn == 0 || basis.n_up == basis.sites) {
    return Eigen::MatrixXd::Zero(1, states.cols());
  }
  const SectorBasis target = build_spin_sector(basis.sites, basis.n_up + 1, basis.n_dn - 1);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(target.dim()), states.cols());
  for (std::size_t a = 0; a < basis.up_configs.size(); ++a) {
    const std::uint32_t up = basis.up_configs[a];
    for (std::size_t b = 0; b < basis.dn_configs.size(); ++b) {
      const std::uint32_t dn = basis.dn_configs[b];
      const std::uint32_t movable = dn & ~up;
      for (int i = 0; i < basis.sites; ++i) {
        if (!(movable >> i & 1u)) continue;
        const std::uint32_t below = (std::uint32_t{1} << i) - 1;
        // c+_{i,up} c_{i,dn}; the N_up factor is common to every term and dropped
        const int parity = std::popcount(up & below) + std::popcount(dn & below);
        const double sign = (parity & 1) ? -1.0 : 1.0;
        const auto ta = static_cast<std::size_t>(target.up_lookup[up | (1u << i)]);
        const auto tb = static_cast<std::size_t>(target.dn_lookup[dn & ~(1u << i)]);
        out.row(static_cast<Eigen::Index>(target.index(ta, tb))) +=
            sign * states.row(static_cast<Eigen::Index>(basis.index(a, b)));
      }
    }
  }
  return out;
}

}  // namespace

double spin_squared(const SectorBasis& basis, const Eigen::VectorXd& state) {
  if (basis.n_up != basis.n_dn) {
    throw InvalidSector("spin_squared expects an S_z = 0 sector");
  }
  if (static_cast<std::size_t>(state.size()) != basis.dim()) {
    throw DimensionMismatch("state length does not match the sector dimension");
  }
  // For S_z = 0, S^2 = S- S+.
  return raise_spin(basis, state).squaredNorm();
}

Eigenpairs lanczos_lowest(
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
    std::size_t dim, int count, double tol, int max_iter) {
  const auto n = static_cast<Eigen::Index>(dim);
  count = std::min<int>(count, static_cast<int>(dim));
  Eigenpairs result;
  result.values.resize(count);
  result.vectors.resize(n, count);

  auto deflate = [&](Eigen::VectorXd& v, int found) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < found; ++k) {
        v -= result.vectors.col(k).dot(v) * result.vectors.col(k);
      }
    }
  };

  Eigen::VectorXd w(n);
  for (int found = 0; found < count; ++found) {
    // Deterministic start vector with support on every basis state.
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      v[i] = 1.0 + 0.5 * std::sin(1.3 * static_cast<double>(i) + 0.7 * found);
    }
    deflate(v, found);
    if (v.norm() < 1e-14) throw SolverError("Lanczos start vector vanished after deflation");
    v.normalize();

    const int m_max = std::min<int>(max_iter, static_cast<int>(dim) - found);
    Eigen::MatrixXd basis(n, m_max);
    std::vector<double> alpha, beta;
    bool converged = false;
    Eigen::VectorXd ritz_vec;
    double ritz_val = 0.0;

    for (int j = 0; j < m_max; ++j) {
      basis.col(j) = v;
      apply(v, w);
      const double a = v.dot(w);
      alpha.push_back(a);
      // Full reorthogonalization against the Krylov basis and found vectors.
      for (int pass = 0; pass < 2; ++pass) {
        w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
        deflate(w, found);
      }
      const double b = w.norm();

      Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(j + 1, j + 1);
      for (int k = 0; k <= j; ++k) {
        tri(k, k) = alpha[static_cast<std::size_t>(k)];
        if (k > 0) tri(k, k - 1) = tri(k - 1, k) = beta[static_cast<std::size_t>(k - 1)];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
      const double residual = std::abs(b * es.eigenvectors()(j, 0));
      const bool exhausted = b < 1e-13 || j + 1 == m_max;
      if (residual < tol || exhausted) {
        ritz_val = es.eigenvalues()[0];
        ritz_vec = basis.leftCols(j + 1) * es.eigenvectors().col(0);
        converged = residual < tol || b < 1e-13 || j + 1 == static_cast<int>(dim) - found;
        break;
      }
      beta.push_back(b);
      v = w / b;
    }
    if (!converged) {
      throw SolverError("Lanczos did not converge for eigenpair " + std::to_string(found) +
                        " within " + std::to_string(m_max) + " iterations");
    }
    deflate(ritz_vec, found);
    ritz_vec.normalize();
    result.values[found] = ritz_val;
    result.vectors.col(found) = ritz_vec;
  }

  // Deflated runs can return values slightly out of order.
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) order[static_cast<std::size_t>(k)] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return result.values[x] < result.values[y]; });
  Eigenpairs sorted;
  sorted.values.resize(count);
  sorted.vectors.resize(n, count);
  for (int k = 0; k < count; ++k) {
    sorted.values[k] = result.values[order[static_cast<std::size_t>(k)]];
    sorted.vectors.col(k) = result.vectors.col(order[static_cast<std::size_t>(k)]);
  }
  return sorted;
}

Eigenpairs lowest_eigenpairs(const HubbardHamiltonian& hamiltonian, int count,
                             const SolverOptions& options) {
  const std::size_t dim = hamiltonian.dim();
  count = std::min<int>(count, static_cast<int>(dim));
  if (dim <= options.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hamiltonian.dense());
    if (es.info() != Eigen::Success) throw SolverError("dense eigendecomposition failed");
    return {es.eigenvalues().head(count), es.eigenvectors().leftCols(count)};
  }
  auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out.resize(in.size());
    hamiltonian.apply(std::span<const double>(in.data(), static_cast<std::size_t>(in.size())),
                      std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  };
  return lanczos_lowest(apply, dim, count, options.lanczos_tol, options.lanczos_max_iter);
}

GroundStateResult ground_state(const HubbardInstance& instance, const SolverOptions& options) {
  instance.validate();
  const SectorBasis basis = build_sector_basis(instance.sites, instance.electrons);
  if (basis.dim() > options.max_dim) {
    throw SolverError("sector dimension " + std::to_string(basis.dim()) +
                      " exceeds the configured cap " + std::to_string(options.max_dim));
  }
  const HubbardHamiltonian hamiltonian(instance, basis);
  const Eigenpairs pairs = lowest_eigenpairs(hamiltonian, options.n_lowest, options);
  const Eigen::Index k = pairs.values.size();

  GroundStateResult result;
  result.lowest_energies.assign(pairs.values.data(), pairs.values.data() + k);

  // Walk clusters of (near-)degenerate levels from the bottom. Inside a cluster
  // diagonalize S^2 so a singlet mixed with a degenerate triplet is recovered.
  Eigen::Index start = 0;
  while (start < k) {
    Eigen::Index end = start + 1;
    while (end < k && pairs.values[end] - pairs.values[end - 1] < options.degeneracy_tol) ++end;
    const Eigen::MatrixXd cluster = pairs.vectors.middleCols(start, end - start);
    const Eigen::MatrixXd raised = raise_spin(basis, cluster);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(raised.transpose() * raised);
    for (Eigen::Index m = 0; m < es.eigenvalues().size(); ++m) {
      if (es.eigenvalues()[m] >= options.singlet_tol) continue;
      Eigen::VectorXd state = cluster * es.eigenvectors().col(m);
      state.normalize();
      const double energy = hamiltonian.apply(state).dot(state);
      if (result.singlet_energies.empty()) {
        result.coefficients = std::move(state);
        result.energy = energy;
      }
      result.singlet_energies.push_back(energy);
    }
    start = end;
  }
  if (result.singlet_energies.empty()) {
    throw NoSingletError("no singlet among the lowest " + std::to_string(k) +
                         " sector eigenstates");
  }
  std::sort(result.singlet_energies.begin(), result.singlet_energies.end());
  result.degeneracy_gap = result.singlet_energies.size() > 1
                              ? result.singlet_energies[1] - result.singlet_energies[0]
                              : std::numeric_limits<double>::infinity();
  result.s2 = spin_squared(basis, result.coefficients);
  return result;
}

}  // namespace latentgs
