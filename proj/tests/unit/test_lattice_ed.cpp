#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "fock_oracle.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/ground_state.hpp"
#include "latentgs/hubbard.hpp"
#include "latentgs/observables.hpp"
#include "latentgs/rng.hpp"
#include "latentgs/symmetry.hpp"

using namespace latentgs;

namespace {

HubbardInstance random_instance(int L, int N, Rng& rng, double width = 1.0, double U = 4.0) {
  HubbardInstance inst = HubbardInstance::uniform(L, N, 1.0, U);
  for (auto& m : inst.mu) m = rng.uniform(-width, width);
  return inst;
}

/// Free fermions: fill the n lowest levels of -2t cos(2 pi k / L) per spin.
double free_fermion_energy(int L, int n_per_spin, double t) {
  std::vector<double> levels;
  for (int k = 0; k < L; ++k) levels.push_back(-2.0 * t * std::cos(2.0 * std::numbers::pi * k / L));
  std::sort(levels.begin(), levels.end());
  double e = 0.0;
  for (int k = 0; k < n_per_spin; ++k) e += levels[k];
  return 2.0 * e;
}

Eigen::VectorXd embed_in_fock(const SectorBasis& basis, const Eigen::VectorXd& v) {
  const int L = basis.sites;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(1 << (2 * L));
  for (std::size_t a = 0; a < basis.up_configs.size(); ++a) {
    for (std::size_t b = 0; b < basis.dn_configs.size(); ++b) {
      full[basis.up_configs[a] | (basis.dn_configs[b] << L)] = v[basis.index(a, b)];
    }
  }
  return full;
}

}  // namespace

TEST_CASE("sector basis dimensions follow the binomial formula") {
  CHECK(build_sector_basis(4, 2).dim() == 16);
  CHECK(build_sector_basis(4, 4).dim() == 36);
  CHECK(build_sector_basis(6, 6).dim() == 400);
  CHECK(build_sector_basis(8, 8).dim() == 4900);
}

TEST_CASE("sector basis is sorted with the advertised popcounts") {
  const SectorBasis basis = build_sector_basis(6, 6);
  CHECK(std::is_sorted(basis.up_configs.begin(), basis.up_configs.end()));
  CHECK(std::is_sorted(basis.dn_configs.begin(), basis.dn_configs.end()));
  for (auto m : basis.up_configs) CHECK(std::popcount(m) == 3);
  for (std::size_t i = 0; i < basis.up_configs.size(); ++i) {
    CHECK(basis.up_lookup[basis.up_configs[i]] == static_cast<int>(i));
  }
}

TEST_CASE("invalid sectors are rejected") {
  CHECK_THROWS_AS(build_sector_basis(4, 3), InvalidSector);
  CHECK_THROWS_AS(build_sector_basis(4, 10), InvalidSector);
  CHECK_THROWS_AS(build_sector_basis(4, 0), InvalidSector);
  CHECK_THROWS_AS(build_sector_basis(1, 2), InvalidSector);
}

TEST_CASE("each basis state has at most 4L + 1 images") {
  Rng rng(3);
  const HubbardInstance inst = random_instance(5, 4, rng);
  const SectorBasis basis = build_sector_basis(5, 4);
  const HubbardHamiltonian h(inst, basis);
  for (std::size_t k = 0; k < basis.dim(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(basis.dim());
    e[k] = 1.0;
    const Eigen::VectorXd img = apply_hamiltonian(inst, basis, e);
    CHECK(img.allFinite());
    CHECK((img.array() != 0.0).count() <= 4 * 5 + 1);
  }
}

TEST_CASE("apply_hamiltonian rejects wrong lengths") {
  const HubbardInstance inst = HubbardInstance::uniform(4, 2);
  const SectorBasis basis = build_sector_basis(4, 2);
  CHECK_THROWS_AS(apply_hamiltonian(inst, basis, Eigen::VectorXd::Zero(15)), DimensionMismatch);
}

TEST_CASE("sparse action matches the dense matrix and is symmetric") {
  Rng rng(11);
  const HubbardInstance inst = random_instance(6, 6, rng);
  const SectorBasis basis = build_sector_basis(6, 6);
  const HubbardHamiltonian h(inst, basis);
  const Eigen::MatrixXd dense = h.dense();
  CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd v(basis.dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1, 1);
  CHECK((h.apply(v) - dense * v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("uniform potential shift adds c N times the identity") {
  Rng rng(5);
  HubbardInstance inst = random_instance(4, 4, rng);
  const SectorBasis basis = build_sector_basis(4, 4);
  const Eigen::MatrixXd h0 = HubbardHamiltonian(inst, basis).dense();
  const double c = 0.731;
  for (auto& m : inst.mu) m += c;
  const Eigen::MatrixXd h1 = HubbardHamiltonian(inst, basis).dense();
  const Eigen::MatrixXd expected = h0 + c * 4 * Eigen::MatrixXd::Identity(36, 36);
  CHECK((h1 - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("free-fermion ground state energy") {
  const double oracle = free_fermion_energy(4, 1, 1.0);
  CHECK(oracle == doctest::Approx(-4.0).epsilon(1e-14));
  const GroundStateResult gs = ground_state(HubbardInstance::uniform(4, 2, 1.0, 0.0));
  CHECK(std::abs(gs.energy - oracle) < 1e-9);
  // a second closed-shell check
  const GroundStateResult gs6 = ground_state(HubbardInstance::uniform(6, 2, 1.0, 0.0));
  CHECK(std::abs(gs6.energy - free_fermion_energy(6, 1, 1.0)) < 1e-9);
}

TEST_CASE("sector spectrum is contained in the full Fock spectrum") {
  Rng rng(17);
  for (int N : {2, 4}) {
    const HubbardInstance inst = random_instance(4, N, rng);
    const Eigen::MatrixXd full = oracle::full_fock_hamiltonian(4, 1.0, 4.0, inst.mu);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full_es(full, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd full_values = full_es.eigenvalues();
    const SectorBasis basis = build_sector_basis(4, N);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(HubbardHamiltonian(inst, basis).dense(),
                                                      Eigen::EigenvaluesOnly);
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
      CHECK((full_values.array() - es.eigenvalues()[k]).abs().minCoeff() < 1e-9);
    }
  }
}

TEST_CASE("interacting ground state matches brute-force diagonalization") {
  const HubbardInstance inst = HubbardInstance::uniform(4, 2, 1.0, 4.0);
  const Eigen::MatrixXd full = oracle::full_fock_hamiltonian(4, 1.0, 4.0, inst.mu);
  const Eigen::MatrixXd s2 = oracle::full_fock_s2(4);
  const auto masks = oracle::sector_masks(4, 1, 1);
  const auto n = static_cast<Eigen::Index>(masks.size());
  Eigen::MatrixXd block(n, n), s2_block(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      block(i, j) = full(masks[i], masks[j]);
      s2_block(i, j) = s2(masks[i], masks[j]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
  double oracle_energy = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::VectorXd v = es.eigenvectors().col(k);
    if (v.dot(s2_block * v) < 1e-6) {
      oracle_energy = es.eigenvalues()[k];
      break;
    }
  }
  const GroundStateResult gs = ground_state(inst);
  CHECK(std::abs(gs.energy - oracle_energy) < 1e-9);
  CHECK(std::abs(gs.coefficients.norm() - 1.0) < 1e-12);
  CHECK(gs.s2 < 1e-6);
  CHECK(gs.s2 > -1e-9);
}

TEST_CASE("spin_squared agrees with the full-space S^2 operator") {
  Rng rng(23);
  const SectorBasis basis = build_sector_basis(4, 4);
  const Eigen::MatrixXd s2 = oracle::full_fock_s2(4);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd v(basis.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1, 1);
    v.normalize();
    const Eigen::VectorXd full = embed_in_fock(basis, v);
    CHECK(std::abs(spin_squared(basis, v) - full.dot(s2 * full)) < 1e-10);
  }
}

TEST_CASE("odd chain at N = 4 has a doubly degenerate singlet ground state") {
  const GroundStateResult gs = ground_state(HubbardInstance::uniform(5, 4));
  CHECK(gs.degeneracy_gap < 1e-8);
  REQUIRE(gs.singlet_energies.size() >= 3);
  CHECK(gs.singlet_energies[2] - gs.singlet_energies[0] > 0.1);
  // the S_z = 0 sector minimum itself is a triplet here
  CHECK(gs.lowest_energies[0] < gs.energy - 0.1);
  CHECK(gs.s2 < 1e-6);
  const GroundStateResult control = ground_state(HubbardInstance::uniform(4, 2));
  CHECK(control.degeneracy_gap > 0.1);
}

TEST_CASE("Lanczos reproduces the dense lowest eigenvalues, degeneracies included") {
  Rng rng(29);
  SolverOptions lanczos;
  lanczos.dense_limit = 0;
  for (const HubbardInstance& inst :
       {random_instance(4, 4, rng), HubbardInstance::uniform(5, 4)}) {
    const SectorBasis basis = build_sector_basis(inst.sites, inst.electrons);
    const HubbardHamiltonian h(inst, basis);
    const Eigenpairs dense = lowest_eigenpairs(h, 6);
    const Eigenpairs sparse = lowest_eigenpairs(h, 6, lanczos);
    CHECK((dense.values - sparse.values).cwiseAbs().maxCoeff() < 1e-9);
    const GroundStateResult a = ground_state(inst);
    const GroundStateResult b = ground_state(inst, lanczos);
    CHECK(std::abs(a.energy - b.energy) < 1e-9);
    CHECK(b.s2 < 1e-6);
  }
}

TEST_CASE("sector dimension cap is enforced") {
  SolverOptions opts;
  opts.max_dim = 100;
  CHECK_THROWS_AS(ground_state(HubbardInstance::uniform(6, 6), opts), SolverError);
}

TEST_CASE("free-fermion observables") {
  const HubbardInstance inst = HubbardInstance::uniform(4, 2, 1.0, 0.0);
  const SectorBasis basis = build_sector_basis(4, 2);
  const GroundStateResult gs = ground_state(inst);
  const ObservableVector obs = extract_observables(inst, basis, gs.coefficients);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(obs.dens[i] - 0.5) < 1e-10);
    CHECK(std::abs(obs.docc[i] - 0.0625) < 1e-10);
    CHECK(std::abs(obs.hop[i] - 0.5) < 1e-10);
  }
}

TEST_CASE("hamiltonian coefficients layout") {
  const Eigen::VectorXd h = hamiltonian_coefficients(HubbardInstance::uniform(4, 2));
  Eigen::VectorXd expected(12);
  expected << -2, -2, -2, -2, 0, 0, 0, 0, 4, 4, 4, 4;
  CHECK(h == expected);
}

TEST_CASE("observable invariants and energy contraction over random instances") {
  Rng rng(31);
  for (auto [L, N] : {std::pair{4, 2}, std::pair{6, 6}}) {
    const SectorBasis basis = build_sector_basis(L, N);
    for (int trial = 0; trial < 50; ++trial) {
      const HubbardInstance inst = random_instance(L, N, rng, 1.5);
      const GroundStateResult gs = ground_state(inst);
      const ObservableVector obs = extract_observables(inst, basis, gs.coefficients);
      CHECK(gs.s2 < 1e-6);
      CHECK(std::abs(obs.dens.sum() - N) < 1e-10);
      CHECK(obs.docc.minCoeff() >= -1e-14);
      CHECK(obs.docc.maxCoeff() <= 1.0);
      CHECK(obs.dens.minCoeff() >= -1e-14);
      CHECK(obs.dens.maxCoeff() <= 2.0 + 1e-14);
      CHECK(obs.hop.cwiseAbs().maxCoeff() <= 2.0);
      CHECK(std::abs(hamiltonian_coefficients(inst).dot(obs.flat()) - gs.energy) < 1e-10);
    }
  }
}

TEST_CASE("potential shift covariance of energy and observables") {
  Rng rng(37);
  const SectorBasis basis = build_sector_basis(4, 4);
  for (int trial = 0; trial < 20; ++trial) {
    HubbardInstance inst = random_instance(4, 4, rng);
    const double c = rng.uniform(-2, 2);
    const GroundStateResult a = ground_state(inst);
    const Eigen::VectorXd wa = extract_observables(inst, basis, a.coefficients).flat();
    for (auto& m : inst.mu) m += c;
    const GroundStateResult b = ground_state(inst);
    const Eigen::VectorXd wb = extract_observables(inst, basis, b.coefficients).flat();
    CHECK(std::abs(b.energy - a.energy - 4 * c) < 1e-9);
    CHECK((wa - wb).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("2-RDM invariants and consistency with the observable vector") {
  Rng rng(41);
  for (auto [L, N] : {std::pair{4, 2}, std::pair{4, 4}, std::pair{5, 4}, std::pair{6, 6}}) {
    const SectorBasis basis = build_sector_basis(L, N);
    for (int trial = 0; trial < 5; ++trial) {
      const HubbardInstance inst = random_instance(L, N, rng);
      const GroundStateResult gs = ground_state(inst);
      const TwoRDM g = extract_2rdm(inst, basis, gs.coefficients);
      double trace = 0.0;
      double asym = 0.0;
      for (int p = 0; p < L; ++p) {
        for (int q = 0; q < L; ++q) {
          for (int r = 0; r < L; ++r) {
            for (int s = 0; s < L; ++s) {
              asym = std::max(asym, std::abs(g(p, q, r, s) - g(r, s, p, q)));
              asym = std::max(asym, std::abs(g(p, q, r, s) - g(q, p, s, r)));
            }
          }
          trace += g(p, p, q, q);
        }
      }
      CHECK(asym < 1e-10);
      CHECK(std::abs(trace - N * (N - 1)) < 1e-9);
      const ObservableVector direct = extract_observables(inst, basis, gs.coefficients);
      const ObservableVector via = observables_from_2rdm(g, N);
      CHECK((direct.flat() - via.flat()).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(std::abs(rdm_hamiltonian_coefficients(inst).dot(g.gamma) - gs.energy) < 1e-10);
    }
  }
}

TEST_CASE("2-RDM preconditions") {
  const HubbardInstance inst = HubbardInstance::uniform(4, 2);
  const SectorBasis basis = build_sector_basis(4, 2);
  CHECK_THROWS_AS(extract_2rdm(inst, basis, Eigen::VectorXd::Zero(16)), InvalidArgument);
  TwoRDM g;
  g.sites = 4;
  g.gamma = Eigen::VectorXd::Zero(256);
  CHECK_THROWS_AS(one_rdm_from_2rdm(g, 1), InvalidArgument);
}

TEST_CASE("lattice symmetries") {
  Rng rng(43);
  const int L = 6;
  Eigen::VectorXd omega(3 * L);
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega[i] = rng.uniform(-1, 1);

  SUBCASE("identity leaves vectors unchanged") {
    CHECK(apply_symmetry_observables({0, false}, omega) == omega);
  }
  SUBCASE("reflection is an involution") {
    const LatticeSymmetry r{0, true};
    CHECK(apply_symmetry_observables(r, apply_symmetry_observables(r, omega)) == omega);
  }
  SUBCASE("group has 2L distinct elements") {
    const auto ops = LatticeSymmetry::all(L);
    CHECK(ops.size() == 2 * L);
  }
  SUBCASE("out-of-range translation is rejected") {
    CHECK_THROWS_AS(apply_symmetry_observables({L, false}, omega), InvalidArgument);
  }
}

TEST_CASE("ground-state observables are equivariant under the chain symmetries") {
  Rng rng(47);
  for (auto [L, N] : {std::pair{4, 2}, std::pair{6, 6}}) {
    const SectorBasis basis = build_sector_basis(L, N);
    for (int trial = 0; trial < 3; ++trial) {
      const HubbardInstance inst = random_instance(L, N, rng);
      const GroundStateResult gs = ground_state(inst);
      const Eigen::VectorXd omega = extract_observables(inst, basis, gs.coefficients).flat();
      const Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(inst.mu.data(), L);
      for (const auto& op : LatticeSymmetry::all(L)) {
        HubbardInstance moved = inst;
        const Eigen::VectorXd mu2 = apply_symmetry_sites(op, mu);
        moved.mu.assign(mu2.data(), mu2.data() + L);
        const GroundStateResult gs2 = ground_state(moved);
        const Eigen::VectorXd omega2 = extract_observables(moved, basis, gs2.coefficients).flat();
        CHECK((omega2 - apply_symmetry_observables(op, omega)).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
}
