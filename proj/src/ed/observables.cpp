#include "latentgs/observables.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "latentgs/errors.hpp"

namespace latentgs {

namespace {

void check_state(const SectorBasis& basis, const Eigen::VectorXd& state) {
  if (static_cast<std::size_t>(state.size()) != basis.dim()) {
    throw DimensionMismatch("state has length " + std::to_string(state.size()) +
                            ", sector dimension is " + std::to_string(basis.dim()));
  }
  if (std::abs(state.norm() - 1.0) > 1e-8) {
    throw InvalidArgument("state must be normalized, |psi| = " + std::to_string(state.norm()));
  }
}

/// sum_{a,b} psi[a', b] psi[a, b] * sign over single-spin moves from -> to
/// on the first tensor factor (spin up) or second (spin down).
double hop_expectation(const SectorBasis& basis, const Eigen::VectorXd& psi, int from, int to,
                       bool up_spin) {
  const auto& configs = up_spin ? basis.up_configs : basis.dn_configs;
  const auto& lookup = up_spin ? basis.up_lookup : basis.dn_lookup;
  const auto nd = static_cast<Eigen::Index>(basis.dn_configs.size());
  const auto nu = static_cast<Eigen::Index>(basis.up_configs.size());
  double total = 0.0;
  for (std::size_t a = 0; a < configs.size(); ++a) {
    const std::uint32_t m = configs[a];
    if (!(m >> from & 1u) || (m >> to & 1u)) continue;
    const auto target = static_cast<Eigen::Index>(
        lookup[m ^ (std::uint32_t{1} << from) ^ (std::uint32_t{1} << to)]);
    const double sign = hop_sign(m, from, to);
    const auto ai = static_cast<Eigen::Index>(a);
    if (up_spin) {
      total += sign * psi.segment(target * nd, nd).dot(psi.segment(ai * nd, nd));
    } else {
      for (Eigen::Index u = 0; u < nu; ++u) total += sign * psi[u * nd + target] * psi[u * nd + ai];
    }
  }
  return total;
}

}  // namespace

Eigen::VectorXd ObservableVector::flat() const {
  const Eigen::Index L = dens.size();
  Eigen::VectorXd out(3 * L);
  out << hop, dens, docc;
  return out;
}

ObservableVector ObservableVector::from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() % 3 != 0) {
    throw DimensionMismatch("flat observable vector length must be a multiple of 3");
  }
  const Eigen::Index L = flat.size() / 3;
  return {flat.segment(0, L), flat.segment(L, L), flat.segment(2 * L, L)};
}

ObservableVector extract_observables(const HubbardInstance& instance, const SectorBasis& basis,
                                     const Eigen::VectorXd& state) {
  check_state(basis, state);
  const int L = basis.sites;
  ObservableVector obs{Eigen::VectorXd::Zero(L), Eigen::VectorXd::Zero(L),
                       Eigen::VectorXd::Zero(L)};
  (void)instance;
  for (int i = 0; i < L; ++i) {
    const int j = (i + 1) % L;
    // <c+_i c_j>: annihilate at j, create at i
    obs.hop[i] = hop_expectation(basis, state, j, i, true) +
                 hop_expectation(basis, state, j, i, false);
  }
  for (std::size_t a = 0; a < basis.up_configs.size(); ++a) {
    const std::uint32_t up = basis.up_configs[a];
    for (std::size_t b = 0; b < basis.dn_configs.size(); ++b) {
      const std::uint32_t dn = basis.dn_configs[b];
      const double w = state[static_cast<Eigen::Index>(basis.index(a, b))];
      const double p = w * w;
      if (p == 0.0) continue;
      for (int i = 0; i < L; ++i) {
        const bool nu = up >> i & 1u;
        const bool nd = dn >> i & 1u;
        obs.dens[i] += p * (static_cast<int>(nu) + static_cast<int>(nd));
        if (nu && nd) obs.docc[i] += p;
      }
    }
  }
  return obs;
}

Eigen::VectorXd hamiltonian_coefficients(const HubbardInstance& instance) {
  const int L = instance.sites;
  if (static_cast<int>(instance.mu.size()) != L) {
    throw DimensionMismatch("potential length does not match the site count");
  }
  Eigen::VectorXd h(3 * L);
  for (int i = 0; i < L; ++i) {
    h[i] = -2.0 * instance.hopping;
    h[L + i] = instance.mu[static_cast<std::size_t>(i)];
    h[2 * L + i] = instance.interaction;
  }
  return h;
}

TwoRDM extract_2rdm(const HubbardInstance& instance, const SectorBasis& basis,
                    const Eigen::VectorXd& state) {
  check_state(basis, state);
  (void)instance;
  const int L = basis.sites;
  const int LL = L * L;
  TwoRDM rdm;
  rdm.sites = L;
  rdm.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(LL) * LL);

  // spin 0 = up (orbital = site), spin 1 = down (orbital = L + site)
  for (int sigma = 0; sigma < 2; ++sigma) {
    for (int tau = 0; tau < 2; ++tau) {
      const int rm_up = (sigma == 0) + (tau == 0);
      const int rm_dn = (sigma == 1) + (tau == 1);
      if (basis.n_up < rm_up || basis.n_dn < rm_dn) continue;
      const SectorBasis target = build_spin_sector(L, basis.n_up - rm_up, basis.n_dn - rm_dn);
      // phi(x, s * L + q) = <x| c_{s tau} c_{q sigma} |psi>
      Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(target.dim()), LL);
      for (std::size_t a = 0; a < basis.up_configs.size(); ++a) {
        for (std::size_t b = 0; b < basis.dn_configs.size(); ++b) {
          const double amp = state[static_cast<Eigen::Index>(basis.index(a, b))];
          if (amp == 0.0) continue;
          const std::uint64_t full = basis.up_configs[a] |
                                     (std::uint64_t{basis.dn_configs[b]} << L);
          for (int q = 0; q < L; ++q) {
            const int oq = q + sigma * L;
            if (!(full >> oq & 1u)) continue;
            const int sign_q = (std::popcount(full & ((std::uint64_t{1} << oq) - 1)) & 1) ? -1 : 1;
            const std::uint64_t after_q = full & ~(std::uint64_t{1} << oq);
            for (int s = 0; s < L; ++s) {
              const int os = s + tau * L;
              if (!(after_q >> os & 1u)) continue;
              const int sign_s =
                  (std::popcount(after_q & ((std::uint64_t{1} << os) - 1)) & 1) ? -1 : 1;
              const std::uint64_t rest = after_q & ~(std::uint64_t{1} << os);
              const auto up = static_cast<std::uint32_t>(rest & ((std::uint64_t{1} << L) - 1));
              const auto dn = static_cast<std::uint32_t>(rest >> L);
              const auto x = target.index(static_cast<std::size_t>(target.up_lookup[up]),
                                          static_cast<std::size_t>(target.dn_lookup[dn]));
              phi(static_cast<Eigen::Index>(x), s * L + q) += sign_q * sign_s * amp;
            }
          }
        }
      }
      // G_{pqrs} += <c_{r tau} c_{p sigma} psi | c_{s tau} c_{q sigma} psi>
      const Eigen::MatrixXd overlap = phi.transpose() * phi;
      for (int p = 0; p < L; ++p) {
        for (int q = 0; q < L; ++q) {
          for (int r = 0; r < L; ++r) {
            for (int s = 0; s < L; ++s) rdm(p, q, r, s) += overlap(r * L + p, s * L + q);
          }
        }
      }
    }
  }
  return rdm;
}

Eigen::MatrixXd one_rdm_from_2rdm(const TwoRDM& rdm, int electrons) {
  if (electrons < 2) {
    throw InvalidArgument("1-RDM recovery divides by N - 1 and needs N >= 2");
  }
  const int L = rdm.sites;
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(L, L);
  for (int p = 0; p < L; ++p) {
    for (int q = 0; q < L; ++q) {
      for (int r = 0; r < L; ++r) n(p, q) += rdm(p, q, r, r);
    }
  }
  return n / static_cast<double>(electrons - 1);
}

ObservableVector observables_from_2rdm(const TwoRDM& rdm, int electrons) {
  const Eigen::MatrixXd n = one_rdm_from_2rdm(rdm, electrons);
  const int L = rdm.sites;
  ObservableVector obs{Eigen::VectorXd(L), Eigen::VectorXd(L), Eigen::VectorXd(L)};
  for (int i = 0; i < L; ++i) {
    obs.hop[i] = n(i, (i + 1) % L);
    obs.dens[i] = n(i, i);
    obs.docc[i] = 0.5 * rdm(i, i, i, i);
  }
  return obs;
}

Eigen::VectorXd rdm_hamiltonian_coefficients(const HubbardInstance& instance) {
  const int L = instance.sites;
  if (instance.electrons < 2) {
    throw InvalidArgument("2-RDM energy contraction needs N >= 2");
  }
  if (static_cast<int>(instance.mu.size()) != L) {
    throw DimensionMismatch("potential length does not match the site count");
  }
  TwoRDM k;
  k.sites = L;
  k.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L) * L * L * L);
  const double scale = 1.0 / static_cast<double>(instance.electrons - 1);
  for (int i = 0; i < L; ++i) {
    const int j = (i + 1) % L;
    for (int r = 0; r < L; ++r) {
      k(i, j, r, r) += -instance.hopping * scale;
      k(j, i, r, r) += -instance.hopping * scale;
      k(i, i, r, r) += instance.mu[static_cast<std::size_t>(i)] * scale;
    }
    k(i, i, i, i) += 0.5 * instance.interaction;
  }
  return k.gamma;
}

}  // namespace latentgs
