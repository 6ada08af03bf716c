#include "latentgs/hubbard.hpp"

#include <bit>
#include <string>

#include "latentgs/errors.hpp"

namespace latentgs {

HubbardInstance HubbardInstance::uniform(int sites, int electrons, double hopping,
                                         double interaction) {
  HubbardInstance inst;
  inst.sites = sites;
  inst.electrons = electrons;
  inst.hopping = hopping;
  inst.interaction = interaction;
  inst.mu.assign(static_cast<std::size_t>(sites), 0.0);
  return inst;
}

void HubbardInstance::validate() const {
  if (sites < 2 || sites > 16) {
    throw InvalidSector("site count must be in [2, 16], got " + std::to_string(sites));
  }
  if (electrons <= 0 || electrons > 2 * sites || electrons % 2 != 0) {
    throw InvalidSector("electron count must be even and in (0, 2L], got N=" +
                        std::to_string(electrons) + " for L=" + std::to_string(sites));
  }
  if (static_cast<int>(mu.size()) != sites) {
    throw DimensionMismatch("potential has " + std::to_string(mu.size()) +
                            " entries, expected " + std::to_string(sites));
  }
}

std::vector<std::uint32_t> fixed_popcount_masks(int sites, int count) {
  std::vector<std::uint32_t> masks;
  const std::uint32_t end = std::uint32_t{1} << sites;
  for (std::uint32_t m = 0; m < end; ++m) {
    if (std::popcount(m) == count) masks.push_back(m);
  }
  return masks;
}

SectorBasis build_spin_sector(int sites, int n_up, int n_dn) {
  if (sites < 1 || sites > 16 || n_up < 0 || n_dn < 0 || n_up > sites || n_dn > sites) {
    throw InvalidSector("invalid spin sector (L=" + std::to_string(sites) + ", n_up=" +
                        std::to_string(n_up) + ", n_dn=" + std::to_string(n_dn) + ")");
  }
  SectorBasis basis;
  basis.sites = sites;
  basis.n_up = n_up;
  basis.n_dn = n_dn;
  basis.up_configs = fixed_popcount_masks(sites, n_up);
  basis.dn_configs = fixed_popcount_masks(sites, n_dn);
  const std::size_t n_masks = std::size_t{1} << sites;
  basis.up_lookup.assign(n_masks, -1);
  basis.dn_lookup.assign(n_masks, -1);
  for (std::size_t i = 0; i < basis.up_configs.size(); ++i) {
    basis.up_lookup[basis.up_configs[i]] = static_cast<std::int32_t>(i);
  }
  for (std::size_t i = 0; i < basis.dn_configs.size(); ++i) {
    basis.dn_lookup[basis.dn_configs[i]] = static_cast<std::int32_t>(i);
  }
  return basis;
}

SectorBasis build_sector_basis(int sites, int electrons) {
  if (sites < 2 || sites > 16) {
    throw InvalidSector("site count must be in [2, 16], got " + std::to_string(sites));
  }
  if (electrons <= 0 || electrons % 2 != 0 || electrons > 2 * sites) {
    throw InvalidSector("S_z = 0 sector needs even N with 0 < N <= 2L, got N=" +
                        std::to_string(electrons));
  }
  return build_spin_sector(sites, electrons / 2, electrons / 2);
}

int hop_sign(std::uint32_t mask, int from, int to) {
  const int lo = from < to ? from : to;
  const int hi = from < to ? to : from;
  // bits strictly between lo and hi
  const std::uint32_t between = ((std::uint32_t{1} << hi) - 1) & ~((std::uint32_t{2} << lo) - 1);
  return (std::popcount(mask & between) & 1) ? -1 : 1;
}

namespace {

template <class Hop>
void collect_hops(const std::vector<std::uint32_t>& configs,
                  const std::vector<std::int32_t>& lookup, int sites, double t,
                  std::vector<Hop>& hops) {
  for (std::size_t a = 0; a < configs.size(); ++a) {
    const std::uint32_t m = configs[a];
    for (int i = 0; i < sites; ++i) {
      const int j = (i + 1) % sites;
      // c+_i c_j and its conjugate c+_j c_i
      const int pairs[2][2] = {{j, i}, {i, j}};
      for (const auto& p : pairs) {
        const int from = p[0];
        const int to = p[1];
        if (from == to) continue;
        if (!(m >> from & 1u) || (m >> to & 1u)) continue;
        const std::uint32_t target = m ^ (std::uint32_t{1} << from) ^ (std::uint32_t{1} << to);
        const int b = lookup[target];
        hops.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                        -t * hop_sign(m, from, to)});
      }
    }
  }
}

}  // namespace

HubbardHamiltonian::HubbardHamiltonian(const HubbardInstance& instance,
                                       const SectorBasis& basis)
    : n_dn_configs_(basis.dn_configs.size()) {
  instance.validate();
  if (basis.sites != instance.sites) {
    throw DimensionMismatch("basis and instance disagree on the site count");
  }
  const int L = instance.sites;
  collect_hops(basis.up_configs, basis.up_lookup, L, instance.hopping, up_hops_);
  collect_hops(basis.dn_configs, basis.dn_lookup, L, instance.hopping, dn_hops_);

  diagonal_.resize(static_cast<Eigen::Index>(basis.dim()));
  for (std::size_t a = 0; a < basis.up_configs.size(); ++a) {
    const std::uint32_t up = basis.up_configs[a];
    for (std::size_t b = 0; b < basis.dn_configs.size(); ++b) {
      const std::uint32_t dn = basis.dn_configs[b];
      double e = instance.interaction * std::popcount(up & dn);
      for (int i = 0; i < L; ++i) {
        const int occ = static_cast<int>(up >> i & 1u) + static_cast<int>(dn >> i & 1u);
        e += instance.mu[i] * occ;
      }
      diagonal_[static_cast<Eigen::Index>(basis.index(a, b))] = e;
    }
  }
}

void HubbardHamiltonian::apply(std::span<const double> in, std::span<double> out) const {
  const std::size_t n = dim();
  if (in.size() != n || out.size() != n) {
    throw DimensionMismatch("state vector has length " + std::to_string(in.size()) +
                            ", sector dimension is " + std::to_string(n));
  }
  const std::size_t nd = n_dn_configs_;
  for (std::size_t k = 0; k < n; ++k) out[k] = diagonal_[static_cast<Eigen::Index>(k)] * in[k];
  for (const Hop& h : up_hops_) {
    const double* src = in.data() + h.from * nd;
    double* dst = out.data() + h.to * nd;
    for (std::size_t b = 0; b < nd; ++b) dst[b] += h.amplitude * src[b];
  }
  const std::size_t nu = n / (nd == 0 ? 1 : nd);
  for (std::size_t a = 0; a < nu; ++a) {
    const double* src = in.data() + a * nd;
    double* dst = out.data() + a * nd;
    for (const Hop& h : dn_hops_) dst[h.to] += h.amplitude * src[h.from];
  }
}

Eigen::VectorXd HubbardHamiltonian::apply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(v.size());
  apply(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
        std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

Eigen::MatrixXd HubbardHamiltonian::dense() const {
  const auto n = static_cast<Eigen::Index>(dim());
  const auto nd = static_cast<Eigen::Index>(n_dn_configs_);
  Eigen::MatrixXd h = diagonal_.asDiagonal();
  const Eigen::Index nu = nd == 0 ? 0 : n / nd;
  for (const Hop& hp : up_hops_) {
    for (Eigen::Index b = 0; b < nd; ++b) {
      h(hp.to * nd + b, hp.from * nd + b) += hp.amplitude;
    }
  }
  for (Eigen::Index a = 0; a < nu; ++a) {
    for (const Hop& hp : dn_hops_) h(a * nd + hp.to, a * nd + hp.from) += hp.amplitude;
  }
  return h;
}

Eigen::VectorXd apply_hamiltonian(const HubbardInstance& instance, const SectorBasis& basis,
                                  const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != basis.dim()) {
    throw DimensionMismatch("state vector has length " + std::to_string(v.size()) +
                            ", sector dimension is " + std::to_string(basis.dim()));
  }
  return HubbardHamiltonian(instance, basis).apply(v);
}

}  // namespace latentgs
