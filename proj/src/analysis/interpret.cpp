#include <algorithm>
#include <cmath>
#include <iomanip>

#include "analysis_internal.hpp"
#include "latentgs/analysis.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/ground_state.hpp"
#include "latentgs/io.hpp"

namespace latentgs {

std::vector<FeatureBlock> feature_blocks(const DatasetHeader& header) {
  const Eigen::Index L = header.sites;
  if (header.mode == FeatureMode::omega) {
    return {{"hop", 0, L}, {"dens", L, L}, {"docc", 2 * L, L}};
  }
  return {{"gamma", 0, static_cast<Eigen::Index>(header.feature_dim())}};
}

std::vector<double> relative_frobenius(const Eigen::MatrixXd& jacobian, std::span<const FeatureBlock> blocks) {
  std::vector<double> r(blocks.size(), 0.0);
  double total = 0.0;
  for (std::size_t f = 0; f < blocks.size(); ++f) {
    if (blocks[f].begin + blocks[f].size > jacobian.cols()) throw DimensionMismatch("feature block out of range");
    r[f] = jacobian.middleCols(blocks[f].begin, blocks[f].size).norm();
    total += r[f];
  }
  if (total > 0) {
    for (double& v : r) v /= total;
  }
  return r;
}

JacobianReport encoder_jacobian_report(const AutoencoderModel& model, const Eigen::MatrixXd& x_std,
                                       std::size_t max_samples, JacobianSpace space) {
  const Network& enc = model.encoder();
  if (x_std.rows() != enc.input_dim()) throw DimensionMismatch("samples do not match the encoder input");
  const Eigen::Index n = std::min<Eigen::Index>(x_std.cols(), static_cast<Eigen::Index>(max_samples));
  if (n == 0) throw InvalidArgument("Jacobian report needs at least one sample");
  const Eigen::Index d = enc.output_dim();
  const Eigen::Index n_in = enc.input_dim();

  JacobianReport report;
  report.n_samples = static_cast<std::size_t>(n);
  report.blocks = feature_blocks(model.system());
  if (report.blocks.back().begin + report.blocks.back().size != n_in) {
    report.blocks = {{"all", 0, n_in}};
  }
  report.mean = Eigen::MatrixXd::Zero(d, n_in);
  report.mean_abs = Eigen::MatrixXd::Zero(d, n_in);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(d, n_in);
  std::vector<double> contrib(report.blocks.size(), 0.0);
  std::size_t contrib_count = 0;

  Eigen::ArrayXd column_scale = Eigen::ArrayXd::Ones(n_in);
  if (space == JacobianSpace::raw) column_scale = model.standardizer().scale().array().inverse();

  constexpr Eigen::Index kChunk = 1024;
  std::vector<Eigen::MatrixXd> dx(static_cast<std::size_t>(d));
  Eigen::MatrixXd jac(d, n_in);
  std::size_t seen = 0;
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    GradientTape tape;
    enc.forward(x_std.middleCols(start, len), &tape);
    for (Eigen::Index k = 0; k < d; ++k) {
      Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(d, len);
      dy.row(k).setOnes();
      dx[static_cast<std::size_t>(k)] = enc.backward(tape, dy, nullptr);
    }
    for (Eigen::Index s = 0; s < len; ++s) {
      for (Eigen::Index k = 0; k < d; ++k) {
        jac.row(k) = (dx[static_cast<std::size_t>(k)].col(s).array() * column_scale).matrix().transpose();
      }
      // Welford keeps identical samples at exactly zero spread
      ++seen;
      const Eigen::MatrixXd delta = jac - report.mean;
      report.mean += delta / static_cast<double>(seen);
      m2 += delta.cwiseProduct(jac - report.mean);
      report.mean_abs += (jac.cwiseAbs() - report.mean_abs) / static_cast<double>(seen);
      const std::vector<double> r = relative_frobenius(jac, report.blocks);
      if (std::any_of(r.begin(), r.end(), [](double v) { return v != 0.0; })) {
        ++contrib_count;
        for (std::size_t f = 0; f < r.size(); ++f) contrib[f] += r[f];
      }
    }
  }
  report.std = (m2 / static_cast<double>(seen)).cwiseMax(0.0).cwiseSqrt();
  const double mean_mass = report.mean.cwiseAbs().sum();
  report.variability_ratio = mean_mass > 0 ? report.std.sum() / mean_mass : 0.0;
  double total = 0.0;
  for (const double c : contrib) total += c;
  report.block_contributions.resize(contrib.size(), 0.0);
  if (contrib_count > 0 && total > 0) {
    for (std::size_t f = 0; f < contrib.size(); ++f) report.block_contributions[f] = contrib[f] / total;
  }
  return report;
}

void write_jacobian_csv(const std::filesystem::path& path, const JacobianReport& report) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17) << "latent,feature,block,mean,mean_abs,std\n";
    for (Eigen::Index k = 0; k < report.mean.rows(); ++k) {
      for (const auto& b : report.blocks) {
        for (Eigen::Index i = b.begin; i < b.begin + b.size; ++i) {
          os << k << ',' << i << ',' << b.name << ',' << report.mean(k, i) << ',' << report.mean_abs(k, i) << ','
             << report.std(k, i) << '\n';
        }
      }
    }
  });
}

void write_block_contributions_csv(const std::filesystem::path& path, const JacobianReport& report) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17) << "block,r_f,n_samples,variability_ratio\n";
    for (std::size_t f = 0; f < report.blocks.size(); ++f) {
      os << report.blocks[f].name << ',' << report.block_contributions[f] << ',' << report.n_samples << ','
         << report.variability_ratio << '\n';
    }
  });
}

// ---------------------------------------------------------------------------

nlohmann::json DegeneracyReport::to_json() const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"sites", sites},
          {"electrons", electrons},
          {"singlet_energies", singlet_energies},
          {"sector_energies", sector_energies},
          {"gap_1", finite_or_null(gap_1)},
          {"gap_2", finite_or_null(gap_2)},
          {"degenerate", degenerate}};
}

DegeneracyReport ground_state_gaps(int sites, int electrons, double hopping, double interaction,
                                   double degeneracy_tol) {
  SolverOptions options;
  options.n_lowest = 10;
  options.degeneracy_tol = degeneracy_tol;
  const GroundStateResult gs = ground_state(HubbardInstance::uniform(sites, electrons, hopping, interaction), options);
  DegeneracyReport r;
  r.sites = sites;
  r.electrons = electrons;
  r.singlet_energies = gs.singlet_energies;
  r.sector_energies = gs.lowest_energies;
  if (r.singlet_energies.size() > 1) r.gap_1 = r.singlet_energies[1] - r.singlet_energies[0];
  if (r.singlet_energies.size() > 2) r.gap_2 = r.singlet_energies[2] - r.singlet_energies[0];
  r.degenerate = r.gap_1 < degeneracy_tol;
  return r;
}

// ---------------------------------------------------------------------------

LatentGeometry export_latent_geometry(const AutoencoderModel& model, std::span<const DatasetRecord> records) {
  LatentGeometry g;
  const auto n = static_cast<Eigen::Index>(records.size());
  g.strength.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) g.strength[i] = potential_strength(records[static_cast<std::size_t>(i)].mu);
  if (n == 0) {
    g.z.resize(model.latent_dim(), 0);
    g.z_norm.resize(0);
    return g;
  }
  const Eigen::MatrixXd x = feature_matrix(records);
  if (x.rows() != model.input_dim()) throw DimensionMismatch("records do not match the model input");
  g.z = model.encode(model.standardizer().apply(x));
  g.z_norm = g.z.colwise().norm().transpose();
  return g;
}

void write_latent_geometry_csv(const std::filesystem::path& path, const LatentGeometry& geometry) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17);
    for (Eigen::Index k = 0; k < geometry.z.rows(); ++k) os << 'z' << (k + 1) << ',';
    os << "z_norm,strength\n";
    for (Eigen::Index i = 0; i < geometry.z.cols(); ++i) {
      for (Eigen::Index k = 0; k < geometry.z.rows(); ++k) os << geometry.z(k, i) << ',';
      os << geometry.z_norm[i] << ',' << geometry.strength[i] << '\n';
    }
  });
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace latentgs
