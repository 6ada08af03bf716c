#include "latentgs/latent_vqe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <iomanip>
#include <ostream>
#include <thread>

#include "latentgs/errors.hpp"
#include "latentgs/ground_state.hpp"
#include "latentgs/io.hpp"

namespace latentgs {

void LatentOptConfig::validate() const {
  if (!(step > 0) || !(grad_tol > 0) || !(r_opt > 0) || !(w_abs >= 0) || !(armijo > 0 && armijo < 1)) {
    throw InvalidArgument("latent optimizer: step, tolerance and radius must be positive");
  }
  if (max_iter <= 0 || history <= 0 || max_backtracks <= 0) {
    throw InvalidArgument("latent optimizer: iteration counts must be positive");
  }
}

nlohmann::json LatentOptConfig::to_json() const {
  return {{"step", step},         {"grad_tol", grad_tol}, {"r_opt", r_opt},
          {"w_abs", w_abs},       {"max_iter", max_iter}, {"history", history},
          {"armijo", armijo},     {"max_backtracks", max_backtracks}};
}

LatentOptConfig LatentOptConfig::from_json(const nlohmann::json& j) {
  LatentOptConfig c;
  c.step = j.value("step", c.step);
  c.grad_tol = j.value("grad_tol", c.grad_tol);
  c.r_opt = j.value("r_opt", c.r_opt);
  c.w_abs = j.value("w_abs", c.w_abs);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.history = j.value("history", c.history);
  c.armijo = j.value("armijo", c.armijo);
  c.max_backtracks = j.value("max_backtracks", c.max_backtracks);
  c.validate();
  return c;
}

LatentEnergy::LatentEnergy(const AutoencoderModel& model, std::span<const double> mu) : model_(&model) {
  const DatasetHeader& sys = model.system();
  if (static_cast<int>(mu.size()) != sys.sites) {
    throw DimensionMismatch("potential has " + std::to_string(mu.size()) + " sites, model expects " +
                            std::to_string(sys.sites));
  }
  h_ = energy_coefficients(sys.instance(mu), sys.mode);
  if (h_.size() != model.input_dim()) throw DimensionMismatch("model feature width does not match its mode");
  const Standardizer& st = model.standardizer();
  if (st.dim() != h_.size()) throw DimensionMismatch("model has no standardizer of matching width");
  h_scaled_ = h_.cwiseProduct(st.scale());
  offset_ = h_.dot(st.mean());
}

double LatentEnergy::operator()(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
  if (z.size() != model_->latent_dim()) throw DimensionMismatch("latent vector has the wrong dimension");
  if (!grad) return offset_ + h_scaled_.dot(model_->decode(z).col(0));
  GradientTape tape;
  const Eigen::MatrixXd y = model_->decoder().forward(z, &tape);
  *grad = model_->decoder().backward(tape, h_scaled_, nullptr).col(0);
  return offset_ + h_scaled_.dot(y.col(0));
}

Eigen::VectorXd LatentEnergy::features(const Eigen::VectorXd& z) const {
  return model_->standardizer().invert(model_->decode(z)).col(0);
}

double latent_energy(const AutoencoderModel& model, std::span<const double> mu, const Eigen::VectorXd& z,
                     Eigen::VectorXd* grad) {
  return LatentEnergy(model, mu)(z, grad);
}

namespace {

struct Objective {
  const LatentEnergy& energy;
  const LatentOptConfig& config;

  // Returns the penalized value; `bare` receives dE/dz, `total` the full gradient.
  double operator()(const Eigen::VectorXd& z, double& e, Eigen::VectorXd& bare, Eigen::VectorXd& total) const {
    e = energy(z, &bare);
    total = bare;
    const double norm = z.norm();
    double value = e;
    if (norm > config.r_opt && config.w_abs > 0) {
      const double excess = norm - config.r_opt;
      value += config.w_abs * excess * excess;
      total += (2.0 * config.w_abs * excess / norm) * z;
    }
    return value;
  }
};

}  // namespace

OptResult minimize_latent(const AutoencoderModel& model, std::span<const double> mu, const LatentOptConfig& config) {
  config.validate();
  const LatentEnergy energy(model, mu);
  const Objective objective{energy, config};

  OptResult out;
  out.mu.assign(mu.begin(), mu.end());
  Eigen::VectorXd z = Eigen::VectorXd::Zero(model.latent_dim());
  double e = 0.0;
  Eigen::VectorXd bare;
  Eigen::VectorXd g;
  double f = objective(z, e, bare, g);

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd z_new;
  Eigen::VectorXd bare_new;
  Eigen::VectorXd g_new;
  std::vector<double> alpha(static_cast<std::size_t>(config.history));

  int iter = 0;
  for (;; ++iter) {
    if (!std::isfinite(f) || !g.allFinite()) {
      out.diagnostic = "non-finite objective";
      break;
    }
    if (bare.norm() <= config.grad_tol) {
      out.converged = true;
      break;
    }
    if (iter >= config.max_iter) {
      out.diagnostic = "iteration limit";
      break;
    }

    // two-loop recursion
    Eigen::VectorXd p = -g;
    const std::size_t m = s_hist.size();
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(p);
      p -= alpha[i] * y_hist[i];
    }
    if (m > 0) p *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(p);
      p += (alpha[i] - beta) * s_hist[i];
    }
    double slope = g.dot(p);
    if (!(slope < 0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      p = -g;
      slope = -g.squaredNorm();
    }

    double t = config.step;
    double f_new = 0.0;
    double e_new = 0.0;
    bool found = false;
    for (int k = 0; k < config.max_backtracks; ++k, t *= 0.5) {
      z_new = z + t * p;
      f_new = objective(z_new, e_new, bare_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + config.armijo * t * slope) {
        found = true;
        break;
      }
    }
    if (!found) {
      out.diagnostic = "line search failed";
      break;
    }
    Eigen::VectorXd s = z_new - z;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == config.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    z.swap(z_new);
    bare.swap(bare_new);
    g.swap(g_new);
    f = f_new;
    e = e_new;
  }

  out.iterations = iter;
  out.z_star = z;
  out.z_norm = z.norm();
  out.grad_norm = bare.norm();
  out.e_pred = e;
  out.accepted = out.converged && std::isfinite(e) && out.z_norm <= config.r_opt;
  if (out.converged && !out.accepted) out.diagnostic = "outside r_opt";
  return out;
}

std::vector<OptResult> optimize_potentials(const AutoencoderModel& model,
                                           const std::vector<std::vector<double>>& potentials,
                                           std::span<const double> exact, const LatentOptConfig& config,
                                           int threads) {
  if (!exact.empty() && exact.size() != potentials.size()) {
    throw DimensionMismatch("exact energies do not match the potentials");
  }
  config.validate();
  std::vector<OptResult> results(potentials.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < potentials.size(); i = next++) {
      results[i] = minimize_latent(model, potentials[i], config);
      results[i].e_exact = exact.empty()
                               ? ground_state(model.system().instance(potentials[i])).energy
                               : exact[i];
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(potentials.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
  }
  return results;
}

EnergyErrorSummary summarize_energy_errors(std::span<const OptResult> results) {
  EnergyErrorSummary s;
  s.n_points = results.size();
  double sq = 0.0;
  double rel = 0.0;
  double sq_all = 0.0;
  for (const auto& r : results) {
    const double e = r.e_pred - r.e_exact;
    sq_all += e * e;
    if (!r.accepted) continue;
    ++s.n_accepted;
    const double err = r.e_pred - r.e_exact;
    sq += err * err;
    rel += (err / r.e_exact) * (err / r.e_exact);
  }
  if (s.n_points > 0) s.retained = static_cast<double>(s.n_accepted) / static_cast<double>(s.n_points);
  if (s.n_accepted > 0) {
    s.rmse = std::sqrt(sq / static_cast<double>(s.n_accepted));
    s.relative_rmse = std::sqrt(rel / static_cast<double>(s.n_accepted));
  }
  // NaN propagates through sq_all
  if (s.n_points > 0) s.rmse_all = std::sqrt(sq_all / static_cast<double>(s.n_points));
  return s;
}

std::vector<SweepRow> evaluate_sweep(const std::vector<const AutoencoderModel*>& models,
                                     const std::vector<std::vector<double>>& potentials,
                                     std::span<const double> exact, const LatentOptConfig& config, int threads) {
  std::vector<double> energies(exact.begin(), exact.end());
  if (energies.empty() && !models.empty()) {
    energies.reserve(potentials.size());
    for (const auto& mu : potentials) energies.push_back(ground_state(models.front()->system().instance(mu)).energy);
  }
  std::vector<SweepRow> rows;
  for (const AutoencoderModel* m : models) {
    const auto results = optimize_potentials(*m, potentials, energies, config, threads);
    rows.push_back({m->latent_dim(), summarize_energy_errors(results)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.latent_dim < b.latent_dim; });
  return rows;
}

namespace {

void write_number(std::ostream& os, double v) {
  // NaN is written as an empty field
  if (!std::isnan(v)) os << v;
}

}  // namespace

void write_opt_results_csv(const std::filesystem::path& path, std::span<const OptResult> results) {
  const std::size_t sites = results.empty() ? 0 : results.front().mu.size();
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17);
    for (std::size_t i = 0; i < sites; ++i) os << "mu_" << i << ',';
    os << "E_pred,E_exact,accepted,iters,gradnorm,znorm\n";
    for (const auto& r : results) {
      for (double m : r.mu) os << m << ',';
      write_number(os, r.e_pred);
      os << ',';
      write_number(os, r.e_exact);
      os << ',' << (r.accepted ? 1 : 0) << ',' << r.iterations << ',';
      write_number(os, r.grad_norm);
      os << ',';
      write_number(os, r.z_norm);
      os << '\n';
    }
  });
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17) << "d,n_points,n_accepted,rmse,relative_rmse,retained,rmse_all\n";
    for (const auto& r : rows) {
      os << r.latent_dim << ',' << r.summary.n_points << ',' << r.summary.n_accepted << ',';
      write_number(os, r.summary.rmse);
      os << ',';
      write_number(os, r.summary.relative_rmse);
      os << ',' << r.summary.retained << ',';
      write_number(os, r.summary.rmse_all);
      os << '\n';
    }
  });
}

}  // namespace latentgs
