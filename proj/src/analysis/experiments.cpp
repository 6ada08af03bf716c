#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "analysis_internal.hpp"
#include "latentgs/analysis.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/io.hpp"

namespace latentgs {

namespace {

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (const double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------

void SweepConfig::validate() const {
  if (latent_dims.empty() || seeds.empty() || dataset_sizes.empty()) {
    throw InvalidArgument("sweep needs at least one latent dimension, seed and dataset size");
  }
  for (const int d : latent_dims) {
    if (d < 1) throw InvalidArgument("latent dimensions must be positive");
  }
  if (threads < 1) throw InvalidArgument("thread count must be positive");
  weights.validate();
  train.validate();
  job.vqe.validate();
}

nlohmann::json SweepConfig::to_json() const {
  return {{"latent_dims", latent_dims},
          {"seeds", seeds},
          {"dataset_sizes", dataset_sizes},
          {"split_seed", split_seed},
          {"weights", weights.to_json()},
          {"train", train.to_json()},
          {"evaluate_vqe", job.evaluate_vqe},
          {"vqe_potentials", job.vqe_potentials},
          {"vqe", job.vqe.to_json()},
          {"model_dir", job.model_dir.string()},
          {"threads", threads}};
}

SweepConfig SweepConfig::from_json(const nlohmann::json& j) {
  SweepConfig c;
  c.latent_dims = j.value("latent_dims", c.latent_dims);
  c.seeds = j.value("seeds", c.seeds);
  c.dataset_sizes = j.value("dataset_sizes", c.dataset_sizes);
  c.split_seed = j.value("split_seed", c.split_seed);
  if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
  if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
  c.job.evaluate_vqe = j.value("evaluate_vqe", c.job.evaluate_vqe);
  c.job.vqe_potentials = j.value("vqe_potentials", c.job.vqe_potentials);
  if (j.contains("vqe")) c.job.vqe = LatentOptConfig::from_json(j["vqe"]);
  c.job.model_dir = j.value("model_dir", std::string{});
  c.threads = j.value("threads", c.threads);
  return c;
}

SweepResult run_compression_sweep(std::span<const Dataset> datasets, const SweepConfig& config,
                                  const JobProgress& progress) {
  config.validate();

  struct Job {
    std::size_t dataset = 0;
    std::size_t size = 0;  // index into config.dataset_sizes
    TrainJob train;
  };
  std::vector<Job> jobs;
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    for (std::size_t si = 0; si < config.dataset_sizes.size(); ++si) {
      for (const int d : config.latent_dims) {
        for (const std::uint64_t seed : config.seeds) {
          Job job{di, si, {}};
          job.train.n_parents = config.dataset_sizes[si];
          job.train.split_seed = config.split_seed;
          job.train.latent_dim = d;
          job.train.weights = config.weights;
          job.train.config = config.train;
          job.train.config.seed = seed;
          jobs.push_back(std::move(job));
        }
      }
    }
  }

  // Prepared data is shared read-only by every job on the same (dataset, size).
  std::vector<std::vector<std::unique_ptr<PreparedData>>> prepared(datasets.size());
  std::vector<std::vector<std::string>> prepare_errors(datasets.size());
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    for (const std::size_t n : config.dataset_sizes) {
      PrepareOptions po;
      po.split_seed = config.split_seed;
      po.max_parents = n;
      try {
        prepared[di].push_back(std::make_unique<PreparedData>(prepare_data(datasets[di], po)));
        prepare_errors[di].emplace_back();
      } catch (const std::exception& e) {
        prepared[di].push_back(nullptr);
        prepare_errors[di].emplace_back(e.what());
      }
    }
  }

  SweepResult result;
  result.rows.resize(jobs.size());
  std::mutex progress_mutex;
  detail::parallel_for(jobs.size(), config.threads, [&](std::size_t i) {
    const Job& job = jobs[i];
    const DatasetHeader& header = datasets[job.dataset].header;
    CompressionRow& row = result.rows[i];
    row.sites = header.sites;
    row.electrons = header.electrons;
    row.mode = header.mode;
    row.latent_dim = job.train.latent_dim;
    row.seed = job.train.config.seed;
    const PreparedData* data = prepared[job.dataset][job.size].get();
    if (!data) {
      row.n_parents = job.train.n_parents;
      row.error = prepare_errors[job.dataset][job.size];
    } else {
      const std::size_t available = datasets[job.dataset].records.size();
      row.n_parents = job.train.n_parents ? std::min(job.train.n_parents, available) : available;
      try {
        const JobOutcome out = detail::run_prepared_job(header, *data, job.train, config.job);
        row.test_rmse = out.test_rmse;
        row.test_rmse_raw = out.test_rmse_raw;
        row.epochs = out.epochs;
        row.best_epoch = out.best_epoch;
        if (config.job.evaluate_vqe) {
          row.opt_rmse = out.opt.rmse;
          row.opt_relative_rmse = out.opt.relative_rmse;
          row.opt_rmse_all = out.opt.rmse_all;
          row.retained = out.opt.retained;
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
    if (progress) {
      const std::lock_guard lock(progress_mutex);
      progress(row);
    }
  });

  std::stable_sort(result.rows.begin(), result.rows.end(), [](const CompressionRow& a, const CompressionRow& b) {
    return std::tuple(a.sites, a.electrons, static_cast<int>(a.mode), a.n_parents, a.latent_dim, a.seed) <
           std::tuple(b.sites, b.electrons, static_cast<int>(b.mode), b.n_parents, b.latent_dim, b.seed);
  });
  return result;
}

void write_sweep_result_csv(const std::filesystem::path& path, const SweepResult& result) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17)
       << "L,N,mode,n_parents,d,seed,test_rmse,test_rmse_raw,opt_rmse,opt_relative_rmse,opt_rmse_all,retained,epochs,"
          "best_epoch,error\n";
    for (const auto& r : result.rows) {
      os << r.sites << ',' << r.electrons << ',' << to_string(r.mode) << ',' << r.n_parents << ','
         << r.latent_dim << ',' << r.seed << ',';
      for (const double v : {r.test_rmse, r.test_rmse_raw, r.opt_rmse, r.opt_relative_rmse, r.opt_rmse_all, r.retained}) {
        detail::write_number(os, v);
        os << ',';
      }
      os << r.epochs << ',' << r.best_epoch << ',';
      detail::write_quoted(os, r.error);
      os << '\n';
    }
  });
}

std::vector<DimStatistics> rmse_by_dimension(const SweepResult& result, int sites, std::size_t n_parents) {
  std::map<int, std::vector<double>> by_dim;
  for (const auto& r : result.rows) {
    if (!r.error.empty() || !std::isfinite(r.test_rmse)) continue;
    if (sites != 0 && r.sites != sites) continue;
    if (n_parents != 0 && r.n_parents != n_parents) continue;
    by_dim[r.latent_dim].push_back(r.test_rmse);
  }
  std::vector<DimStatistics> out;
  for (const auto& [d, values] : by_dim) {
    DimStatistics s;
    s.latent_dim = d;
    s.count = values.size();
    s.mean = mean_of(values);
    s.std = sample_std(values, s.mean);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::full: return "full";
    case AblationVariant::rec_only: return "rec_only";
    case AblationVariant::no_lip: return "no_lip";
    case AblationVariant::no_well: return "no_well";
    case AblationVariant::no_repel: return "no_repel";
    case AblationVariant::linear: return "linear";
  }
  return "unknown";
}

AblationVariant parse_ablation_variant(const std::string& text) {
  for (const AblationVariant v : all_ablation_variants()) {
    if (to_string(v) == text) return v;
  }
  throw InvalidArgument("unknown ablation variant '" + text + "'");
}

std::vector<AblationVariant> all_ablation_variants() {
  return {AblationVariant::full,    AblationVariant::rec_only, AblationVariant::no_lip,
          AblationVariant::no_well, AblationVariant::no_repel, AblationVariant::linear};
}

VariantSettings variant_settings(AblationVariant variant, const LossWeights& full, const TrainConfig& config) {
  VariantSettings s{full, config};
  switch (variant) {
    case AblationVariant::full: break;
    case AblationVariant::rec_only:
      s.weights.alpha = s.weights.beta = s.weights.gamma = s.weights.delta = 0.0;
      break;
    case AblationVariant::no_lip: s.weights.gamma = s.weights.delta = 0.0; break;
    case AblationVariant::no_well: s.weights.alpha = 0.0; break;
    case AblationVariant::no_repel: s.weights.beta = 0.0; break;
    case AblationVariant::linear: s.config.linear = true; break;
  }
  return s;
}

void AblationConfig::validate() const {
  if (variants.empty() || seeds.empty()) throw InvalidArgument("ablation needs variants and seeds");
  if (latent_dim < 0) throw InvalidArgument("latent dimension must be non-negative");
  if (threads < 1) throw InvalidArgument("thread count must be positive");
  weights.validate();
  train.validate();
  job.vqe.validate();
}

nlohmann::json AblationConfig::to_json() const {
  std::vector<std::string> names;
  for (const auto v : variants) names.push_back(to_string(v));
  return {{"variants", names},
          {"seeds", seeds},
          {"latent_dim", latent_dim},
          {"n_parents", n_parents},
          {"split_seed", split_seed},
          {"weights", weights.to_json()},
          {"train", train.to_json()},
          {"vqe_potentials", job.vqe_potentials},
          {"vqe", job.vqe.to_json()},
          {"model_dir", job.model_dir.string()},
          {"threads", threads}};
}

AblationConfig AblationConfig::from_json(const nlohmann::json& j) {
  AblationConfig c;
  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto& name : j["variants"]) c.variants.push_back(parse_ablation_variant(name.get<std::string>()));
  }
  c.seeds = j.value("seeds", c.seeds);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.n_parents = j.value("n_parents", c.n_parents);
  c.split_seed = j.value("split_seed", c.split_seed);
  if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
  if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
  c.job.vqe_potentials = j.value("vqe_potentials", c.job.vqe_potentials);
  if (j.contains("vqe")) c.job.vqe = LatentOptConfig::from_json(j["vqe"]);
  c.job.model_dir = j.value("model_dir", std::string{});
  c.threads = j.value("threads", c.threads);
  return c;
}

const AblationSummary& AblationResult::find(AblationVariant variant) const {
  for (const auto& s : summary) {
    if (s.variant == variant) return s;
  }
  throw InvalidArgument("variant '" + to_string(variant) + "' is not part of this ablation");
}

double pooled_std(double std_a, double std_b) {
  const double a = std::isnan(std_a) ? 0.0 : std_a;
  const double b = std::isnan(std_b) ? 0.0 : std_b;
  return std::sqrt(0.5 * (a * a + b * b));
}

AblationResult run_ablation(const Dataset& dataset, const AblationConfig& config) {
  config.validate();
  TrainJob base;
  base.n_parents = config.n_parents;
  base.split_seed = config.split_seed;
  base.latent_dim = config.latent_dim > 0 ? config.latent_dim : std::max(1, dataset.header.sites - 1);
  const PreparedData data = prepare_data(dataset, detail::prepare_options(base));

  JobOptions options = config.job;
  options.evaluate_vqe = true;

  AblationResult result;
  for (const auto v : config.variants) {
    for (const auto seed : config.seeds) {
      AblationRun run;
      run.variant = v;
      run.seed = seed;
      result.runs.push_back(run);
    }
  }
  detail::parallel_for(result.runs.size(), config.threads, [&](std::size_t i) {
    AblationRun& run = result.runs[i];
    const VariantSettings s = variant_settings(run.variant, config.weights, config.train);
    TrainJob job = base;
    job.weights = s.weights;
    job.config = s.config;
    job.config.seed = run.seed;
    try {
      const JobOutcome out = detail::run_prepared_job(dataset.header, data, job, options);
      run.test_rmse = out.test_rmse;
      run.opt_rmse = out.opt.rmse;
      run.opt_relative_rmse = out.opt.relative_rmse;
      run.opt_rmse_all = out.opt.rmse_all;
      run.retained = out.opt.retained;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  });

  for (const auto v : config.variants) {
    AblationSummary s;
    s.variant = v;
    std::vector<double> rec, opt, opt_all, kept;
    for (const auto& run : result.runs) {
      if (run.variant != v || !run.error.empty()) continue;
      ++s.runs;
      if (std::isfinite(run.test_rmse)) rec.push_back(run.test_rmse);
      if (std::isfinite(run.opt_rmse)) opt.push_back(run.opt_rmse);
      if (std::isfinite(run.opt_rmse_all)) opt_all.push_back(run.opt_rmse_all);
      if (std::isfinite(run.retained)) kept.push_back(run.retained);
    }
    s.test_rmse_mean = mean_of(rec);
    s.test_rmse_std = rec.empty() ? std::numeric_limits<double>::quiet_NaN() : sample_std(rec, s.test_rmse_mean);
    s.opt_rmse_mean = mean_of(opt);
    s.opt_rmse_std = opt.empty() ? std::numeric_limits<double>::quiet_NaN() : sample_std(opt, s.opt_rmse_mean);
    s.opt_rmse_all_mean = mean_of(opt_all);
    s.opt_rmse_all_std =
        opt_all.empty() ? std::numeric_limits<double>::quiet_NaN() : sample_std(opt_all, s.opt_rmse_all_mean);
    s.retained_mean = mean_of(kept);
    result.summary.push_back(s);
  }
  return result;
}

void write_ablation_runs_csv(const std::filesystem::path& path, const AblationResult& result) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17) << "variant,seed,test_rmse,opt_rmse,opt_relative_rmse,opt_rmse_all,retained,error\n";
    for (const auto& r : result.runs) {
      os << to_string(r.variant) << ',' << r.seed << ',';
      for (const double v : {r.test_rmse, r.opt_rmse, r.opt_relative_rmse, r.opt_rmse_all, r.retained}) {
        detail::write_number(os, v);
        os << ',';
      }
      detail::write_quoted(os, r.error);
      os << '\n';
    }
  });
}

void write_ablation_summary_csv(const std::filesystem::path& path, const AblationResult& result) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17)
       << "variant,runs,test_rmse_mean,test_rmse_std,opt_rmse_mean,opt_rmse_std,opt_rmse_all_mean,opt_rmse_all_std,"
          "retained_mean\n";
    for (const auto& s : result.summary) {
      os << to_string(s.variant) << ',' << s.runs;
      for (const double v :
           {s.test_rmse_mean, s.test_rmse_std, s.opt_rmse_mean, s.opt_rmse_std, s.opt_rmse_all_mean,
            s.opt_rmse_all_std, s.retained_mean}) {
        os << ',';
        detail::write_number(os, v);
      }
      os << '\n';
    }
  });
}

}  // namespace latentgs
