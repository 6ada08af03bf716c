#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "analysis_internal.hpp"
#include "latentgs/analysis.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/io.hpp"

namespace latentgs {

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json run_manifest(const std::string& command, const nlohmann::json& config, std::uint64_t seed) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream stamp;
  stamp << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  return {{"tool", "latentgs"},
          {"version", LATENTGS_VERSION},
          {"command", command},
          {"config", config},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"created_utc", stamp.str()}};
}

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  p += ".manifest.json";
  return p;
}

void write_manifest(const std::filesystem::path& output, const nlohmann::json& manifest) {
  write_json(manifest_path(output), manifest);
}

nlohmann::json TrainJob::to_json() const {
  return {{"n_parents", n_parents},   {"split_seed", split_seed}, {"latent_dim", latent_dim},
          {"weights", weights.to_json()}, {"config", config.to_json()}};
}

std::filesystem::path cached_model_path(const std::filesystem::path& dir, const DatasetHeader& dataset,
                                        const TrainJob& job) {
  const nlohmann::json key = {{"dataset", dataset.to_json()}, {"job", job.to_json()}};
  std::ostringstream name;
  name << "L" << dataset.sites << "_N" << dataset.electrons << '_' << to_string(dataset.mode) << "_d"
       << job.latent_dim << "_s" << job.config.seed << '_' << config_hash(key) << ".bin";
  return dir / name.str();
}

namespace detail {

PrepareOptions prepare_options(const TrainJob& job) {
  PrepareOptions po;
  po.split_seed = job.split_seed;
  po.max_parents = job.n_parents;
  return po;
}

JobOutcome run_prepared_job(const DatasetHeader& source, const PreparedData& data, const TrainJob& job,
                            const JobOptions& options) {
  JobOutcome out;
  std::filesystem::path model_path;
  std::filesystem::path summary_path;
  if (!options.model_dir.empty()) {
    model_path = cached_model_path(options.model_dir, source, job);
    summary_path = model_path;
    summary_path += ".train.json";
  }

  if (!model_path.empty() && std::filesystem::exists(model_path) && std::filesystem::exists(summary_path)) {
    out.model = load_model(model_path);
    const nlohmann::json summary = read_json(summary_path);
    out.epochs = summary.at("epochs").get<int>();
    out.best_epoch = summary.at("best_epoch").get<int>();
    out.from_cache = true;
    out.test_rmse = reconstruction_rmse(out.model, data.test_x);
    out.test_rmse_raw = reconstruction_rmse_raw(out.model, data.test_x);
  } else {
    TrainResult result = train(data, job.latent_dim, job.weights, job.config);
    out.model = std::move(result.model);
    out.epochs = static_cast<int>(result.log.size());
    out.best_epoch = result.best_epoch;
    out.test_rmse = result.test_rmse;
    out.test_rmse_raw = result.test_rmse_raw;
    if (!model_path.empty()) {
      std::filesystem::create_directories(options.model_dir);
      save_model(model_path, out.model);
      write_json(summary_path, {{"epochs", out.epochs},
                                {"best_epoch", out.best_epoch},
                                {"best_val_loss", result.best_val_loss},
                                {"early_stopped", result.early_stopped}});
    }
  }

  if (options.evaluate_vqe) {
    const std::size_t n = std::min(options.vqe_potentials, data.test.size());
    std::vector<std::vector<double>> pots;
    std::vector<double> exact;
    pots.reserve(n);
    exact.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      pots.push_back(data.test[i].mu);
      exact.push_back(data.test[i].energy);
    }
    out.opt_results = optimize_potentials(out.model, pots, exact, options.vqe, 1);
    out.opt = summarize_energy_errors(out.opt_results);
  }
  return out;
}

}  // namespace detail

JobOutcome run_train_job(const Dataset& dataset, const TrainJob& job, const JobOptions& options) {
  const PreparedData data = prepare_data(dataset, detail::prepare_options(job));
  return detail::run_prepared_job(dataset.header, data, job, options);
}

}  // namespace latentgs
