#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "latentgs/analysis.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/io.hpp"

namespace latentgs::cli {

namespace {

class FileNotFound : public Error {
 public:
  explicit FileNotFound(const std::filesystem::path& p) : Error("file not found: " + p.string()) {}
};

// JSON counterpart of CLI11's TOML reader: nested objects address subcommands.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("invalid JSON config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("JSON config must be an object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it->is_object()) {
        auto next = parents;
        next.push_back(it.key());
        collect(*it, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      items.push_back(std::move(item));
    }
  }
};

std::filesystem::path output_path(const std::string& p) {
  std::filesystem::path path(p);
  if (const char* root = std::getenv("LATENTGS_OUTPUT_ROOT"); root && *root && path.is_relative()) {
    path = std::filesystem::path(root) / path;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  return path;
}

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) throw FileNotFound(p);
}

Dataset load_dataset(const std::string& p) {
  require_file(p);
  return read_dataset(p);
}

AutoencoderModel load_model_file(const std::string& p) {
  require_file(p);
  return load_model(p);
}

// Test split of `dataset` as seen by `model` during training.
std::vector<DatasetRecord> held_out_records(const AutoencoderModel& model, const Dataset& dataset) {
  const DatasetHeader& sys = model.system();
  if (sys.sites != dataset.header.sites || sys.electrons != dataset.header.electrons ||
      sys.mode != dataset.header.mode) {
    throw InvalidArgument("dataset does not match the model's system (L, N, mode)");
  }
  std::size_t n = dataset.records.size();
  if (model.n_parents > 0) n = std::min(n, model.n_parents);
  const SplitIndices split = split_dataset(n, model.split_seed);
  std::vector<DatasetRecord> out;
  out.reserve(split.test.size());
  for (const std::size_t i : split.test) out.push_back(dataset.records[i]);
  return out;
}

struct Global {
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool quiet = false;
};

void add_train_options(CLI::App* sub, TrainConfig& c, LossWeights& w) {
  sub->add_option("--epochs", c.max_epochs, "Maximum training epochs")->capture_default_str();
  sub->add_option("--batch", c.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--lr", c.learning_rate, "Initial Adam learning rate")->capture_default_str();
  sub->add_option("--patience", c.early_stop_patience, "Early-stopping patience (epochs)")->capture_default_str();
  sub->add_option("--plateau-patience", c.plateau_patience, "Scheduler patience (epochs)")->capture_default_str();
  sub->add_option("--width-scale", c.width_scale, "Hidden-width scale lambda")->capture_default_str();
  sub->add_flag("--linear", c.linear, "Single linear encoder and decoder layers");
  sub->add_flag("!--no-scale-search", c.latent_scale_search, "Disable the per-epoch latent scale search");
  sub->add_option("--alpha", w.alpha, "Radial well weight")->capture_default_str();
  sub->add_option("--beta", w.beta, "Repulsion weight")->capture_default_str();
  sub->add_option("--gamma", w.gamma, "Encoder Lipschitz weight")->capture_default_str();
  sub->add_option("--delta", w.delta, "Decoder Lipschitz weight")->capture_default_str();
  sub->add_option("--radius", w.radius, "Radial well radius")->capture_default_str();
}

void add_vqe_options(CLI::App* sub, LatentOptConfig& c) {
  sub->add_option("--step", c.step, "Initial line-search step")->capture_default_str();
  sub->add_option("--grad-tol", c.grad_tol, "Convergence threshold on |dE/dz|")->capture_default_str();
  sub->add_option("--r-opt", c.r_opt, "Acceptance radius")->capture_default_str();
  sub->add_option("--w-abs", c.w_abs, "Absorbing well weight")->capture_default_str();
  sub->add_option("--max-iter", c.max_iter, "Iteration limit")->capture_default_str();
}

void write_with_manifest(const std::filesystem::path& path, const std::string& command, const nlohmann::json& config,
                         std::uint64_t seed) {
  write_manifest(path, run_manifest(command, config, seed));
}

EpochCallback progress_printer(std::ostream& err, bool quiet, int every, const std::string& tag) {
  if (quiet) return {};
  return [&err, every, tag](const EpochRecord& r) {
    if (r.epoch % every != 0) return;
    err << '[' << tag << "] epoch " << r.epoch << " train " << std::scientific << std::setprecision(4)
        << r.train.total << " val " << r.val.total << " lr " << r.learning_rate << std::defaultfloat << '\n';
  };
}

std::vector<std::vector<double>> read_potentials_csv(const std::filesystem::path& path, int sites,
                                                     std::vector<double>& exact) {
  require_file(path);
  std::ifstream in(path);
  std::vector<std::vector<double>> pots;
  exact.clear();
  std::string line;
  std::size_t line_no = 0;
  int width = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    const int n = static_cast<int>(row.size());
    if (n != sites && n != sites + 1) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(sites) +
                        " potentials (optionally followed by the exact energy)");
    }
    if (width >= 0 && n != width) throw FormatError(path.string() + ": rows have inconsistent widths");
    width = n;
    if (n == sites + 1) {
      exact.push_back(row.back());
      row.pop_back();
    }
    pots.push_back(std::move(row));
  }
  if (pots.empty()) throw FormatError(path.string() + ": no potentials");
  return pots;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-space ground-state learning for the 1-D Hubbard model", "latentgs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or JSON config file; command-line flags take precedence");
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string value;
    if (args[i] == "--config" && i + 1 < args.size()) value = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) value = args[i].substr(9);
    if (value.size() >= 5 && value.substr(value.size() - 5) == ".json") {
      app.config_formatter(std::make_shared<JsonConfig>());
    }
  }

  Global g;
  app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (outputs are deterministic at 1)")->check(CLI::PositiveNumber);
  app.add_flag("--quiet,-q", g.quiet, "Suppress progress output");

  // gen-data
  GenerateOptions gen;
  std::string gen_out;
  std::string gen_mode = "omega";
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate an exact-diagonalization dataset");
  gen_cmd->add_option("--L", gen.sites, "Sites")->required();
  gen_cmd->add_option("--N", gen.electrons, "Electrons")->required();
  gen_cmd->add_option("--n-inst", gen.n_inst, "Parent instances")->required();
  gen_cmd->add_option("--mode", gen_mode, "Features: omega or gamma")->check(CLI::IsMember({"omega", "gamma"}));
  gen_cmd->add_option("--t", gen.hopping, "Hopping")->capture_default_str();
  gen_cmd->add_option("--U", gen.interaction, "On-site interaction")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Output dataset file")->required();

  // train
  TrainConfig train_cfg;
  LossWeights train_w;
  std::string train_data, train_out, train_log;
  int train_d = 0;
  std::uint64_t train_split = 0;
  std::size_t train_parents = 0;
  int log_every = 10;
  auto* train_cmd = app.add_subcommand("train", "Train an autoencoder");
  train_cmd->add_option("--data", train_data, "Dataset file")->required();
  train_cmd->add_option("--d", train_d, "Latent dimension")->required()->check(CLI::PositiveNumber);
  train_cmd->add_option("--split-seed", train_split, "Split seed")->capture_default_str();
  train_cmd->add_option("--n-parents", train_parents, "Use only the first n parents (0: all)");
  train_cmd->add_option("--out", train_out, "Output model file")->required();
  train_cmd->add_option("--log", train_log, "Training log CSV");
  train_cmd->add_option("--log-every", log_every, "Progress interval in epochs")->check(CLI::PositiveNumber);
  add_train_options(train_cmd, train_cfg, train_w);

  // sweep
  SweepConfig sweep;
  sweep.seeds = {1, 2, 3};
  std::vector<std::string> sweep_data;
  std::string sweep_out, sweep_model_dir;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate models over latent dimensions and seeds");
  sweep_cmd->add_option("--data", sweep_data, "Dataset files")->required();
  sweep_cmd->add_option("--dims", sweep.latent_dims, "Latent dimensions")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.seeds, "Initialization seeds")->delimiter(',');
  sweep_cmd->add_option("--sizes", sweep.dataset_sizes, "Parent counts (0: all)")->delimiter(',');
  sweep_cmd->add_option("--split-seed", sweep.split_seed, "Split seed");
  sweep_cmd->add_flag("--vqe", sweep.job.evaluate_vqe, "Also run latent energy minimization");
  sweep_cmd->add_option("--vqe-potentials", sweep.job.vqe_potentials, "Test potentials per model");
  sweep_cmd->add_option("--model-dir", sweep_model_dir, "Cache directory for trained models");
  sweep_cmd->add_option("--out", sweep_out, "Output CSV")->required();
  add_train_options(sweep_cmd, sweep.train, sweep.weights);
  add_vqe_options(sweep_cmd, sweep.job.vqe);

  // optimize
  LatentOptConfig opt_cfg;
  std::string opt_model, opt_pots, opt_out;
  auto* opt_cmd = app.add_subcommand("optimize", "Minimize the energy in latent space for given potentials");
  opt_cmd->add_option("--model", opt_model, "Model file")->required();
  opt_cmd->add_option("--potentials-file", opt_pots, "CSV of potentials, optional last column E_exact")->required();
  opt_cmd->add_option("--out", opt_out, "Output CSV")->required();
  add_vqe_options(opt_cmd, opt_cfg);

  // ablate
  AblationConfig abl;
  std::string abl_data, abl_out, abl_runs, abl_model_dir;
  std::vector<std::string> abl_variants;
  auto* abl_cmd = app.add_subcommand("ablate", "Train and compare the ablation variants");
  abl_cmd->add_option("--data", abl_data, "Dataset file")->required();
  abl_cmd->add_option("--d", abl.latent_dim, "Latent dimension (0: L - 1)");
  abl_cmd->add_option("--seeds", abl.seeds, "Initialization seeds")->delimiter(',');
  abl_cmd->add_option("--variants", abl_variants, "Variants to run")
      ->delimiter(',')
      ->check(CLI::IsMember({"full", "rec_only", "no_lip", "no_well", "no_repel", "linear"}));
  abl_cmd->add_option("--n-parents", abl.n_parents, "Use only the first n parents (0: all)");
  abl_cmd->add_option("--split-seed", abl.split_seed, "Split seed");
  abl_cmd->add_option("--vqe-potentials", abl.job.vqe_potentials, "Test potentials per model");
  abl_cmd->add_option("--model-dir", abl_model_dir, "Cache directory for trained models");
  abl_cmd->add_option("--out", abl_out, "Summary CSV")->required();
  abl_cmd->add_option("--runs-out", abl_runs, "Per-run CSV (default: <out stem>_runs.csv)");
  add_train_options(abl_cmd, abl.train, abl.weights);
  add_vqe_options(abl_cmd, abl.job.vqe);

  // interpret
  std::string int_model, int_data, int_out, int_jac_out, int_space = "standardized";
  std::size_t int_samples = 10000;
  auto* int_cmd = app.add_subcommand("interpret", "Encoder Jacobian statistics on held-out samples");
  int_cmd->add_option("--model", int_model, "Model file")->required();
  int_cmd->add_option("--data", int_data, "Dataset the model was trained on")->required();
  int_cmd->add_option("--samples", int_samples, "Maximum samples")->capture_default_str();
  int_cmd->add_option("--space", int_space, "standardized or raw")->check(CLI::IsMember({"standardized", "raw"}));
  int_cmd->add_option("--out", int_out, "Block contribution CSV")->required();
  int_cmd->add_option("--jacobian-out", int_jac_out, "Per-entry Jacobian statistics CSV");

  // degenerate
  int deg_sites = 5, deg_electrons = 4, deg_d = 0;
  std::size_t deg_inst = 10000;
  bool deg_gaps_only = false;
  std::string deg_report, deg_out, deg_data, deg_model_out;
  TrainConfig deg_cfg;
  LossWeights deg_w;
  auto* deg_cmd = app.add_subcommand("degenerate", "Degeneracy report and latent export for an odd chain");
  deg_cmd->add_option("--L", deg_sites, "Sites")->capture_default_str();
  deg_cmd->add_option("--N", deg_electrons, "Electrons")->capture_default_str();
  deg_cmd->add_option("--report", deg_report, "Gap report JSON")->required();
  deg_cmd->add_flag("--gaps-only", deg_gaps_only, "Skip training and export");
  deg_cmd->add_option("--data", deg_data, "Existing dataset (generated otherwise)");
  deg_cmd->add_option("--n-inst", deg_inst, "Parents to generate when --data is absent")->capture_default_str();
  deg_cmd->add_option("--d", deg_d, "Latent dimension (0: L - 1)");
  deg_cmd->add_option("--out", deg_out, "Latent geometry CSV");
  deg_cmd->add_option("--model-out", deg_model_out, "Save the trained model");
  add_train_options(deg_cmd, deg_cfg, deg_w);

  // export-geometry
  std::string geo_model, geo_data, geo_out;
  auto* geo_cmd = app.add_subcommand("export-geometry", "Export held-out latent coordinates");
  geo_cmd->add_option("--model", geo_model, "Model file")->required();
  geo_cmd->add_option("--data", geo_data, "Dataset the model was trained on")->required();
  geo_cmd->add_option("--out", geo_out, "Output CSV")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    const auto chosen = app.get_subcommands();
    err << '\n' << (chosen.empty() ? app.help() : chosen.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen_cmd) {
      gen.mode = parse_feature_mode(gen_mode);
      gen.seed = g.seed;
      gen.threads = g.threads;
      const auto path = output_path(gen_out);
      const Dataset ds = generate_dataset(gen);
      write_dataset(path, ds);
      write_with_manifest(path, "gen-data",
                          {{"L", gen.sites}, {"N", gen.electrons}, {"n_inst", gen.n_inst}, {"mode", gen_mode},
                           {"t", gen.hopping}, {"U", gen.interaction}, {"seed", gen.seed}},
                          g.seed);
      out << "wrote " << ds.records.size() << " records to " << path.string() << '\n';
    } else if (*train_cmd) {
      const Dataset ds = load_dataset(train_data);
      train_cfg.seed = g.seed;
      PrepareOptions po;
      po.split_seed = train_split;
      po.max_parents = train_parents;
      const PreparedData data = prepare_data(ds, po);
      const TrainResult r = train(data, train_d, train_w, train_cfg, progress_printer(err, g.quiet, log_every, "train"));
      const auto path = output_path(train_out);
      save_model(path, r.model);
      const nlohmann::json config = {{"data", train_data},         {"d", train_d},
                                     {"split_seed", train_split},  {"n_parents", train_parents},
                                     {"train", train_cfg.to_json()}, {"weights", train_w.to_json()}};
      write_with_manifest(path, "train", config, g.seed);
      if (!train_log.empty()) {
        const auto log_path = output_path(train_log);
        write_training_log(log_path, r.log);
        write_with_manifest(log_path, "train", config, g.seed);
      }
      out << std::setprecision(6) << "epochs " << r.log.size() << " best_epoch " << r.best_epoch << " test_rmse "
          << r.test_rmse << " test_rmse_raw " << r.test_rmse_raw << '\n';
    } else if (*sweep_cmd) {
      std::vector<Dataset> sets;
      for (const auto& p : sweep_data) sets.push_back(load_dataset(p));
      sweep.threads = g.threads;
      sweep.job.model_dir = sweep_model_dir;
      const auto path = output_path(sweep_out);
      const SweepResult res = run_compression_sweep(sets, sweep, [&](const CompressionRow& r) {
        if (g.quiet) return;
        err << "[sweep] L=" << r.sites << " d=" << r.latent_dim << " seed=" << r.seed << " n=" << r.n_parents;
        if (r.error.empty()) {
          err << " test_rmse " << r.test_rmse << '\n';
        } else {
          err << " error: " << r.error << '\n';
        }
      });
      write_sweep_result_csv(path, res);
      nlohmann::json config = sweep.to_json();
      config["data"] = sweep_data;
      config.erase("threads");
      write_with_manifest(path, "sweep", config, g.seed);
      std::size_t failed = 0;
      for (const auto& r : res.rows) failed += r.error.empty() ? 0 : 1;
      out << "wrote " << res.rows.size() << " rows (" << failed << " failed) to " << path.string() << '\n';
    } else if (*opt_cmd) {
      const AutoencoderModel model = load_model_file(opt_model);
      std::vector<double> exact;
      const auto pots = read_potentials_csv(opt_pots, model.system().sites, exact);
      const auto results = optimize_potentials(model, pots, exact, opt_cfg, g.threads);
      const auto path = output_path(opt_out);
      write_opt_results_csv(path, results);
      write_with_manifest(path, "optimize",
                          {{"model", opt_model}, {"potentials_file", opt_pots}, {"vqe", opt_cfg.to_json()}}, g.seed);
      const EnergyErrorSummary s = summarize_energy_errors(results);
      out << "accepted " << s.n_accepted << '/' << s.n_points << " rmse " << s.rmse << '\n';
    } else if (*abl_cmd) {
      const Dataset ds = load_dataset(abl_data);
      if (!abl_variants.empty()) {
        abl.variants.clear();
        for (const auto& v : abl_variants) abl.variants.push_back(parse_ablation_variant(v));
      }
      abl.threads = g.threads;
      abl.job.model_dir = abl_model_dir;
      const auto summary_path = output_path(abl_out);
      std::filesystem::path runs_path;
      if (abl_runs.empty()) {
        runs_path = summary_path.parent_path() / (summary_path.stem().string() + "_runs.csv");
      } else {
        runs_path = output_path(abl_runs);
      }
      const AblationResult res = run_ablation(ds, abl);
      write_ablation_summary_csv(summary_path, res);
      write_ablation_runs_csv(runs_path, res);
      nlohmann::json config = abl.to_json();
      config["data"] = abl_data;
      config.erase("threads");
      write_with_manifest(summary_path, "ablate", config, g.seed);
      write_with_manifest(runs_path, "ablate", config, g.seed);
      for (const auto& s : res.summary) {
        out << std::setw(9) << std::left << to_string(s.variant) << std::right << " test_rmse " << s.test_rmse_mean
            << " opt_rmse " << s.opt_rmse_mean << '\n';
      }
    } else if (*int_cmd) {
      const AutoencoderModel model = load_model_file(int_model);
      const Dataset ds = load_dataset(int_data);
      const auto records = held_out_records(model, ds);
      const Eigen::MatrixXd x = model.standardizer().apply(feature_matrix(records));
      const JacobianSpace space = int_space == "raw" ? JacobianSpace::raw : JacobianSpace::standardized;
      const JacobianReport rep = encoder_jacobian_report(model, x, int_samples, space);
      const nlohmann::json config = {
          {"model", int_model}, {"data", int_data}, {"samples", int_samples}, {"space", int_space}};
      const auto path = output_path(int_out);
      write_block_contributions_csv(path, rep);
      write_with_manifest(path, "interpret", config, g.seed);
      if (!int_jac_out.empty()) {
        const auto jac_path = output_path(int_jac_out);
        write_jacobian_csv(jac_path, rep);
        write_with_manifest(jac_path, "interpret", config, g.seed);
      }
      for (std::size_t f = 0; f < rep.blocks.size(); ++f) {
        out << rep.blocks[f].name << " r_f " << rep.block_contributions[f] << '\n';
      }
      out << "variability_ratio " << rep.variability_ratio << '\n';
    } else if (*deg_cmd) {
      DegeneracyReport gaps = ground_state_gaps(deg_sites, deg_electrons);
      nlohmann::json report = {{"gaps", gaps.to_json()}};
      nlohmann::json config = {{"L", deg_sites}, {"N", deg_electrons}, {"gaps_only", deg_gaps_only}};
      out << std::setprecision(10) << "E1-E0 " << gaps.gap_1 << " E2-E0 " << gaps.gap_2 << '\n';
      if (!deg_gaps_only) {
        Dataset ds;
        if (deg_data.empty()) {
          GenerateOptions o;
          o.sites = deg_sites;
          o.electrons = deg_electrons;
          o.n_inst = deg_inst;
          o.seed = g.seed;
          o.threads = g.threads;
          ds = generate_dataset(o);
        } else {
          ds = load_dataset(deg_data);
        }
        const int d = deg_d > 0 ? deg_d : std::max(1, deg_sites - 1);
        deg_cfg.seed = g.seed;
        PrepareOptions po;
        po.split_seed = g.seed;
        const PreparedData data = prepare_data(ds, po);
        const TrainResult r = train(data, d, deg_w, deg_cfg, progress_printer(err, g.quiet, 10, "degenerate"));
        report["latent_dim"] = d;
        report["test_rmse"] = r.test_rmse;
        report["test_rmse_raw"] = r.test_rmse_raw;
        report["epochs"] = r.log.size();
        config["n_inst"] = deg_data.empty() ? deg_inst : ds.records.size();
        config["data"] = deg_data;
        config["d"] = d;
        config["train"] = deg_cfg.to_json();
        config["weights"] = deg_w.to_json();
        if (!deg_out.empty()) {
          const auto geo_path = output_path(deg_out);
          write_latent_geometry_csv(geo_path, export_latent_geometry(r.model, data.test));
          write_with_manifest(geo_path, "degenerate", config, g.seed);
        }
        if (!deg_model_out.empty()) {
          const auto model_path = output_path(deg_model_out);
          save_model(model_path, r.model);
          write_with_manifest(model_path, "degenerate", config, g.seed);
        }
        out << "test_rmse " << r.test_rmse << " test_rmse_raw " << r.test_rmse_raw << '\n';
      }
      const auto path = output_path(deg_report);
      write_json(path, report);
      write_with_manifest(path, "degenerate", config, g.seed);
    } else if (*geo_cmd) {
      const AutoencoderModel model = load_model_file(geo_model);
      const Dataset ds = load_dataset(geo_data);
      const LatentGeometry geo = export_latent_geometry(model, held_out_records(model, ds));
      const auto path = output_path(geo_out);
      write_latent_geometry_csv(path, geo);
      write_with_manifest(path, "export-geometry", {{"model", geo_model}, {"data", geo_data}}, g.seed);
      out << "wrote " << geo.z.cols() << " rows to " << path.string() << '\n';
    }
  } catch (const std::exception& e) {
    err << "latentgs: error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace latentgs::cli
