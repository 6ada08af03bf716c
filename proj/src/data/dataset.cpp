#include "latentgs/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "latentgs/errors.hpp"
#include "latentgs/io.hpp"
#include "latentgs/observables.hpp"
#include "latentgs/symmetry.hpp"

namespace latentgs {

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::omega ? "omega" : "gamma";
}

FeatureMode parse_feature_mode(const std::string& text) {
  if (text == "omega") return FeatureMode::omega;
  if (text == "gamma") return FeatureMode::gamma;
  throw InvalidArgument("unknown feature mode '" + text + "' (expected omega or gamma)");
}

std::size_t DatasetHeader::feature_dim() const {
  const auto L = static_cast<std::size_t>(sites);
  return mode == FeatureMode::omega ? 3 * L : L * L * L * L;
}

HubbardInstance DatasetHeader::instance(std::span<const double> mu) const {
  HubbardInstance inst = HubbardInstance::uniform(sites, electrons, hopping, interaction);
  inst.mu.assign(mu.begin(), mu.end());
  return inst;
}

nlohmann::json DatasetHeader::to_json() const {
  return {{"format", "latentgs-dataset"},
          {"version", version},
          {"L", sites},
          {"N", electrons},
          {"t", hopping},
          {"U", interaction},
          {"mode", to_string(mode)},
          {"n_records", n_records},
          {"augmented", augmented},
          {"seed", seed},
          {"record_layout", {"mu", "features", "energy", "seed_tag"}}};
}

DatasetHeader DatasetHeader::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "latentgs-dataset") {
      throw FormatError("not a dataset file");
    }
    DatasetHeader h;
    h.version = j.at("version").get<int>();
    if (h.version != kFormatVersion) {
      throw FormatError("unsupported dataset version " + std::to_string(h.version));
    }
    h.sites = j.at("L").get<int>();
    h.electrons = j.at("N").get<int>();
    h.hopping = j.at("t").get<double>();
    h.interaction = j.at("U").get<double>();
    h.mode = parse_feature_mode(j.at("mode").get<std::string>());
    h.n_records = j.at("n_records").get<std::size_t>();
    h.augmented = j.at("augmented").get<bool>();
    h.seed = j.at("seed").get<std::uint64_t>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid dataset header: ") + e.what());
  }
}

double potential_sigma(std::span<const double> mu) {
  const auto n = static_cast<double>(mu.size());
  double mean = 0.0, sq = 0.0;
  for (double m : mu) {
    mean += m;
    sq += m * m;
  }
  mean /= n;
  return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

double potential_strength(std::span<const double> mu) {
  double mean = 0.0;
  for (double m : mu) mean += m;
  mean /= static_cast<double>(mu.size());
  double sq = 0.0;
  for (double m : mu) sq += (m - mean) * (m - mean);
  return std::sqrt(sq);
}

std::vector<double> sample_potential(int sites, Rng& rng, const PotentialSampler& sampler,
                                     double hopping) {
  std::vector<double> mu(static_cast<std::size_t>(sites));
  for (std::size_t attempt = 0; attempt < sampler.max_attempts; ++attempt) {
    const double w = rng.uniform(sampler.strength_min * hopping, sampler.strength_max * hopping);
    for (auto& m : mu) m = rng.uniform(-w, w);
    if (potential_sigma(mu) < sampler.sigma_max * hopping) return mu;
  }
  throw SolverError("potential sampler exceeded " + std::to_string(sampler.max_attempts) +
                    " attempts");
}

Eigen::VectorXd energy_coefficients(const HubbardInstance& instance, FeatureMode mode) {
  return mode == FeatureMode::omega ? hamiltonian_coefficients(instance)
                                    : rdm_hamiltonian_coefficients(instance);
}

DatasetRecord solve_record(const DatasetHeader& header, std::vector<double> mu,
                           std::uint64_t seed_tag, const SolverOptions& solver) {
  const HubbardInstance inst = header.instance(mu);
  const SectorBasis basis = build_sector_basis(inst.sites, inst.electrons);
  DatasetRecord rec;
  try {
    const GroundStateResult gs = ground_state(inst, solver);
    Eigen::VectorXd features;
    if (header.mode == FeatureMode::omega) {
      features = extract_observables(inst, basis, gs.coefficients).flat();
    } else {
      features = extract_2rdm(inst, basis, gs.coefficients).gamma;
    }
    rec.features.assign(features.data(), features.data() + features.size());
    rec.energy = gs.energy;
  } catch (const Error& e) {
    std::ostringstream msg;
    msg.precision(17);
    msg << e.what() << " (record " << seed_tag << ", mu = [";
    for (std::size_t i = 0; i < mu.size(); ++i) msg << (i ? ", " : "") << mu[i];
    msg << "])";
    throw SolverError(msg.str());
  }
  rec.mu = std::move(mu);
  rec.seed_tag = seed_tag;
  return rec;
}

Dataset generate_dataset(const GenerateOptions& options) {
  if (options.n_inst == 0) throw InvalidArgument("n_inst must be at least 1");
  build_sector_basis(options.sites, options.electrons);  // validates the sector

  Dataset ds;
  ds.header.sites = options.sites;
  ds.header.electrons = options.electrons;
  ds.header.hopping = options.hopping;
  ds.header.interaction = options.interaction;
  ds.header.mode = options.mode;
  ds.header.n_records = options.n_inst;
  ds.header.augmented = false;
  ds.header.seed = options.seed;
  ds.records.resize(options.n_inst);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= options.n_inst) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        Rng rng(derive_seed(options.seed, i));
        auto mu = sample_potential(options.sites, rng, options.sampler, options.hopping);
        ds.records[i] = solve_record(ds.header, std::move(mu), i, options.solver);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int n_threads = std::max(1, options.threads);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return ds;
}

std::vector<DatasetRecord> augment_symmetries(std::span<const DatasetRecord> records, int sites,
                                              FeatureMode mode) {
  if (mode != FeatureMode::omega) {
    throw InvalidArgument("symmetry augmentation is only supported for omega-mode records");
  }
  const auto ops = LatticeSymmetry::all(sites);
  std::vector<DatasetRecord> out;
  out.reserve(records.size() * ops.size());
  for (const DatasetRecord& rec : records) {
    const Eigen::Map<const Eigen::VectorXd> mu(rec.mu.data(), sites);
    const Eigen::Map<const Eigen::VectorXd> omega(rec.features.data(),
                                                  static_cast<Eigen::Index>(rec.features.size()));
    for (const auto& op : ops) {
      DatasetRecord img;
      const Eigen::VectorXd mu2 = apply_symmetry_sites(op, mu);
      const Eigen::VectorXd omega2 = apply_symmetry_observables(op, omega);
      img.mu.assign(mu2.data(), mu2.data() + mu2.size());
      img.features.assign(omega2.data(), omega2.data() + omega2.size());
      img.energy = rec.energy;
      img.seed_tag = rec.seed_tag;
      out.push_back(std::move(img));
    }
  }
  return out;
}

SplitIndices split_dataset(std::size_t n, std::uint64_t seed, const SplitRatios& ratios) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9 || ratios.train < 0 ||
      ratios.val < 0 || ratios.test < 0) {
    throw InvalidArgument("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(perm.begin(), perm.end());
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n))));
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return out;
}

Standardizer::Standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale)
    : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw DimensionMismatch("standardizer mean/scale sizes differ");
  if ((scale_.array() <= 0.0).any()) throw InvalidArgument("standardizer scales must be positive");
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  if (x.cols() == 0) throw InvalidArgument("cannot fit a standardizer on an empty training set");
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Eigen::VectorXd var =
      (x.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(x.cols());
  Eigen::VectorXd scale = var.array().sqrt();
  std::size_t n_constant = 0;
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (!(scale[i] >= 1e-12)) {
      scale[i] = 1.0;
      ++n_constant;
    }
  }
  Standardizer s(mean, scale);
  s.n_constant_ = n_constant;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean_.size()) throw DimensionMismatch("standardizer feature count mismatch");
  return (x.colwise() - mean_).array().colwise() / scale_.array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean_.size()) throw DimensionMismatch("standardizer feature count mismatch");
  return (x.array().colwise() * scale_.array()).matrix().colwise() + mean_;
}

nlohmann::json Standardizer::to_json() const {
  return {{"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"scale", std::vector<double>(scale_.data(), scale_.data() + scale_.size())},
          {"constant_features", n_constant_}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto scale = j.at("scale").get<std::vector<double>>();
  Standardizer s(Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                 Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size())));
  s.n_constant_ = j.value("constant_features", std::size_t{0});
  return s;
}

Eigen::MatrixXd feature_matrix(std::span<const DatasetRecord> records) {
  if (records.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(records.front().features.size());
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(records.size()));
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (static_cast<Eigen::Index>(records[k].features.size()) != dim) {
      throw DimensionMismatch("records have inconsistent feature lengths");
    }
    x.col(static_cast<Eigen::Index>(k)) =
        Eigen::Map<const Eigen::VectorXd>(records[k].features.data(), dim);
  }
  return x;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  DatasetHeader header = dataset.header;
  header.n_records = dataset.records.size();
  const std::size_t width = header.record_width();
  std::vector<double> payload;
  payload.reserve(width * dataset.records.size());
  for (const DatasetRecord& rec : dataset.records) {
    if (rec.mu.size() != static_cast<std::size_t>(header.sites) ||
        rec.features.size() != header.feature_dim()) {
      throw DimensionMismatch("record shape does not match the dataset header");
    }
    payload.insert(payload.end(), rec.mu.begin(), rec.mu.end());
    payload.insert(payload.end(), rec.features.begin(), rec.features.end());
    payload.push_back(rec.energy);
    payload.push_back(static_cast<double>(rec.seed_tag));
  }
  write_header_payload(path, header.to_json(), payload);
}

Dataset read_dataset(const std::filesystem::path& path) {
  HeaderPayload raw = read_header_payload(path);
  Dataset ds;
  ds.header = DatasetHeader::from_json(raw.header);
  const std::size_t width = ds.header.record_width();
  if (raw.payload.size() != width * ds.header.n_records) {
    throw FormatError("dataset " + path.string() + " declares " +
                      std::to_string(ds.header.n_records) + " records but the payload holds " +
                      std::to_string(raw.payload.size()) + " values");
  }
  const auto L = static_cast<std::size_t>(ds.header.sites);
  const std::size_t nf = ds.header.feature_dim();
  ds.records.resize(ds.header.n_records);
  for (std::size_t k = 0; k < ds.header.n_records; ++k) {
    const double* row = raw.payload.data() + k * width;
    DatasetRecord& rec = ds.records[k];
    rec.mu.assign(row, row + L);
    rec.features.assign(row + L, row + L + nf);
    rec.energy = row[L + nf];
    rec.seed_tag = static_cast<std::uint64_t>(row[L + nf + 1]);
  }
  return ds;
}

PreparedData prepare_data(const Dataset& dataset, const PrepareOptions& options) {
  if (dataset.header.augmented) {
    throw InvalidArgument("prepare_data expects un-augmented parent records");
  }
  std::size_t n = dataset.records.size();
  if (options.max_parents > 0) n = std::min(n, options.max_parents);
  const SplitIndices split = split_dataset(n, options.split_seed, options.ratios);

  PreparedData out;
  out.options = options;
  out.header = dataset.header;
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<DatasetRecord> recs;
    recs.reserve(idx.size());
    for (std::size_t i : idx) recs.push_back(dataset.records[i]);
    return recs;
  };
  out.train = gather(split.train);
  out.val = gather(split.val);
  out.test = gather(split.test);
  if (options.augment && dataset.header.mode == FeatureMode::omega) {
    out.train = augment_symmetries(out.train, dataset.header.sites, dataset.header.mode);
  }
  out.header.n_records = out.train.size();
  out.header.augmented = options.augment && dataset.header.mode == FeatureMode::omega;

  const Eigen::MatrixXd train_raw = feature_matrix(out.train);
  out.standardizer = Standardizer::fit(train_raw);
  out.train_x = out.standardizer.apply(train_raw);
  if (!out.val.empty()) out.val_x = out.standardizer.apply(feature_matrix(out.val));
  if (!out.test.empty()) out.test_x = out.standardizer.apply(feature_matrix(out.test));
  return out;
}

}  // namespace latentgs
