#include "latentgs/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "latentgs/errors.hpp"
#include "latentgs/io.hpp"
#include "latentgs/rng.hpp"

namespace latentgs {

namespace {

constexpr int kCheckpointVersion = 1;

Network make_network(const std::vector<int>& widths, bool rescale_head) {
  std::vector<Activation> acts(widths.size() - 1, Activation::softplus);
  acts.back() = Activation::identity;
  Network net(widths, acts, true);
  net.layers().back().rescale = rescale_head;
  return net;
}

}  // namespace

Architecture Architecture::standard(int input_dim, int latent_dim, int sites, double width_scale) {
  if (input_dim <= 0 || latent_dim <= 0 || sites <= 0 || !(width_scale > 0)) {
    throw InvalidArgument("architecture needs positive input width, latent width, sites and scale");
  }
  Architecture a;
  a.input_dim = input_dim;
  a.latent_dim = latent_dim;
  a.sites = sites;
  a.width_scale = width_scale;
  const double top = width_scale * input_dim;
  const int floor_width = sites * sites;
  const double r = std::pow(latent_dim / top, 1.0 / 5.0);
  for (int k = 1; k <= 4; ++k) {
    a.encoder_hidden.push_back(std::max(floor_width, static_cast<int>(std::lround(top * std::pow(r, k)))));
  }
  const double s = std::pow(top / floor_width, 1.0 / 3.0);
  for (int k = 0; k <= 3; ++k) {
    a.decoder_hidden.push_back(
        std::max(floor_width, static_cast<int>(std::lround(floor_width * std::pow(s, k)))));
  }
  return a;
}

Architecture Architecture::single_linear(int input_dim, int latent_dim, int sites) {
  if (input_dim <= 0 || latent_dim <= 0) throw InvalidArgument("architecture needs positive widths");
  Architecture a;
  a.input_dim = input_dim;
  a.latent_dim = latent_dim;
  a.sites = sites;
  a.linear = true;
  return a;
}

std::vector<int> Architecture::encoder_widths() const {
  std::vector<int> w{input_dim};
  w.insert(w.end(), encoder_hidden.begin(), encoder_hidden.end());
  w.push_back(latent_dim);
  return w;
}

std::vector<int> Architecture::decoder_widths() const {
  std::vector<int> w{latent_dim};
  w.insert(w.end(), decoder_hidden.begin(), decoder_hidden.end());
  w.push_back(input_dim);
  return w;
}

nlohmann::json Architecture::to_json() const {
  return {{"input_dim", input_dim},         {"latent_dim", latent_dim},
          {"sites", sites},                 {"width_scale", width_scale},
          {"linear", linear},               {"rescale_heads", rescale_heads},
          {"encoder_hidden", encoder_hidden}, {"decoder_hidden", decoder_hidden}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  try {
    Architecture a;
    a.input_dim = j.at("input_dim").get<int>();
    a.latent_dim = j.at("latent_dim").get<int>();
    a.sites = j.at("sites").get<int>();
    a.width_scale = j.at("width_scale").get<double>();
    a.linear = j.at("linear").get<bool>();
    a.rescale_heads = j.at("rescale_heads").get<bool>();
    a.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    a.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
    if (a.linear != (a.encoder_hidden.empty() && a.decoder_hidden.empty())) {
      throw FormatError("architecture: linear flag disagrees with hidden widths");
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("architecture: ") + e.what());
  }
}

AutoencoderModel::AutoencoderModel(Architecture arch, DatasetHeader system, Standardizer standardizer)
    : arch_(std::move(arch)), system_(std::move(system)), standardizer_(std::move(standardizer)) {
  if (standardizer_.dim() != 0 && standardizer_.dim() != arch_.input_dim) {
    throw DimensionMismatch("standardizer width does not match the model input width");
  }
  encoder_ = make_network(arch_.encoder_widths(), arch_.rescale_heads);
  decoder_ = make_network(arch_.decoder_widths(), arch_.rescale_heads);
}

void AutoencoderModel::initialize(std::uint64_t new_seed) {
  seed = new_seed;
  Rng enc_rng(derive_seed(new_seed, 1));
  Rng dec_rng(derive_seed(new_seed, 2));
  encoder_.initialize(enc_rng);
  decoder_.initialize(dec_rng);
}

Eigen::MatrixXd AutoencoderModel::encode(const Eigen::MatrixXd& x_std) const {
  return encoder_.forward(x_std);
}

Eigen::MatrixXd AutoencoderModel::decode(const Eigen::MatrixXd& z) const {
  if (z.rows() != arch_.latent_dim) {
    throw DimensionMismatch("decode expects latent width " + std::to_string(arch_.latent_dim) +
                            ", got " + std::to_string(z.rows()));
  }
  return decoder_.forward(z);
}

void AutoencoderModel::rescale_latent(double s) {
  if (!(s > 0) || !std::isfinite(s)) throw InvalidArgument("latent rescale factor must be positive");
  const std::size_t head = encoder_.layers().size() - 1;
  encoder_.weight(head) *= s;
  encoder_.bias(head) *= s;
  if (encoder_.layers()[head].rescale) encoder_.bound(head) = inverse_softplus(s * softplus(encoder_.bound(head)));
  decoder_.weight(0) /= s;
  if (decoder_.layers()[0].rescale) decoder_.bound(0) = inverse_softplus(softplus(decoder_.bound(0)) / s);
}

void save_model(const std::filesystem::path& path, const AutoencoderModel& model) {
  nlohmann::json header = {
      {"format", "latentgs-model"},
      {"version", kCheckpointVersion},
      {"architecture", model.architecture().to_json()},
      {"system", model.system().to_json()},
      {"seed", model.seed},
      {"split_seed", model.split_seed},
      {"n_parents", model.n_parents},
      {"standardizer", model.standardizer().to_json()},
      {"encoder_params", model.encoder().param_count()},
      {"decoder_params", model.decoder().param_count()},
  };
  std::vector<double> blob(model.encoder().params().data(),
                           model.encoder().params().data() + model.encoder().param_count());
  blob.insert(blob.end(), model.decoder().params().data(),
              model.decoder().params().data() + model.decoder().param_count());
  write_header_payload(path, header, blob);
}

AutoencoderModel load_model(const std::filesystem::path& path) {
  HeaderPayload hp = read_header_payload(path);
  const auto& h = hp.header;
  try {
    if (h.at("format").get<std::string>() != "latentgs-model") {
      throw FormatError(path.string() + ": not a model checkpoint");
    }
    if (h.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError(path.string() + ": unsupported checkpoint version");
    }
    AutoencoderModel model(Architecture::from_json(h.at("architecture")),
                           DatasetHeader::from_json(h.at("system")),
                           Standardizer::from_json(h.at("standardizer")));
    model.seed = h.at("seed").get<std::uint64_t>();
    model.split_seed = h.at("split_seed").get<std::uint64_t>();
    model.n_parents = h.value("n_parents", std::size_t{0});
    const std::size_t ne = model.encoder().param_count();
    const std::size_t nd = model.decoder().param_count();
    if (h.at("encoder_params").get<std::size_t>() != ne ||
        h.at("decoder_params").get<std::size_t>() != nd || hp.payload.size() != ne + nd) {
      throw FormatError(path.string() + ": parameter blob does not match the architecture");
    }
    std::copy_n(hp.payload.begin(), ne, model.encoder().params().data());
    std::copy_n(hp.payload.begin() + static_cast<std::ptrdiff_t>(ne), nd, model.decoder().params().data());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace latentgs
