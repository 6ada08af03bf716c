#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "latentgs/dataset.hpp"
#include "latentgs/network.hpp"

namespace latentgs {

/// Layer widths of the encoder/decoder pair.
///
/// Encoder: n_in -> h_1..h_4 -> d with h_k = max(L^2, round(lambda n_in r^k)),
/// r = (d / (lambda n_in))^(1/5). Decoder: d -> g_0..g_3 -> n_in with
/// g_k = max(L^2, round(L^2 s^k)), s = (lambda n_in / L^2)^(1/3).
/// The linear variant has no hidden layers on either side.
struct Architecture {
  int input_dim = 0;
  int latent_dim = 0;
  int sites = 0;
  double width_scale = 20.0;
  bool linear = false;
  bool rescale_heads = true;
  std::vector<int> encoder_hidden;
  std::vector<int> decoder_hidden;

  static Architecture standard(int input_dim, int latent_dim, int sites, double width_scale = 20.0);
  static Architecture single_linear(int input_dim, int latent_dim, int sites);

  std::vector<int> encoder_widths() const;
  std::vector<int> decoder_widths() const;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
};

class AutoencoderModel {
 public:
  AutoencoderModel() = default;
  /// `system` records the physics the model was trained on; only L, N, t, U
  /// and mode are meaningful.
  AutoencoderModel(Architecture arch, DatasetHeader system, Standardizer standardizer);

  /// Fresh random parameters; encoder and decoder draw from independent streams.
  void initialize(std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const DatasetHeader& system() const { return system_; }
  const Standardizer& standardizer() const { return standardizer_; }
  int latent_dim() const { return arch_.latent_dim; }
  int input_dim() const { return arch_.input_dim; }

  Network& encoder() { return encoder_; }
  const Network& encoder() const { return encoder_; }
  Network& decoder() { return decoder_; }
  const Network& decoder() const { return decoder_; }

  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  /// Parent records the split was drawn from (0: the whole dataset).
  std::size_t n_parents = 0;

  /// Columns are samples in standardized feature space.
  Eigen::MatrixXd encode(const Eigen::MatrixXd& x_std) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x_std) const { return decode(encode(x_std)); }

  std::size_t param_count() const { return encoder_.param_count() + decoder_.param_count(); }

  /// Exact reparametrization z -> s z. The encoder head (weights, bias, bound)
  /// is scaled by s and the first decoder layer (weights, bound) by 1/s, so
  /// reconstructions are unchanged up to rounding.
  void rescale_latent(double s);

 private:
  Architecture arch_;
  DatasetHeader system_;
  Standardizer standardizer_;
  Network encoder_;
  Network decoder_;
};

/// Checkpoint: JSON manifest line (architecture, system, seeds, standardizer)
/// followed by encoder then decoder parameters as float64.
void save_model(const std::filesystem::path& path, const AutoencoderModel& model);
AutoencoderModel load_model(const std::filesystem::path& path);

}  // namespace latentgs
