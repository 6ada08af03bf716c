#include "latentgs/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "latentgs/errors.hpp"
#include "latentgs/io.hpp"
#include "latentgs/rng.hpp"

namespace latentgs {

LossWeights LossWeights::reconstruction_only() {
  LossWeights w;
  w.alpha = w.beta = w.gamma = w.delta = 0.0;
  return w;
}

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, delta}) {
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and non-negative");
  }
  if (!(radius > 0)) throw InvalidArgument("well radius must be positive");
  if (!(epsilon > 0)) throw InvalidArgument("repulsion epsilon must be positive");
}

nlohmann::json LossWeights::to_json() const {
  return {{"alpha", alpha}, {"beta", beta},     {"gamma", gamma},
          {"delta", delta}, {"radius", radius}, {"epsilon", epsilon}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.gamma = j.value("gamma", w.gamma);
  w.delta = j.value("delta", w.delta);
  w.radius = j.value("radius", w.radius);
  w.epsilon = j.value("epsilon", w.epsilon);
  w.validate();
  return w;
}

LossValue loss_rec(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() == 0) throw InvalidArgument("loss_rec: empty batch");
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DimensionMismatch("loss_rec: shape mismatch");
  const double n = static_cast<double>(x.cols());
  Eigen::MatrixXd diff = y - x;
  LossValue out;
  out.value = diff.squaredNorm() / n;
  out.grad = (2.0 / n) * diff;
  return out;
}

LossValue loss_well(const Eigen::MatrixXd& z, double radius) {
  if (z.cols() == 0) throw InvalidArgument("loss_well: empty batch");
  const double n = static_cast<double>(z.cols());
  LossValue out;
  out.grad = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    const double norm = z.col(i).norm();
    if (norm <= radius) continue;
    const double excess = norm - radius;
    out.value += excess * excess;
    out.grad.col(i) = (2.0 * excess / (n * norm)) * z.col(i);
  }
  out.value /= n;
  return out;
}

namespace {

Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.colwise().squaredNorm().transpose();
  Eigen::MatrixXd d = -2.0 * (x.transpose() * x);
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

}  // namespace

LossValue loss_repel(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, double epsilon) {
  if (x.cols() != z.cols()) throw DimensionMismatch("loss_repel: batch sizes differ");
  LossValue out;
  out.grad = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  if (x.cols() < 2) return out;
  // Exact pairwise differences keep the loss smooth in z; the Gram-matrix
  // shortcut loses precision when q is small.
  const Eigen::Index n = x.cols();
  const Eigen::MatrixXd a = pairwise_sq_distances(x);
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) q(i, j) = (z.col(i) - z.col(j)).squaredNorm();
  }
  const double norm = 0.5 * a.sum();
  if (!(norm > 0)) return out;
  Eigen::MatrixXd w(n, n);
  double value = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j) {
        w(i, j) = 0.0;
        continue;
      }
      const double denom = q(i, j) + epsilon;
      value += a(i, j) / denom;
      w(i, j) = a(i, j) / (denom * denom);
    }
  }
  out.value = 0.5 * value / norm;
  // d/dz_i = -(2/S) sum_j w_ij (z_i - z_j)
  const Eigen::VectorXd row = w.rowwise().sum();
  out.grad = (-2.0 / norm) * (z * row.asDiagonal() - z * w);
  return out;
}

double loss_lip(const Network& net, Eigen::VectorXd* grad) {
  double value = 0.0;
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    if (!net.layers()[k].rescale) continue;
    const double c = net.bound(k);
    const double sp = softplus(c);
    value += std::log(sp);
    if (grad) (*grad)[static_cast<Eigen::Index>(net.layers()[k].bound_offset())] += sigmoid(c) / sp;
  }
  return value;
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  rec += o.rec;
  well += o.well;
  repel += o.repel;
  lip_enc += o.lip_enc;
  lip_dec += o.lip_dec;
  total += o.total;
  return *this;
}

LossTerms& LossTerms::operator*=(double s) {
  rec *= s;
  well *= s;
  repel *= s;
  lip_enc *= s;
  lip_dec *= s;
  total *= s;
  return *this;
}

LossTerms evaluate_objective(const AutoencoderModel& model, const Eigen::MatrixXd& x,
                             const LossWeights& weights, Eigen::VectorXd* encoder_grad,
                             Eigen::VectorXd* decoder_grad) {
  const bool need_grad = encoder_grad || decoder_grad;
  GradientTape enc_tape;
  GradientTape dec_tape;
  const Eigen::MatrixXd z = model.encoder().forward(x, need_grad ? &enc_tape : nullptr);
  const Eigen::MatrixXd y = model.decoder().forward(z, need_grad ? &dec_tape : nullptr);

  LossTerms t;
  const LossValue rec = loss_rec(x, y);
  t.rec = rec.value;
  LossValue well;
  LossValue repel;
  well = loss_well(z, weights.radius);
  if (weights.beta > 0) repel = loss_repel(x, z, weights.epsilon);
  t.well = well.value;
  t.repel = repel.value;

  Eigen::VectorXd enc_g;
  Eigen::VectorXd dec_g;
  if (need_grad) {
    enc_g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.encoder().param_count()));
    dec_g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.decoder().param_count()));
  }
  Eigen::VectorXd lip_enc_g;
  Eigen::VectorXd lip_dec_g;
  if (need_grad) {
    lip_enc_g = Eigen::VectorXd::Zero(enc_g.size());
    lip_dec_g = Eigen::VectorXd::Zero(dec_g.size());
  }
  t.lip_enc = loss_lip(model.encoder(), need_grad ? &lip_enc_g : nullptr);
  t.lip_dec = loss_lip(model.decoder(), need_grad ? &lip_dec_g : nullptr);
  t.total = t.rec + weights.alpha * t.well + weights.beta * t.repel + weights.gamma * t.lip_enc +
            weights.delta * t.lip_dec;

  if (need_grad) {
    Eigen::MatrixXd dz = model.decoder().backward(dec_tape, rec.grad, &dec_g);
    if (weights.alpha > 0) dz += weights.alpha * well.grad;
    if (weights.beta > 0) dz += weights.beta * repel.grad;
    model.encoder().backward(enc_tape, dz, &enc_g);
    enc_g += weights.gamma * lip_enc_g;
    dec_g += weights.delta * lip_dec_g;
    if (encoder_grad) *encoder_grad = std::move(enc_g);
    if (decoder_grad) *decoder_grad = std::move(dec_g);
  }
  return t;
}

LossTerms batched_objective(const AutoencoderModel& model, const Eigen::MatrixXd& x,
                            const LossWeights& weights, int batch_size) {
  if (x.cols() == 0) throw InvalidArgument("objective on an empty set");
  LossTerms sum;
  int batches = 0;
  for (Eigen::Index start = 0; start < x.cols(); start += batch_size) {
    const Eigen::Index len = std::min<Eigen::Index>(batch_size, x.cols() - start);
    sum += evaluate_objective(model, x.middleCols(start, len), weights);
    ++batches;
  }
  sum *= 1.0 / batches;
  return sum;
}

void TrainConfig::validate() const {
  if (batch_size <= 0 || max_epochs <= 0 || early_stop_patience <= 0 || plateau_patience <= 0 ||
      scale_search_samples <= 0) {
    throw InvalidArgument("training config: counts must be positive");
  }
  if (!(learning_rate > 0) || !(plateau_factor > 0 && plateau_factor < 1) || !(early_stop_delta >= 0) ||
      !(plateau_threshold >= 0) || !(width_scale > 0)) {
    throw InvalidArgument("training config: rates and thresholds out of range");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_delta", early_stop_delta},
          {"early_stop_patience", early_stop_patience},
          {"learning_rate", learning_rate},
          {"plateau_factor", plateau_factor},
          {"plateau_patience", plateau_patience},
          {"plateau_threshold", plateau_threshold},
          {"seed", seed},
          {"width_scale", width_scale},
          {"linear", linear},
          {"rescale_heads", rescale_heads},
          {"latent_scale_search", latent_scale_search},
          {"scale_search_samples", scale_search_samples}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_delta = j.value("early_stop_delta", c.early_stop_delta);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
  c.seed = j.value("seed", c.seed);
  c.width_scale = j.value("width_scale", c.width_scale);
  c.linear = j.value("linear", c.linear);
  c.rescale_heads = j.value("rescale_heads", c.rescale_heads);
  c.latent_scale_search = j.value("latent_scale_search", c.latent_scale_search);
  c.scale_search_samples = j.value("scale_search_samples", c.scale_search_samples);
  c.validate();
  return c;
}

Architecture training_architecture(const DatasetHeader& header, int latent_dim, const TrainConfig& config) {
  const int n_in = static_cast<int>(header.feature_dim());
  Architecture arch = config.linear ? Architecture::single_linear(n_in, latent_dim, header.sites)
                                    : Architecture::standard(n_in, latent_dim, header.sites, config.width_scale);
  arch.rescale_heads = config.rescale_heads;
  return arch;
}

ScaleSearchResult latent_scale_search(AutoencoderModel& model, const Eigen::MatrixXd& x,
                                      const LossWeights& weights, int batch_size) {
  ScaleSearchResult result;
  if (x.cols() == 0 || batch_size <= 0) return result;
  const Eigen::MatrixXd z = model.encode(x);
  const Eigen::VectorXd norms = z.colwise().norm().transpose();

  struct Batch {
    Eigen::MatrixXd a;
    Eigen::MatrixXd q;
    double a_sum = 0.0;
  };
  std::vector<Batch> batches;
  if (weights.beta > 0) {
    for (Eigen::Index start = 0; start < x.cols(); start += batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(batch_size, x.cols() - start);
      if (len < 2) continue;
      Batch b;
      b.a.resize(len, len);
      b.q.resize(len, len);
      for (Eigen::Index j = 0; j < len; ++j) {
        for (Eigen::Index i = 0; i < len; ++i) {
          b.a(i, j) = (x.col(start + i) - x.col(start + j)).squaredNorm();
          b.q(i, j) = (z.col(start + i) - z.col(start + j)).squaredNorm();
        }
      }
      b.a_sum = b.a.sum();
      if (b.a_sum > 0) batches.push_back(std::move(b));
    }
  }
  const bool enc_head = model.encoder().layers().back().rescale;
  const bool dec_first = model.decoder().layers().front().rescale;
  const double lip_slope = (enc_head ? weights.gamma : 0.0) - (dec_first ? weights.delta : 0.0);

  // objective along the orbit as a function of t = log s, up to a constant
  auto f = [&](double t) {
    const double s = std::exp(t);
    double well = 0.0;
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
      const double excess = s * norms[i] - weights.radius;
      if (excess > 0) well += excess * excess;
    }
    well /= static_cast<double>(norms.size());
    double repel = 0.0;
    for (const auto& b : batches) {
      double num = 0.0;
      for (Eigen::Index j = 0; j < b.a.cols(); ++j) {
        for (Eigen::Index i = 0; i < b.a.rows(); ++i) {
          if (i != j) num += b.a(i, j) / (s * s * b.q(i, j) + weights.epsilon);
        }
      }
      repel += num / b.a_sum;
    }
    if (!batches.empty()) repel /= static_cast<double>(batches.size());
    return weights.alpha * well + weights.beta * repel + lip_slope * t;
  };

  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = -std::log(2.0);
  double hi = std::log(2.0);
  double t1 = hi - golden * (hi - lo);
  double t2 = lo + golden * (hi - lo);
  double f1 = f(t1);
  double f2 = f(t2);
  for (int it = 0; it < 40; ++it) {
    if (f1 <= f2) {
      hi = t2;
      t2 = t1;
      f2 = f1;
      t1 = hi - golden * (hi - lo);
      f1 = f(t1);
    } else {
      lo = t1;
      t1 = t2;
      f1 = f2;
      t2 = lo + golden * (hi - lo);
      f2 = f(t2);
    }
  }
  const double t_best = f1 <= f2 ? t1 : t2;
  const double gain = f(0.0) - std::min(f1, f2);
  if (gain > 0 && std::isfinite(gain)) {
    result.factor = std::exp(t_best);
    result.improvement = gain;
    model.rescale_latent(result.factor);
  }
  return result;
}

namespace {

// Keeps Adam's moment estimates consistent with a latent rescale by s.
void rescale_adam_moments(const AutoencoderModel& model, double s, AdamState& enc, AdamState& dec) {
  if (enc.m.size() == 0 || dec.m.size() == 0) return;
  const auto& head = model.encoder().layers().back();
  const auto n_head = static_cast<Eigen::Index>(head.param_count() - 1);
  const auto off = static_cast<Eigen::Index>(head.weight_offset());
  enc.m.segment(off, n_head) *= s;
  enc.v.segment(off, n_head) *= s * s;
  const auto& first = model.decoder().layers().front();
  const auto n_first = static_cast<Eigen::Index>(first.in) * first.out;
  const auto off_d = static_cast<Eigen::Index>(first.weight_offset());
  dec.m.segment(off_d, n_first) /= s;
  dec.v.segment(off_d, n_first) /= s * s;
}

bool finite_terms(const LossTerms& t) { return std::isfinite(t.total) && std::isfinite(t.rec); }

}  // namespace

TrainResult train(const PreparedData& data, int latent_dim, const LossWeights& weights,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  weights.validate();
  config.validate();
  if (latent_dim <= 0) throw InvalidArgument("latent dimension must be positive");
  if (data.train_x.cols() == 0 || data.val_x.cols() == 0) {
    throw InvalidArgument("training needs non-empty train and validation splits");
  }

  TrainResult result;
  result.model = AutoencoderModel(training_architecture(data.header, latent_dim, config), data.header,
                                  data.standardizer);
  AutoencoderModel& model = result.model;
  model.initialize(config.seed);
  model.seed = config.seed;
  model.split_seed = data.options.split_seed;
  model.n_parents = data.options.max_parents;

  AdamState enc_state;
  AdamState dec_state;
  PlateauScheduler scheduler(config.learning_rate, config.plateau_factor, config.plateau_patience,
                             config.plateau_threshold);
  EarlyStopping stopper(config.early_stop_delta, config.early_stop_patience);

  const Eigen::Index n = data.train_x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  Eigen::VectorXd best_enc = model.encoder().params();
  Eigen::VectorXd best_dec = model.decoder().params();
  result.best_val_loss = std::numeric_limits<double>::infinity();
  double lr = config.learning_rate;
  Eigen::MatrixXd batch;
  Eigen::VectorXd enc_grad;
  Eigen::VectorXd dec_grad;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng shuffle_rng(derive_seed(config.seed, 0x7a11'0000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, n - start);
      batch.resize(data.train_x.rows(), len);
      for (Eigen::Index k = 0; k < len; ++k) {
        batch.col(k) = data.train_x.col(order[static_cast<std::size_t>(start + k)]);
      }
      const LossTerms terms = evaluate_objective(model, batch, weights, &enc_grad, &dec_grad);
      if (!finite_terms(terms) || !enc_grad.allFinite() || !dec_grad.allFinite()) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << batches
            << " (loss = " << terms.total << ")";
        throw TrainingDiverged(msg.str());
      }
      adam_step(model.encoder().params(), enc_grad, enc_state, lr);
      adam_step(model.decoder().params(), dec_grad, dec_state, lr);
      rec.train += terms;
      ++batches;
    }
    rec.train *= 1.0 / batches;
    if (config.latent_scale_search && weights.alpha > 0) {
      const Eigen::Index k = std::min<Eigen::Index>(config.scale_search_samples, n);
      const ScaleSearchResult sr = latent_scale_search(model, data.train_x.leftCols(k), weights, config.batch_size);
      if (sr.factor != 1.0) rescale_adam_moments(model, sr.factor, enc_state, dec_state);
    }
    rec.val = batched_objective(model, data.val_x, weights, config.batch_size);
    if (!finite_terms(rec.val)) {
      std::ostringstream msg;
      msg << "validation loss is not finite at epoch " << epoch;
      throw TrainingDiverged(msg.str());
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val.total < result.best_val_loss) {
      result.best_val_loss = rec.val.total;
      result.best_epoch = epoch;
      best_enc = model.encoder().params();
      best_dec = model.decoder().params();
    }
    lr = scheduler.step(rec.val.total);
    if (stopper.update(rec.val.total)) {
      result.early_stopped = true;
      break;
    }
  }

  model.encoder().params() = best_enc;
  model.decoder().params() = best_dec;
  if (data.test_x.cols() > 0) {
    result.test_rmse = reconstruction_rmse(model, data.test_x);
    result.test_rmse_raw = reconstruction_rmse_raw(model, data.test_x);
  }
  return result;
}

double reconstruction_rmse(const AutoencoderModel& model, const Eigen::MatrixXd& x_std) {
  if (x_std.size() == 0) throw InvalidArgument("reconstruction_rmse: empty input");
  const Eigen::MatrixXd y = model.reconstruct(x_std);
  return std::sqrt((y - x_std).squaredNorm() / static_cast<double>(x_std.size()));
}

double reconstruction_rmse_raw(const AutoencoderModel& model, const Eigen::MatrixXd& x_std) {
  if (x_std.size() == 0) throw InvalidArgument("reconstruction_rmse_raw: empty input");
  const Eigen::MatrixXd y = model.reconstruct(x_std);
  const Eigen::MatrixXd diff = model.standardizer().scale().asDiagonal() * (y - x_std);
  return std::sqrt(diff.squaredNorm() / static_cast<double>(x_std.size()));
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  write_atomically(path, [&](std::ostream& os) {
    os << std::setprecision(17);
    os << "epoch,train_loss,val_loss,lr,train_rec,train_well,train_repel,train_lip_enc,train_lip_dec,"
          "val_rec,val_well,val_repel,val_lip_enc,val_lip_dec\n";
    for (const auto& r : log) {
      os << r.epoch << ',' << r.train.total << ',' << r.val.total << ',' << r.learning_rate << ','
         << r.train.rec << ',' << r.train.well << ',' << r.train.repel << ',' << r.train.lip_enc << ','
         << r.train.lip_dec << ',' << r.val.rec << ',' << r.val.well << ',' << r.val.repel << ','
         << r.val.lip_enc << ',' << r.val.lip_dec << '\n';
    }
  });
}

}  // namespace latentgs
