#include "latentgs/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "latentgs/errors.hpp"

namespace latentgs {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) {
  if (!(y > 0)) throw InvalidArgument("inverse_softplus needs a positive argument");
  // log(exp(y) - 1), written to stay accurate for large and small y
  return y > 30 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

Network::Network(const std::vector<int>& widths, const std::vector<Activation>& activations,
                 bool rescale) {
  if (widths.size() < 2 || activations.size() != widths.size() - 1) {
    throw InvalidArgument("network needs n+1 widths for n activations");
  }
  std::size_t offset = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    if (widths[k] <= 0 || widths[k + 1] <= 0) throw InvalidArgument("layer widths must be positive");
    LipschitzLayer layer{widths[k], widths[k + 1], activations[k], rescale, offset};
    offset += layer.param_count();
    layers_.push_back(layer);
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  for (std::size_t k = 0; k < layers_.size(); ++k) bound(k) = inverse_softplus(1.0);
}

Eigen::Map<Eigen::MatrixXd> Network::weight(std::size_t layer) {
  const auto& l = layers_[layer];
  return {params_.data() + l.weight_offset(), l.out, l.in};
}

Eigen::Map<const Eigen::MatrixXd> Network::weight(std::size_t layer) const {
  const auto& l = layers_[layer];
  return {params_.data() + l.weight_offset(), l.out, l.in};
}

Eigen::Map<Eigen::VectorXd> Network::bias(std::size_t layer) {
  const auto& l = layers_[layer];
  return {params_.data() + l.bias_offset(), l.out};
}

Eigen::Map<const Eigen::VectorXd> Network::bias(std::size_t layer) const {
  const auto& l = layers_[layer];
  return {params_.data() + l.bias_offset(), l.out};
}

void Network::initialize(Rng& rng) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(layers_[k].in));
    auto w = weight(k);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
    }
    auto b = bias(k);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-limit, limit);
  }
  reset_bounds();
}

void Network::reset_bounds() {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const double max_row = weight(k).cwiseAbs().rowwise().sum().maxCoeff();
    bound(k) = inverse_softplus(max_row > 0 ? max_row : 1.0);
  }
}

Eigen::MatrixXd Network::effective_weight(std::size_t layer) const {
  const auto w = weight(layer);
  if (!layers_[layer].rescale) return w;
  const double limit = softplus(bound(layer));
  const Eigen::VectorXd sums = w.cwiseAbs().rowwise().sum();
  Eigen::MatrixXd out = w;
  for (Eigen::Index r = 0; r < sums.size(); ++r) {
    if (sums[r] > limit) out.row(r) *= limit / sums[r];
  }
  return out;
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x, GradientTape* tape) const {
  if (x.rows() != input_dim()) {
    throw DimensionMismatch("network expects " + std::to_string(input_dim()) +
                            " input features, got " + std::to_string(x.rows()));
  }
  if (tape) *tape = GradientTape{};
  Eigen::MatrixXd h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    const auto w = weight(k);
    Eigen::VectorXd sums = w.cwiseAbs().rowwise().sum();
    Eigen::VectorXd scales = Eigen::VectorXd::Ones(layer.out);
    if (layer.rescale) {
      const double limit = softplus(bound(k));
      for (Eigen::Index r = 0; r < sums.size(); ++r) {
        // equality takes the unscaled branch
        if (sums[r] > limit) scales[r] = limit / sums[r];
      }
    }
    Eigen::MatrixXd w_eff = scales.asDiagonal() * w;
    Eigen::MatrixXd y = w_eff * h;
    y.colwise() += bias(k);
    Eigen::MatrixXd slope;
    if (layer.activation == Activation::softplus) {
      // one vectorized exp shared by softplus and its derivative
      const Eigen::ArrayXXd e = (-y.array().abs()).exp();
      if (tape) slope = (y.array() >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
      // log(1 + e) vectorizes where log1p does not; e is in (0, 1], so only
      // outputs below ~1e-16 lose relative accuracy
      y = y.array().max(0.0) + (1.0 + e).log();
    }
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->slopes.push_back(std::move(slope));
      tape->effective_weights.push_back(std::move(w_eff));
      tape->row_scales.push_back(std::move(scales));
      tape->row_sums.push_back(std::move(sums));
    }
    h = std::move(y);
  }
  return h;
}

Eigen::MatrixXd Network::backward(const GradientTape& tape, const Eigen::MatrixXd& dy,
                                  Eigen::VectorXd* grad) const {
  if (tape.inputs.size() != layers_.size()) {
    throw InvalidArgument("gradient tape does not belong to this network");
  }
  if (dy.rows() != output_dim()) throw DimensionMismatch("upstream gradient has the wrong width");
  if (grad && grad->size() != params_.size()) throw DimensionMismatch("gradient buffer size mismatch");

  Eigen::MatrixXd upstream = dy;
  Eigen::MatrixXd g_eff;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const auto& layer = layers_[idx];
    Eigen::MatrixXd da = std::move(upstream);
    if (layer.activation == Activation::softplus) da.array() *= tape.slopes[idx].array();
    if (grad) {
      g_eff.noalias() = da * tape.inputs[idx].transpose();
      Eigen::Map<Eigen::VectorXd>(grad->data() + layer.bias_offset(), layer.out) += da.rowwise().sum();
      const auto w = weight(idx);
      const Eigen::VectorXd& scales = tape.row_scales[idx];
      const Eigen::VectorXd& sums = tape.row_sums[idx];
      const double limit = softplus(bound(idx));
      double g_bound = 0.0;
      for (Eigen::Index r = 0; r < layer.out; ++r) {
        if (scales[r] == 1.0) continue;
        // W_eff_rk = limit * W_rk / R_r with R_r = sum_k |W_rk|
        const double proj = g_eff.row(r).dot(w.row(r));
        const double inv = 1.0 / sums[r];
        const double coeff = limit * proj * inv * inv;
        for (Eigen::Index k = 0; k < layer.in; ++k) {
          const double v = w(r, k);
          g_eff(r, k) = scales[r] * g_eff(r, k) - coeff * static_cast<double>((v > 0) - (v < 0));
        }
        g_bound += proj * inv;
      }
      Eigen::Map<Eigen::MatrixXd>(grad->data() + layer.weight_offset(), layer.out, layer.in) += g_eff;
      (*grad)[static_cast<Eigen::Index>(layer.bound_offset())] += g_bound * sigmoid(bound(idx));
    }
    upstream.noalias() = tape.effective_weights[idx].transpose() * da;
  }
  return upstream;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               double learning_rate) {
  if (grads.size() != params.size()) throw DimensionMismatch("Adam: gradient/parameter size mismatch");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  } else if (state.m.size() != params.size()) {
    throw DimensionMismatch("Adam: optimizer state does not match the parameters");
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.eps);
}

double PlateauScheduler::step(double loss) {
  if (!has_best_ || loss < best_ - threshold_) {
    best_ = loss;
    has_best_ = true;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ > patience_) {
    lr_ *= factor_;
    ++reductions_;
    bad_epochs_ = 0;
  }
  return lr_;
}

bool EarlyStopping::update(double loss) {
  if (!has_best_ || loss < best_ - min_delta_) {
    best_ = loss;
    has_best_ = true;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

}  // namespace latentgs
