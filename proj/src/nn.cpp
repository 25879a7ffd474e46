// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "dgd/errors.hpp"
#include "dgd/rng.hpp"

namespace dgd {

std::string to_string(Activation activation) {
  return activation == Activation::ReLU ? "relu" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  throw ArgumentError(fmt::format("unknown activation '{}'", name));
}

std::size_t EncoderModel::input_dim() const {
  if (layers.empty()) throw DimensionError("encoder has no layers");
  return layers.front().inputs();
}

std::size_t EncoderModel::feature_dim() const {
  if (layers.empty()) throw DimensionError("encoder has no layers");
  return layers.back().outputs();
}

void EncoderModel::validate() const {
  if (layers.empty()) throw DimensionError("encoder has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.weights.rank() != 2 || layer.bias.rank() != 1 ||
        layer.bias.dim(0) != layer.weights.dim(0)) {
      throw DimensionError(fmt::format(
          "layer {}: weights {} incompatible with bias {}", k,
          layer.weights.shape_string(), layer.bias.shape_string()));
    }
    if (k > 0 && layers[k - 1].outputs() != layer.inputs()) {
      throw DimensionError(fmt::format(
          "layer {} expects {} inputs but layer {} emits {}", k,
          layer.inputs(), k - 1, layers[k - 1].outputs()));
    }
  }
}

void ClassifierHead::validate() const {
  if (weights.rank() != 2 || bias.rank() != 1 ||
      bias.dim(0) != weights.dim(0)) {
    throw DimensionError(fmt::format("head weights {} incompatible with bias {}",
                                     weights.shape_string(),
                                     bias.shape_string()));
  }
  if (num_classes() < 2) throw DimensionError("head needs at least 2 classes");
}

Mask Mask::ones(std::size_t d) { return Mask{Tensor({d}, 1.0), 1.0}; }

bool Mask::is_binary() const {
  return std::all_of(values.storage().begin(), values.storage().end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

EncoderModel make_encoder(std::size_t input_dim,
                          const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.empty()) throw ArgumentError("encoder needs at least one layer");
  EncoderModel model;
  std::size_t fan_in = input_dim;
  for (auto width : widths) {
    DenseLayer layer{Tensor::matrix(width, fan_in), Tensor({width}),
                     Activation::ReLU};
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : layer.weights.storage()) w = stddev * rng.normal();
    model.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return model;
}

ClassifierHead make_head(std::size_t feature_dim, std::size_t num_classes,
                         Rng& rng) {
  if (num_classes < 2) throw ArgumentError("head needs at least 2 classes");
  ClassifierHead head{Tensor::matrix(num_classes, feature_dim),
                      Tensor({num_classes})};
  const double stddev = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (auto& w : head.weights.storage()) w = stddev * rng.normal();
  return head;
}

namespace {

void check_mask(const Mask* mask, std::size_t d) {
  if (mask == nullptr) return;
  if (mask->values.size() != d) {
    throw DimensionError(fmt::format("mask has {} entries, features have {}",
                                     mask->values.size(), d));
  }
  for (double v : mask->values.storage()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ArgumentError(fmt::format("mask entry {} outside [0, 1]", v));
    }
  }
}

void affine(const DenseLayer& layer, std::span<const double> in,
            std::vector<double>& out) {
  const std::size_t rows = layer.outputs();
  const std::size_t cols = layer.inputs();
  out.resize(rows);
  const double* w = layer.weights.storage().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = layer.bias[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

void activate(Activation activation, std::vector<double>& values) {
  if (activation == Activation::ReLU) {
    for (auto& v : values) v = v > 0.0 ? v : 0.0;
  }
}

// Writes logits into `logits`; returns log-sum-exp.
double logits_and_lse(const ClassifierHead& head, std::span<const double> g,
                      std::vector<double>& logits) {
  const std::size_t m = head.num_classes();
  const std::size_t d = head.feature_dim();
  logits.resize(m);
  const double* w = head.weights.storage().data();
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    double acc = head.bias[k];
    const double* row = w + k * d;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * g[i];
    logits[k] = acc;
    max_logit = std::max(max_logit, acc);
  }
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max_logit);
  return max_logit + std::log(sum);
}

void check_head_input(const ClassifierHead& head, std::size_t g_size,
                      std::size_t label) {
  if (g_size != head.feature_dim()) {
    throw DimensionError(fmt::format("head expects {} features, got {}",
                                     head.feature_dim(), g_size));
  }
  if (label >= head.num_classes()) {
    throw ArgumentError(fmt::format("label {} outside [0, {})", label,
                                    head.num_classes()));
  }
}

}  // namespace

Tensor encode(const EncoderModel& model, std::span<const double> x,
              const Mask* mask) {
  if (x.size() != model.input_dim()) {
    throw DimensionError(fmt::format("input has {} entries, encoder expects {}",
                                     x.size(), model.input_dim()));
  }
  const std::size_t d = model.feature_dim();
  check_mask(mask, d);
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& layer : model.layers) {
    affine(layer, current, next);
    activate(layer.activation, next);
    current.swap(next);
  }
  if (mask != nullptr) {
    for (std::size_t i = 0; i < d; ++i) {
      current[i] *= mask->values[i] * mask->scale;
    }
  }
  return Tensor::vector(std::move(current));
}

LossResult loss_and_probs(const ClassifierHead& head, std::span<const double> g,
                          std::size_t label) {
  check_head_input(head, g.size(), label);
  std::vector<double> logits;
  const double lse = logits_and_lse(head, g, logits);
  LossResult result;
  result.loss = lse - logits[label];
  for (auto& z : logits) z = std::exp(z - lse);
  // Renormalise so the probabilities sum to one to rounding.
  double total = 0.0;
  for (double p : logits) total += p;
  for (auto& p : logits) p /= total;
  result.probs = Tensor::vector(std::move(logits));
  return result;
}

double head_loss(const ClassifierHead& head, std::span<const double> g,
                 std::size_t label) {
  check_head_input(head, g.size(), label);
  thread_local std::vector<double> logits;
  const double lse = logits_and_lse(head, g, logits);
  return lse - logits[label];
}

double Backprop::accumulate(const EncoderModel& model,
                            const ClassifierHead& head,
                            std::span<const double> x, std::size_t label,
                            const Mask* mask,
                            std::span<LayerGradient> encoder_grads,
                            LayerGradient& head_grad) {
  if (x.size() != model.input_dim()) {
    throw DimensionError(fmt::format("input has {} entries, encoder expects {}",
                                     x.size(), model.input_dim()));
  }
  const std::size_t depth = model.layers.size();
  const std::size_t d = model.feature_dim();
  check_mask(mask, d);
  check_head_input(head, d, label);
  if (encoder_grads.size() != depth) {
    throw DimensionError("gradient accumulator does not match encoder depth");
  }

  pre_.resize(depth);
  post_.resize(depth);
  std::span<const double> input = x;
  for (std::size_t k = 0; k < depth; ++k) {
    affine(model.layers[k], input, pre_[k]);
    post_[k] = pre_[k];
    activate(model.layers[k].activation, post_[k]);
    input = post_[k];
  }

  gate_.assign(d, 1.0);
  if (mask != nullptr) {
    for (std::size_t i = 0; i < d; ++i) gate_[i] = mask->values[i] * mask->scale;
  }
  head_in_.resize(d);
  for (std::size_t i = 0; i < d; ++i) head_in_[i] = post_.back()[i] * gate_[i];

  const double lse = logits_and_lse(head, head_in_, probs_);
  const double loss = lse - probs_[label];
  for (auto& z : probs_) z = std::exp(z - lse);

  // Head: dL/dz = p - onehot(label).
  const std::size_t m = head.num_classes();
  const double* hw = head.weights.storage().data();
  double* gw = head_grad.weights.storage().data();
  grad_head_in_.assign(d, 0.0);
  hess_.assign(d, 0.0);
  std::vector<double>& first_moment = delta_next_;
  first_moment.assign(d, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const double p = probs_[k];
    const double dz = p - (k == label ? 1.0 : 0.0);
    head_grad.bias[k] += dz;
    const double* wrow = hw + k * d;
    double* grow = gw + k * d;
    for (std::size_t i = 0; i < d; ++i) {
      grow[i] += dz * head_in_[i];
      grad_head_in_[i] += wrow[i] * dz;
      hess_[i] += wrow[i] * wrow[i] * p;
      first_moment[i] += wrow[i] * p;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    hess_[i] -= first_moment[i] * first_moment[i];
    if (hess_[i] < 0.0) hess_[i] = 0.0;  // rounding below an exact variance
  }

  delta_.resize(d);
  for (std::size_t i = 0; i < d; ++i) delta_[i] = grad_head_in_[i] * gate_[i];

  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = model.layers[k];
    if (layer.activation == Activation::ReLU) {
      for (std::size_t r = 0; r < delta_.size(); ++r) {
        if (!(pre_[k][r] > 0.0)) delta_[r] = 0.0;
      }
    }
    std::span<const double> layer_in =
        k == 0 ? x : std::span<const double>(post_[k - 1]);
    const std::size_t rows = layer.outputs();
    const std::size_t cols = layer.inputs();
    double* gwk = encoder_grads[k].weights.storage().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double dr = delta_[r];
      if (dr == 0.0) continue;
      encoder_grads[k].bias[r] += dr;
      double* grow = gwk + r * cols;
      for (std::size_t c = 0; c < cols; ++c) grow[c] += dr * layer_in[c];
    }
    if (k == 0) break;
    delta_next_.assign(cols, 0.0);
    const double* w = layer.weights.storage().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double dr = delta_[r];
      if (dr == 0.0) continue;
      const double* wrow = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) delta_next_[c] += wrow[c] * dr;
    }
    delta_.swap(delta_next_);
  }
  return loss;
}

std::vector<LayerGradient> zero_gradients(const EncoderModel& model) {
  std::vector<LayerGradient> grads;
  grads.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    grads.push_back({Tensor(layer.weights.shape()), Tensor(layer.bias.shape())});
  }
  return grads;
}

LayerGradient zero_gradient(const ClassifierHead& head) {
  return {Tensor(head.weights.shape()), Tensor(head.bias.shape())};
}

GradientSet backward(const EncoderModel& model, const ClassifierHead& head,
                     const Tensor& x, std::size_t label, const Mask* mask) {
  model.validate();
  head.validate();
  GradientSet out;
  out.encoder = zero_gradients(model);
  out.head = zero_gradient(head);
  Backprop pass;
  out.loss = pass.accumulate(model, head, x.values(), label, mask, out.encoder,
                             out.head);
  out.grad_features = Tensor::vector(pass.grad_features());
  out.diag_hessian_features = Tensor::vector(pass.diag_hessian_features());
  return out;
}

void sgd_step(std::span<const ParamSlot> slots, double learning_rate,
              double momentum, std::vector<Tensor>& velocity) {
  if (!(learning_rate > 0.0)) {
    throw ArgumentError(fmt::format("learning rate {} must be positive",
                                    learning_rate));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ArgumentError(fmt::format("momentum {} outside [0, 1)", momentum));
  }
  for (const auto& slot : slots) {
    require_same_shape(*slot.param, *slot.grad, slot.name.c_str());
    if (!slot.grad->all_finite()) {
      throw TrainingError(
          fmt::format("non-finite gradient in parameter '{}'", slot.name));
    }
  }
  if (velocity.size() != slots.size()) {
    velocity.clear();
    for (const auto& slot : slots) velocity.emplace_back(slot.param->shape());
  }
  for (std::size_t s = 0; s < slots.size(); ++s) {
    auto& v = velocity[s].storage();
    auto& p = slots[s].param->storage();
    const auto& g = slots[s].grad->storage();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] - learning_rate * g[i];
      p[i] += v[i];
    }
  }
}

SgdMomentum::SgdMomentum(double momentum) : momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ArgumentError(fmt::format("momentum {} outside [0, 1)", momentum));
  }
}

void SgdMomentum::step(std::span<const ParamSlot> slots, double learning_rate) {
  sgd_step(slots, learning_rate, momentum_, velocity_);
}

}  // namespace dgd
