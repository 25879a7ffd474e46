// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dgd/tensor.hpp"

namespace dgd {

class Rng;

enum class Activation { ReLU, Identity };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

/// Affine map followed by an elementwise activation.
struct DenseLayer {
  Tensor weights;  // [out x in]
  Tensor bias;     // [out]
  Activation activation = Activation::ReLU;

  std::size_t inputs() const { return weights.dim(1); }
  std::size_t outputs() const { return weights.dim(0); }
};

/// Feature extractor g: a chain of dense layers. The width of the last
/// layer is the feature dimension d that impact scores and masks index.
struct EncoderModel {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  /// Throws DimensionError when layer shapes do not chain.
  void validate() const;
};

/// Linear-softmax classifier f on top of the features.
struct ClassifierHead {
  Tensor weights;  // [M x d]
  Tensor bias;     // [M]

  std::size_t num_classes() const { return weights.dim(0); }
  std::size_t feature_dim() const { return weights.dim(1); }
  void validate() const;
};

/// Per-neuron gate on the feature layer. `values` are in [0, 1]; kept units
/// are additionally multiplied by `scale` (1/keep for inverted dropout).
struct Mask {
  Tensor values;
  double scale = 1.0;

  static Mask ones(std::size_t d);
  std::size_t size() const { return values.size(); }
  bool is_binary() const;
};

struct LayerGradient {
  Tensor weights;
  Tensor bias;
};

/// Gradients of the softmax cross-entropy for one sample.
///
/// `grad_features` and `diag_hessian_features` are taken with respect to the
/// head input (the masked features); upstream flow is gated by the mask.
struct GradientSet {
  std::vector<LayerGradient> encoder;
  LayerGradient head;
  Tensor grad_features;
  Tensor diag_hessian_features;
  double loss = 0.0;
};

struct LossResult {
  double loss = 0.0;
  Tensor probs;
};

EncoderModel make_encoder(std::size_t input_dim,
                          const std::vector<std::size_t>& widths, Rng& rng);
ClassifierHead make_head(std::size_t feature_dim, std::size_t num_classes,
                         Rng& rng);

Tensor encode(const EncoderModel& model, std::span<const double> x,
              const Mask* mask = nullptr);
inline Tensor encode(const EncoderModel& model, const Tensor& x,
                     const Mask* mask = nullptr) {
  return encode(model, x.values(), mask);
}

/// Softmax probabilities of `W g + b` and the cross-entropy against `label`
/// (a zero-based class index).
LossResult loss_and_probs(const ClassifierHead& head, std::span<const double> g,
                          std::size_t label);
inline LossResult loss_and_probs(const ClassifierHead& head, const Tensor& g,
                                 std::size_t label) {
  return loss_and_probs(head, g.values(), label);
}

/// Cross-entropy only; no allocation beyond a logits buffer.
double head_loss(const ClassifierHead& head, std::span<const double> g,
                 std::size_t label);

GradientSet backward(const EncoderModel& model, const ClassifierHead& head,
                     const Tensor& x, std::size_t label,
                     const Mask* mask = nullptr);

/// Reusable buffers for repeated forward/backward passes inside a training
/// loop. Gradients are added into the caller's accumulators.
class Backprop {
 public:
  /// Returns the sample loss. `encoder_grads` must be shaped like the model
  /// layers and `head_grad` like the head.
  double accumulate(const EncoderModel& model, const ClassifierHead& head,
                    std::span<const double> x, std::size_t label,
                    const Mask* mask, std::span<LayerGradient> encoder_grads,
                    LayerGradient& head_grad);

  /// Populated by the last accumulate(): d loss / d head input, its diagonal
  /// second derivative, and the unmasked features.
  const std::vector<double>& grad_features() const { return grad_head_in_; }
  const std::vector<double>& diag_hessian_features() const { return hess_; }
  const std::vector<double>& features() const { return post_.back(); }

 private:
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> post_;
  std::vector<double> gate_;
  std::vector<double> head_in_;
  std::vector<double> probs_;
  std::vector<double> grad_head_in_;
  std::vector<double> hess_;
  std::vector<double> delta_;
  std::vector<double> delta_next_;
};

std::vector<LayerGradient> zero_gradients(const EncoderModel& model);
LayerGradient zero_gradient(const ClassifierHead& head);

/// One parameter tensor paired with its gradient.
struct ParamSlot {
  std::string name;
  Tensor* param = nullptr;
  const Tensor* grad = nullptr;
};

/// Momentum SGD: v <- momentum * v - lr * grad; param <- param + v.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9);

  /// Throws TrainingError naming the first slot whose gradient is non-finite;
  /// in that case no parameter is modified.
  void step(std::span<const ParamSlot> slots, double learning_rate);
  void reset() { velocity_.clear(); }
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

/// Convenience wrapper over SgdMomentum for a single step sequence.
void sgd_step(std::span<const ParamSlot> slots, double learning_rate,
              double momentum, std::vector<Tensor>& velocity);

}  // namespace dgd
