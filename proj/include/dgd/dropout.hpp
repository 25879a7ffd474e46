// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dgd/impact.hpp"
#include "dgd/nn.hpp"
#include "dgd/tensor.hpp"

namespace dgd {

class Rng;

/// Classic dropout, inverted: kept units are scaled by 1/(1 - rate) during
/// training so the test-time pass is the identity.
struct StandardDropout {
  double rate = 0.5;
};

/// Drops every neuron whose domain impact score is <= 0, at train and test.
struct DeterministicDgd {
  ImpactScores scores;
};

/// Keeps neuron i with probability sigmoid(s_i / T) during training and
/// scales it by that probability at test time.
struct StochasticDgd {
  ImpactScores scores;
  double temperature = 1.0;
};

using DropoutPolicy = std::variant<StandardDropout, DeterministicDgd, StochasticDgd>;

std::string policy_name(const DropoutPolicy& policy);

Mask deterministic_mask(std::span<const double> scores);

/// 1 / (1 + exp(-s / T)) without overflow for any finite s. Throws
/// ArgumentError when T <= 0.
double keep_probability(double score, double temperature);

Mask stochastic_mask(std::span<const double> scores, double temperature,
                     Rng& rng);

/// Binary training mask for one sample under `policy`.
Mask draw_train_mask(const DropoutPolicy& policy, std::size_t d, Rng& rng);

/// Test-time transform of a feature vector.
Tensor apply_test_scaling(const DropoutPolicy& policy, const Tensor& features);
void apply_test_scaling_inplace(const DropoutPolicy& policy,
                                std::span<double> features);

/// T such that keep_probability(max score, T) == target_max_keep.
/// Throws ArgumentError when no score is positive or the target is outside
/// (0.5, 1).
double select_temperature(std::span<const double> scores,
                          double target_max_keep = 0.9);

struct KeepCurvePoint {
  double threshold = 0.0;
  std::size_t count = 0;  // neurons with keep probability <= threshold
};

/// Step curve over [0, 1] with a point at 0, at every distinct keep
/// probability, and at 1.
std::vector<KeepCurvePoint> cumulative_keep_histogram(
    std::span<const double> scores, double temperature);

}  // namespace dgd
