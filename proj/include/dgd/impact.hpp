// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgd/data.hpp"
#include "dgd/nn.hpp"
#include "dgd/tensor.hpp"

namespace dgd {

enum class ImpactMethod { Exact, Taylor };

std::string to_string(ImpactMethod method);
ImpactMethod impact_method_from_string(const std::string& name);

/// Which label a sample is scored against.
enum class LabelSpace { Merged, Local };

/// Domain-averaged impact of every feature neuron on the loss.
struct ImpactScores {
  int domain_id = 0;
  Tensor scores;
  ImpactMethod method = ImpactMethod::Taylor;
  std::size_t num_samples = 0;

  std::size_t dim() const { return scores.size(); }
  std::size_t non_positive_count() const;
};

/// s_i = L(g with neuron i zeroed) - L(g). The encoder runs once; only the
/// head is re-evaluated per neuron.
Tensor impact_exact(const EncoderModel& model, const ClassifierHead& head,
                    std::span<const double> x, std::size_t label);

/// Second-order estimate s_i ~ -dL/dg_i g_i + 1/2 d2L/dg_i2 g_i^2 from a single
/// forward/backward pass.
Tensor impact_taylor(const EncoderModel& model, const ClassifierHead& head,
                     std::span<const double> x, std::size_t label);

/// Mean per-sample score over `samples` (all from one domain). The reduction
/// order is fixed so the result does not depend on `jobs`.
ImpactScores average_impact(const EncoderModel& model,
                            const ClassifierHead& head,
                            std::span<const Sample> samples,
                            ImpactMethod method,
                            LabelSpace labels = LabelSpace::Merged,
                            std::size_t jobs = 1);

struct SortedScorePoint {
  std::size_t neuron = 0;
  double score_a = 0.0;
  double score_b = 0.0;
};

/// Correlations are empty when either side has zero variance.
struct CorrelationReport {
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::vector<SortedScorePoint> curve;  // sorted by descending score_a
};

std::optional<double> pearson_correlation(std::span<const double> a,
                                          std::span<const double> b);
std::optional<double> spearman_correlation(std::span<const double> a,
                                           std::span<const double> b);

CorrelationReport cross_domain_correlation(const ImpactScores& a,
                                           const ImpactScores& b);

}  // namespace dgd
