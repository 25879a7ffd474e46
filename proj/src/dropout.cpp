// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/dropout.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dgd/errors.hpp"
#include "dgd/rng.hpp"

namespace dgd {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

const ImpactScores* policy_scores(const DropoutPolicy& policy) {
  if (auto* det = std::get_if<DeterministicDgd>(&policy)) return &det->scores;
  if (auto* sto = std::get_if<StochasticDgd>(&policy)) return &sto->scores;
  return nullptr;
}

void check_dim(const DropoutPolicy& policy, std::size_t d) {
  if (const auto* scores = policy_scores(policy); scores && scores->dim() != d) {
    throw DimensionError(fmt::format("policy has {} scores, features have {}",
                                     scores->dim(), d));
  }
}

}  // namespace

std::string policy_name(const DropoutPolicy& policy) {
  return std::visit(
      overloaded{[](const StandardDropout&) { return std::string("standard"); },
                 [](const DeterministicDgd&) {
                   return std::string("deterministic_dgd");
                 },
                 [](const StochasticDgd&) { return std::string("stochastic_dgd"); }},
      policy);
}

Mask deterministic_mask(std::span<const double> scores) {
  if (scores.empty()) return Mask{};
  Mask mask{Tensor({scores.size()}), 1.0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    mask.values[i] = scores[i] > 0.0 ? 1.0 : 0.0;
  }
  return mask;
}

double keep_probability(double score, double temperature) {
  if (!(temperature > 0.0)) {
    throw ArgumentError(
        fmt::format("temperature {} must be positive", temperature));
  }
  const double z = score / temperature;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Mask stochastic_mask(std::span<const double> scores, double temperature,
                     Rng& rng) {
  if (scores.empty()) return Mask{};
  Mask mask{Tensor({scores.size()}), 1.0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    mask.values[i] = rng.bernoulli(keep_probability(scores[i], temperature)) ? 1.0 : 0.0;
  }
  return mask;
}

Mask draw_train_mask(const DropoutPolicy& policy, std::size_t d, Rng& rng) {
  check_dim(policy, d);
  return std::visit(
      overloaded{
          [&](const StandardDropout& p) {
            if (!(p.rate > 0.0 && p.rate < 1.0)) {
              throw ArgumentError(
                  fmt::format("dropout rate {} outside (0, 1)", p.rate));
            }
            const double keep = 1.0 - p.rate;
            Mask mask{Tensor({d}), 1.0 / keep};
            for (auto& v : mask.values.storage()) v = rng.bernoulli(keep) ? 1.0 : 0.0;
            return mask;
          },
          [&](const DeterministicDgd& p) {
            return deterministic_mask(p.scores.scores.values());
          },
          [&](const StochasticDgd& p) {
            return stochastic_mask(p.scores.scores.values(), p.temperature, rng);
          }},
      policy);
}

void apply_test_scaling_inplace(const DropoutPolicy& policy,
                                std::span<double> features) {
  check_dim(policy, features.size());
  std::visit(overloaded{[](const StandardDropout&) {},
                        [&](const DeterministicDgd& p) {
                          for (std::size_t i = 0; i < features.size(); ++i) {
                            if (!(p.scores.scores[i] > 0.0)) features[i] = 0.0;
                          }
                        },
                        [&](const StochasticDgd& p) {
                          for (std::size_t i = 0; i < features.size(); ++i) {
                            features[i] *= keep_probability(p.scores.scores[i],
                                                            p.temperature);
                          }
                        }},
             policy);
}

Tensor apply_test_scaling(const DropoutPolicy& policy, const Tensor& features) {
  Tensor out = features;
  apply_test_scaling_inplace(policy, out.values());
  return out;
}

double select_temperature(std::span<const double> scores,
                          double target_max_keep) {
  if (!(target_max_keep > 0.5 && target_max_keep < 1.0)) {
    throw ArgumentError(fmt::format(
        "target_max_keep {} must lie in (0.5, 1)", target_max_keep));
  }
  if (scores.empty()) throw ArgumentError("no impact scores to calibrate on");
  const double best = *std::max_element(scores.begin(), scores.end());
  if (!(best > 0.0)) {
    throw ArgumentError(
        "no neuron has a positive impact score; use the deterministic scheme "
        "or standard dropout instead");
  }
  return best / std::log(target_max_keep / (1.0 - target_max_keep));
}

std::vector<KeepCurvePoint> cumulative_keep_histogram(
    std::span<const double> scores, double temperature) {
  std::vector<double> probs;
  probs.reserve(scores.size());
  for (double s : scores) probs.push_back(keep_probability(s, temperature));
  std::sort(probs.begin(), probs.end());

  std::vector<KeepCurvePoint> curve;
  curve.push_back({0.0, static_cast<std::size_t>(std::count(probs.begin(), probs.end(), 0.0))});
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (i + 1 < probs.size() && probs[i + 1] == probs[i]) continue;
    if (probs[i] == 0.0) continue;
    curve.push_back({probs[i], i + 1});
  }
  if (curve.back().threshold < 1.0) curve.push_back({1.0, probs.size()});
  return curve;
}

}  // namespace dgd
