// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/impact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "dgd/errors.hpp"
#include "dgd/parallel.hpp"

namespace dgd {

std::string to_string(ImpactMethod method) {
  return method == ImpactMethod::Exact ? "exact" : "taylor";
}

ImpactMethod impact_method_from_string(const std::string& name) {
  if (name == "exact") return ImpactMethod::Exact;
  if (name == "taylor") return ImpactMethod::Taylor;
  throw ArgumentError(fmt::format("unknown impact method '{}'", name));
}

std::size_t ImpactScores::non_positive_count() const {
  return static_cast<std::size_t>(
      std::count_if(scores.storage().begin(), scores.storage().end(),
                    [](double s) { return s <= 0.0; }));
}

Tensor impact_exact(const EncoderModel& model, const ClassifierHead& head,
                    std::span<const double> x, std::size_t label) {
  const Tensor g = encode(model, x);
  const double base = head_loss(head, g.values(), label);
  const std::size_t d = g.size();
  std::vector<double> scores(d, 0.0);
  std::vector<double> zeroed = g.storage();
  for (std::size_t i = 0; i < d; ++i) {
    if (g[i] == 0.0) continue;
    zeroed[i] = 0.0;
    scores[i] = head_loss(head, zeroed, label) - base;
    zeroed[i] = g[i];
  }
  return Tensor::vector(std::move(scores));
}

namespace {

void taylor_from_pass(const Backprop& pass, std::vector<double>& out) {
  const auto& g = pass.features();
  const auto& grad = pass.grad_features();
  const auto& hess = pass.diag_hessian_features();
  out.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i] = -grad[i] * g[i] + 0.5 * hess[i] * g[i] * g[i];
  }
}

}  // namespace

Tensor impact_taylor(const EncoderModel& model, const ClassifierHead& head,
                     std::span<const double> x, std::size_t label) {
  auto encoder_grads = zero_gradients(model);
  auto head_grad = zero_gradient(head);
  Backprop pass;
  pass.accumulate(model, head, x, label, nullptr, encoder_grads, head_grad);
  std::vector<double> scores;
  taylor_from_pass(pass, scores);
  return Tensor::vector(std::move(scores));
}

ImpactScores average_impact(const EncoderModel& model,
                            const ClassifierHead& head,
                            std::span<const Sample> samples,
                            ImpactMethod method, LabelSpace labels,
                            std::size_t jobs) {
  if (samples.empty()) throw ArgumentError("impact needs at least one sample");
  const int domain_id = samples.front().domain_id;
  for (const auto& s : samples) {
    if (s.domain_id != domain_id) {
      throw ArgumentError(fmt::format(
          "impact samples mix domains {} and {}", domain_id, s.domain_id));
    }
  }
  const std::size_t d = model.feature_dim();
  std::vector<std::vector<double>> per_sample(samples.size());

  parallel_for(samples.size(), jobs, [&](std::size_t begin, std::size_t end) {
    auto encoder_grads = zero_gradients(model);
    auto head_grad = zero_gradient(head);
    Backprop pass;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& s = samples[k];
      const int label = labels == LabelSpace::Merged ? s.merged_label : s.local_label;
      if (label < 1) {
        throw ArgumentError(fmt::format(
            "sample of domain {} has no {} label", s.domain_id,
            labels == LabelSpace::Merged ? "merged" : "local"));
      }
      const auto index = static_cast<std::size_t>(label - 1);
      if (method == ImpactMethod::Exact) {
        per_sample[k] = impact_exact(model, head, s.features.values(), index).storage();
      } else {
        pass.accumulate(model, head, s.features.values(), index, nullptr,
                        encoder_grads, head_grad);
        taylor_from_pass(pass, per_sample[k]);
      }
    }
  });

  std::vector<double> mean(d, 0.0);
  for (const auto& scores : per_sample) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += scores[i];
  }
  for (auto& v : mean) v /= static_cast<double>(samples.size());
  return ImpactScores{domain_id, Tensor::vector(std::move(mean)), method,
                      samples.size()};
}

std::optional<double> pearson_correlation(std::span<const double> a,
                                          std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError(fmt::format("correlation of lengths {} and {}",
                                     a.size(), b.size()));
  }
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return std::nullopt;
  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) return std::nullopt;
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

namespace {

// Average ranks, ties share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) {
    return values[l] < values[r];
  });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman_correlation(std::span<const double> a,
                                           std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError(fmt::format("correlation of lengths {} and {}",
                                     a.size(), b.size()));
  }
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  return pearson_correlation(ra, rb);
}

CorrelationReport cross_domain_correlation(const ImpactScores& a,
                                           const ImpactScores& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError(fmt::format("impact dimensions {} and {} differ",
                                     a.dim(), b.dim()));
  }
  CorrelationReport report;
  report.pearson = pearson_correlation(a.scores.values(), b.scores.values());
  report.spearman = spearman_correlation(a.scores.values(), b.scores.values());
  std::vector<std::size_t> order(a.dim());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) {
    return a.scores[l] > a.scores[r];
  });
  for (auto i : order) report.curve.push_back({i, a.scores[i], b.scores[i]});
  return report;
}

}  // namespace dgd
