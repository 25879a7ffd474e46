// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/reid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "dgd/errors.hpp"

namespace dgd {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

FeatureMatrix FeatureMatrix::from_rows(
    const std::vector<std::vector<double>>& rows, std::vector<int> ids) {
  if (rows.size() != ids.size()) {
    throw DimensionError(fmt::format("{} rows but {} ids", rows.size(), ids.size()));
  }
  FeatureMatrix m;
  m.rows = rows.size();
  m.dim = rows.empty() ? 0 : rows.front().size();
  std::vector<double> flat;
  flat.reserve(m.rows * m.dim);
  for (const auto& r : rows) {
    if (r.size() != m.dim) throw DimensionError("ragged feature rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  if (!flat.empty()) m.data = Tensor({m.rows, m.dim}, std::move(flat));
  m.ids = std::move(ids);
  return m;
}

double CmcCurve::at_rank(std::size_t k) const {
  if (k == 0 || accuracies.empty()) return 0.0;
  return accuracies[std::min(k, accuracies.size()) - 1];
}

FeatureMatrix extract_features(const EncoderModel& model,
                               const DropoutPolicy& policy,
                               std::span<const Sample> samples,
                               bool l2_normalize) {
  const std::size_t d = model.feature_dim();
  FeatureMatrix out;
  out.rows = samples.size();
  out.dim = d;
  if (samples.empty()) return out;
  std::vector<double> flat;
  flat.reserve(samples.size() * d);
  for (const auto& s : samples) {
    Tensor g = encode(model, s.features);
    try {
      apply_test_scaling_inplace(policy, g.values());
    } catch (const DimensionError& e) {
      throw ConfigError(fmt::format("policy does not fit model: {}", e.what()));
    }
    if (l2_normalize) {
      double norm = 0.0;
      for (double v : g.storage()) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (auto& v : g.storage()) v /= norm;
      }
    }
    flat.insert(flat.end(), g.storage().begin(), g.storage().end());
    out.ids.push_back(s.local_label);
  }
  out.data = Tensor({out.rows, d}, std::move(flat));
  return out;
}

std::vector<std::size_t> rank_gallery(std::span<const double> probe,
                                      const FeatureMatrix& gallery) {
  if (gallery.rows == 0) throw ArgumentError("gallery is empty");
  if (probe.size() != gallery.dim) {
    throw DimensionError(fmt::format("probe has {} dims, gallery {}",
                                     probe.size(), gallery.dim));
  }
  std::vector<double> dist(gallery.rows);
  for (std::size_t j = 0; j < gallery.rows; ++j) {
    dist[j] = squared_distance(probe, gallery.row(j));
  }
  std::vector<std::size_t> order(gallery.rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto l, auto r) { return dist[l] < dist[r]; });
  return order;
}

CmcCurve cmc(const FeatureMatrix& probes, const FeatureMatrix& gallery,
             std::size_t max_rank) {
  if (max_rank == 0) throw ArgumentError("max_rank must be positive");
  if (gallery.rows == 0) throw ArgumentError("gallery is empty");
  if (probes.rows > 0 && probes.dim != gallery.dim) {
    throw DimensionError(fmt::format("probe dim {} differs from gallery dim {}",
                                     probes.dim, gallery.dim));
  }
  std::map<int, std::size_t> gallery_row;
  for (std::size_t j = 0; j < gallery.rows; ++j) {
    if (!gallery_row.emplace(gallery.ids[j], j).second) {
      throw ProtocolError(fmt::format(
          "identity {} appears more than once in the gallery", gallery.ids[j]));
    }
  }

  std::vector<std::size_t> hits(max_rank, 0);
  for (std::size_t p = 0; p < probes.rows; ++p) {
    auto it = gallery_row.find(probes.ids[p]);
    if (it == gallery_row.end()) {
      throw ProtocolError(fmt::format(
          "probe identity {} has no gallery entry", probes.ids[p]));
    }
    const std::size_t target = it->second;
    const auto probe = probes.row(p);
    const double target_dist = squared_distance(probe, gallery.row(target));
    // Rank of the true match = entries strictly ahead of it in rank_gallery order.
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < gallery.rows; ++j) {
      if (j == target) continue;
      const double dj = squared_distance(probe, gallery.row(j));
      if (dj < target_dist || (dj == target_dist && j < target)) ++ahead;
    }
    if (ahead < max_rank) ++hits[ahead];
  }

  CmcCurve curve;
  curve.num_probes = probes.rows;
  curve.accuracies.resize(max_rank, 0.0);
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < max_rank; ++k) {
    cumulative += hits[k];
    curve.accuracies[k] = probes.rows == 0
                              ? 0.0
                              : static_cast<double>(cumulative) /
                                    static_cast<double>(probes.rows);
  }
  return curve;
}

}  // namespace dgd
