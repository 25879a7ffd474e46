// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dgd/data.hpp"
#include "dgd/dropout.hpp"
#include "dgd/nn.hpp"
#include "dgd/tensor.hpp"

namespace dgd {

/// One feature row per item plus its identity label.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  Tensor data;           // [rows x dim]
  std::vector<int> ids;  // identity per row

  std::span<const double> row(std::size_t r) const {
    return data.values().subspan(r * dim, dim);
  }
  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                 std::vector<int> ids);
};

/// accuracies[k-1] is the fraction of probes whose true identity is ranked
/// within the top k gallery entries.
struct CmcCurve {
  std::vector<double> accuracies;
  std::size_t num_probes = 0;

  double top1() const { return accuracies.empty() ? 0.0 : accuracies.front(); }
  double at_rank(std::size_t k) const;
};

/// Features of every sample under the test-time semantics of `policy`.
/// Identity ids are the samples' local labels.
FeatureMatrix extract_features(const EncoderModel& model,
                               const DropoutPolicy& policy,
                               std::span<const Sample> samples,
                               bool l2_normalize = false);

/// Gallery indices by ascending Euclidean distance, ties by ascending index.
std::vector<std::size_t> rank_gallery(std::span<const double> probe,
                                      const FeatureMatrix& gallery);

/// Throws ProtocolError when a probe identity is missing from the gallery or
/// the gallery holds an identity twice.
CmcCurve cmc(const FeatureMatrix& probes, const FeatureMatrix& gallery,
             std::size_t max_rank);

}  // namespace dgd
