// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/schedule.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dgd/errors.hpp"

namespace dgd {

double lr_step_decay(std::size_t epoch, const StepDecay& params) {
  if (params.every_epochs == 0) {
    throw ArgumentError("step decay interval must be positive");
  }
  const auto steps = static_cast<double>(epoch / params.every_epochs);
  return std::max(params.floor, params.initial * std::pow(params.factor, steps));
}

double lr_poly_decay(std::size_t iter, std::size_t max_iter,
                     const PolyDecay& params) {
  if (max_iter == 0) throw ArgumentError("max_iter must be positive");
  if (iter > max_iter) {
    throw ArgumentError(
        fmt::format("iteration {} past max_iter {}", iter, max_iter));
  }
  const double remaining =
      1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return params.base * std::pow(remaining, params.power);
}

}  // namespace dgd
