// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <variant>

namespace dgd {

/// Staircase decay used for training from scratch: the rate shrinks by
/// `factor` every `every_epochs` epochs and is clamped at `floor`.
struct StepDecay {
  double initial = 0.1;
  double factor = 0.96;
  std::size_t every_epochs = 4;
  double floor = 0.0005;
};

/// Polynomial decay used when resuming or fine-tuning.
struct PolyDecay {
  double base = 0.01;
  double power = 0.5;
};

using Schedule = std::variant<StepDecay, PolyDecay>;

double lr_step_decay(std::size_t epoch, const StepDecay& params = {});

/// Throws ArgumentError when max_iter is zero or iter exceeds it.
double lr_poly_decay(std::size_t iter, std::size_t max_iter,
                     const PolyDecay& params = {});

}  // namespace dgd
