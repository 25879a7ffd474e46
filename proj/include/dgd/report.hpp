// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgd/dropout.hpp"
#include "dgd/impact.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/reid.hpp"

namespace dgd {

/// rank,accuracy
void write_cmc_csv(const std::filesystem::path& path, const CmcCurve& curve);

/// threshold,count
void write_keep_histogram_csv(const std::filesystem::path& path,
                              std::span<const KeepCurvePoint> points,
                              double temperature);

void write_dropped_neurons_csv(const std::filesystem::path& path,
                               std::span<const DroppedNeuronRow> rows);

/// One sorted-curve CSV per pair plus correlations.csv, under out_dir/impact.
void write_correlation_csvs(
    const std::filesystem::path& out_dir,
    std::span<const std::pair<const ImpactScores*, const ImpactScores*>> pairs);

/// neuron,exact,taylor
void write_method_comparison_csv(const std::filesystem::path& path,
                                 const ImpactScores& exact,
                                 const ImpactScores& taylor);

/// Top-1 per stage and domain plus the impact diagnostics of one seed.
nlohmann::json seed_summary(const PipelineOutcome& outcome);

/// Mean and sample standard deviation of every stage/domain top-1 across
/// per-seed summaries, rows in stage order.
nlohmann::json aggregate_summaries(std::span<const nlohmann::json> summaries);

/// stage,label,domain,mean,std,seeds
void write_summary_table_csv(const std::filesystem::path& path,
                             const nlohmann::json& aggregate);

/// Fixed-width text rendering of the aggregate table.
std::string format_summary_table(const nlohmann::json& aggregate);

}  // namespace dgd
