// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/report.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "dgd/errors.hpp"

namespace dgd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  return out;
}

std::string optional_number(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string("nan");
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void write_cmc_csv(const fs::path& path, const CmcCurve& curve) {
  auto out = open_csv(path);
  out << "rank,accuracy\n";
  for (std::size_t k = 0; k < curve.accuracies.size(); ++k) {
    out << fmt::format("{},{}\n", k + 1, curve.accuracies[k]);
  }
}

void write_keep_histogram_csv(const fs::path& path,
                              std::span<const KeepCurvePoint> points,
                              double temperature) {
  auto out = open_csv(path);
  out << fmt::format("# temperature={}\n", temperature);
  out << "threshold,count\n";
  for (const auto& p : points) out << fmt::format("{},{}\n", p.threshold, p.count);
}

void write_dropped_neurons_csv(const fs::path& path,
                               std::span<const DroppedNeuronRow> rows) {
  auto out = open_csv(path);
  out << "domain,identities,non_positive,top1_jstl,top1_jstl_dgd,relative_gain\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{}\n", r.domain_id, r.num_identities,
                       r.non_positive, r.top1_jstl, r.top1_jstl_dgd, r.relative_gain);
  }
}

void write_correlation_csvs(
    const fs::path& out_dir,
    std::span<const std::pair<const ImpactScores*, const ImpactScores*>> pairs) {
  auto summary = open_csv(out_dir / "impact" / "correlations.csv");
  summary << "domain_a,domain_b,pearson,spearman\n";
  for (const auto& [a, b] : pairs) {
    const auto report = cross_domain_correlation(*a, *b);
    summary << fmt::format("{},{},{},{}\n", a->domain_id, b->domain_id,
                           optional_number(report.pearson),
                           optional_number(report.spearman));
    auto curve = open_csv(out_dir / "impact" /
                          fmt::format("sorted_{}_vs_{}.csv", a->domain_id, b->domain_id));
    curve << "position,neuron,score_a,score_b\n";
    for (std::size_t i = 0; i < report.curve.size(); ++i) {
      const auto& p = report.curve[i];
      curve << fmt::format("{},{},{},{}\n", i, p.neuron, p.score_a, p.score_b);
    }
  }
}

void write_method_comparison_csv(const fs::path& path, const ImpactScores& exact,
                                 const ImpactScores& taylor) {
  if (exact.dim() != taylor.dim()) {
    throw DimensionError(fmt::format("score vectors differ in size: {} vs {}",
                                     exact.dim(), taylor.dim()));
  }
  auto out = open_csv(path);
  out << "neuron,exact,taylor\n";
  for (std::size_t i = 0; i < exact.dim(); ++i) {
    out << fmt::format("{},{},{}\n", i, exact.scores[i], taylor.scores[i]);
  }
}

json seed_summary(const PipelineOutcome& outcome) {
  json top1 = json::array();
  for (const auto& report : outcome.reports) {
    for (const auto& entry : report.cmc) {
      top1.push_back({{"stage", stage_key(report.stage)},
                      {"domain", entry.domain_id},
                      {"top1", entry.curve.top1()}});
    }
  }
  json non_positive = json::object();
  for (const auto& [d, scores] : outcome.jstl_impact) {
    non_positive[std::to_string(d)] = scores.non_positive_count();
  }
  json temperatures = json::object();
  for (const auto& [d, t] : outcome.finetune_temperature) {
    temperatures[std::to_string(d)] = t;
  }
  json dropped = json::array();
  for (const auto& r : outcome.dropped_neurons) {
    dropped.push_back({{"domain", r.domain_id},
                       {"identities", r.num_identities},
                       {"non_positive", r.non_positive},
                       {"top1_jstl", r.top1_jstl},
                       {"top1_jstl_dgd", r.top1_jstl_dgd},
                       {"relative_gain", r.relative_gain}});
  }
  return {{"seed", outcome.seed},
          {"top1", std::move(top1)},
          {"non_positive", std::move(non_positive)},
          {"finetune_temperature", std::move(temperatures)},
          {"dropped_neurons", std::move(dropped)},
          {"val_loss_before_dgd", optional_json(outcome.val_loss_before_dgd)},
          {"val_loss_after_dgd", optional_json(outcome.val_loss_after_dgd)}};
}

json aggregate_summaries(std::span<const json> summaries) {
  std::map<std::pair<int, int>, std::vector<double>> cells;
  json seeds = json::array();
  for (const auto& summary : summaries) {
    seeds.push_back(summary.at("seed"));
    for (const auto& row : summary.at("top1")) {
      const auto stage = stage_from_key(row.at("stage").get<std::string>());
      cells[{static_cast<int>(stage), row.at("domain").get<int>()}].push_back(
          row.at("top1").get<double>());
    }
  }
  json rows = json::array();
  for (const auto& [key, values] : cells) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd =
        values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    const auto stage = static_cast<StageKind>(key.first);
    rows.push_back({{"stage", stage_key(stage)},
                    {"label", stage_label(stage)},
                    {"domain", key.second},
                    {"mean", mean},
                    {"std", sd},
                    {"values", values}});
  }
  return {{"seeds", std::move(seeds)}, {"rows", std::move(rows)}};
}

void write_summary_table_csv(const fs::path& path, const json& aggregate) {
  auto out = open_csv(path);
  out << "stage,label,domain,mean,std,seeds\n";
  for (const auto& row : aggregate.at("rows")) {
    out << fmt::format("{},{},{},{},{},{}\n", row.at("stage").get<std::string>(),
                       row.at("label").get<std::string>(), row.at("domain").get<int>(),
                       row.at("mean").get<double>(), row.at("std").get<double>(),
                       row.at("values").size());
  }
}

std::string format_summary_table(const json& aggregate) {
  std::set<int> domains;
  std::vector<std::string> labels;
  std::map<std::pair<std::string, int>, std::string> cells;
  for (const auto& row : aggregate.at("rows")) {
    const auto label = row.at("label").get<std::string>();
    if (labels.empty() || labels.back() != label) labels.push_back(label);
    const int d = row.at("domain").get<int>();
    domains.insert(d);
    cells[{label, d}] = fmt::format("{:.2f}±{:.2f}", 100.0 * row.at("mean").get<double>(),
                                    100.0 * row.at("std").get<double>());
  }
  std::string text = fmt::format("{:<14}", "method");
  for (int d : domains) text += fmt::format("{:>16}", fmt::format("domain {}", d));
  text += '\n';
  for (const auto& label : labels) {
    text += fmt::format("{:<14}", label);
    for (int d : domains) {
      auto it = cells.find({label, d});
      // Column width counts bytes, and the plus-minus sign takes two.
      text += it == cells.end() ? fmt::format("{:>16}", "-")
                                : fmt::format("{:>17}", it->second);
    }
    text += '\n';
  }
  return text;
}

}  // namespace dgd
