// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "dgd/errors.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/report.hpp"
#include "dgd/rng.hpp"

namespace dgd {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStageSeedTag = 0x3001;

std::uint64_t stage_seed(std::uint64_t run_seed, const StageConfig& cfg,
                         std::optional<int> domain) {
  return derive_seed(run_seed,
                     {kStageSeedTag, static_cast<std::uint64_t>(cfg.stage), cfg.seed,
                      static_cast<std::uint64_t>(domain.value_or(0))});
}

std::string artifact_name(StageKind stage, std::optional<int> domain) {
  return domain ? fmt::format("{}_domain{}", stage_key(stage), *domain)
                : stage_key(stage);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<Sample> domain_only(std::span<const Sample> samples, int domain_id) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.domain_id == domain_id) out.push_back(s);
  }
  return out;
}

class SeedRun {
 public:
  SeedRun(const ExperimentConfig& config, std::uint64_t seed,
          const PipelineOptions& options)
      : config_(config), seed_(seed), options_(options),
        data_(build_experiment_data(config, seed)) {
    outcome_.seed = seed;
  }

  PipelineOutcome run();

 private:
  bool selected(StageKind kind) const {
    if (config_.stage(kind) == nullptr) return false;
    if (options_.only_stages.empty()) return true;
    return std::find(options_.only_stages.begin(), options_.only_stages.end(), kind) !=
           options_.only_stages.end();
  }

  bool writing() const { return !options_.out_dir.empty(); }
  fs::path path(const std::string& rel) const { return options_.out_dir / rel; }

  std::vector<int> finetune_domains(const StageConfig& cfg) const {
    if (cfg.target_domain) return {*cfg.target_domain};
    std::vector<int> ids;
    for (const auto& d : config_.domains) ids.push_back(d.domain_id);
    return ids;
  }

  std::vector<DomainCmc> evaluate(const TrainedModel& model, const PolicyMap& policies,
                                  std::span<const int> domains) const;
  std::optional<TrainedModel> obtain(StageKind kind, const std::string& name) const;
  void record(StageReport report, const TrainedModel& model,
              const std::vector<DomainCmc>& extra = {});
  std::map<int, ImpactScores> score_domains(const TrainedModel& model,
                                            const std::string& tag);

  TrainedModel run_jstl(bool train);
  TrainedModel run_jstl_dgd(const TrainedModel& jstl);
  void run_individual();
  void run_finetune(StageKind kind, const TrainedModel& base);
  void write_diagnostics();

  const ExperimentConfig& config_;
  std::uint64_t seed_;
  PipelineOptions options_;
  ExperimentData data_;
  PipelineOutcome outcome_;
  std::map<int, double> jstl_top1_;
  std::map<int, double> jstl_dgd_top1_;
};

std::vector<DomainCmc> SeedRun::evaluate(const TrainedModel& model,
                                         const PolicyMap& policies,
                                         std::span<const int> domains) const {
  std::vector<DomainCmc> out;
  for (int d : domains) {
    auto it = data_.protocol.find(d);
    if (it == data_.protocol.end() || it->second.gallery.empty()) continue;
    auto pit = policies.find(d);
    const DropoutPolicy policy = pit == policies.end() ? DropoutPolicy{StandardDropout{}}
                                                       : pit->second;
    const auto probes =
        extract_features(model.encoder, policy, it->second.probes, config_.l2_normalize);
    const auto gallery =
        extract_features(model.encoder, policy, it->second.gallery, config_.l2_normalize);
    const auto rank = std::min(config_.max_rank, gallery.rows);
    out.push_back({d, cmc(probes, gallery, rank)});
  }
  return out;
}

std::optional<TrainedModel> SeedRun::obtain(StageKind kind,
                                            const std::string& name) const {
  if (!writing()) return std::nullopt;
  const auto file = path("checkpoints/" + name + ".json");
  if (!fs::exists(file)) return std::nullopt;
  spdlog::info("seed {}: loading {} from {}", seed_, stage_key(kind), file.string());
  return load_checkpoint(file);
}

void SeedRun::record(StageReport report, const TrainedModel& model,
                     const std::vector<DomainCmc>&) {
  const auto name = artifact_name(report.stage, report.target_domain);
  if (writing()) {
    report.checkpoint_ref = "checkpoints/" + name + ".json";
    save_checkpoint(path(report.checkpoint_ref), model);
    write_json(path("reports/" + name + ".json"), report_to_json(report));
    for (const auto& entry : report.cmc) {
      write_cmc_csv(path(fmt::format("curves/cmc_{}_domain{}.csv",
                                     stage_key(report.stage), entry.domain_id)),
                    entry.curve);
    }
  }
  for (const auto& entry : report.cmc) {
    spdlog::info("seed {}: {:<12} domain {} top-1 {:.4f}", seed_,
                 stage_label(report.stage), entry.domain_id, entry.curve.top1());
  }
  outcome_.reports.push_back(std::move(report));
}

std::map<int, ImpactScores> SeedRun::score_domains(const TrainedModel& model,
                                                   const std::string& tag) {
  std::map<int, ImpactScores> scores;
  for (int d : data_.train.domain_order) {
    const auto samples = config_.impact_on_validation ? domain_only(data_.val, d)
                                                      : data_.train.domain_samples(d);
    if (samples.empty()) {
      throw ConfigError(fmt::format("domain {} has no samples to score impact on", d));
    }
    scores.emplace(d, average_impact(model.encoder, model.head(), samples,
                                     config_.impact_method, LabelSpace::Merged,
                                     options_.jobs));
    if (writing()) {
      write_json(path(fmt::format("impact/{}_domain{}.json", tag, d)),
                 impact_to_json(scores.at(d)));
    }
  }
  return scores;
}

TrainedModel SeedRun::run_jstl(bool train) {
  const StageConfig* base = config_.stage(StageKind::Jstl);
  TrainedModel model;
  StageReport report;
  report.stage = StageKind::Jstl;
  Stopwatch clock;
  if (train) {
    StageConfig cfg = *base;
    cfg.seed = stage_seed(seed_, *base, std::nullopt);
    auto result = cfg.objective == Objective::MultiTask
                      ? train_multitask(data_.train, data_.val, config_.encoder, cfg)
                      : train_jstl(data_.train, data_.val, config_.encoder, cfg);
    model = std::move(result.model);
    report.epochs = std::move(result.log.epochs);
  } else {
    auto loaded = obtain(StageKind::Jstl, "jstl");
    if (!loaded) {
      throw ConfigError("downstream stages need the jstl stage or its checkpoint");
    }
    model = std::move(*loaded);
  }
  std::vector<int> domains = data_.train.domain_order;
  report.cmc = evaluate(model, {}, domains);
  for (const auto& entry : report.cmc) jstl_top1_[entry.domain_id] = entry.curve.top1();
  report.wall_clock_seconds = clock.seconds();
  if (train) record(std::move(report), model);
  return model;
}

TrainedModel SeedRun::run_jstl_dgd(const TrainedModel& jstl) {
  if (jstl.heads.size() != 1) {
    throw ConfigError("guided dropout stages need a single-task jstl model");
  }
  const StageConfig* base = config_.stage(StageKind::JstlDgd);
  outcome_.jstl_impact = score_domains(jstl, "jstl");
  std::vector<RoutedSample> routed_val;
  for (const auto& s : data_.val) {
    routed_val.push_back({&s, 0, static_cast<std::size_t>(s.merged_label - 1)});
  }
  if (!routed_val.empty()) outcome_.val_loss_before_dgd = evaluate_loss(jstl, routed_val, {});

  Stopwatch clock;
  StageConfig cfg = *base;
  cfg.seed = stage_seed(seed_, *base, std::nullopt);
  auto result = resume_with_dgd(jstl, data_.train, data_.val, outcome_.jstl_impact, cfg);
  if (!routed_val.empty()) {
    outcome_.val_loss_after_dgd = evaluate_loss(result.model, routed_val,
                                                result.test_policies);
  }
  StageReport report;
  report.stage = StageKind::JstlDgd;
  report.epochs = std::move(result.log.epochs);
  report.impact_ref = "impact/jstl_domain*.json";
  std::vector<int> domains = data_.train.domain_order;
  report.cmc = evaluate(result.model, result.test_policies, domains);
  for (const auto& entry : report.cmc) jstl_dgd_top1_[entry.domain_id] = entry.curve.top1();
  report.wall_clock_seconds = clock.seconds();
  record(std::move(report), result.model);
  return std::move(result.model);
}

void SeedRun::run_individual() {
  const StageConfig* base = config_.stage(StageKind::Individual);
  for (const auto& spec : config_.domains) {
    const int d = spec.domain_id;
    Stopwatch clock;
    StageConfig cfg = *base;
    cfg.target_domain = d;
    cfg.seed = stage_seed(seed_, *base, d);
    const auto train = data_.train.domain_samples(d);
    const auto val = domain_only(data_.val, d);
    auto result = train_individual(train, val, config_.encoder, cfg);
    StageReport report;
    report.stage = StageKind::Individual;
    report.target_domain = d;
    report.epochs = std::move(result.log.epochs);
    const int domains[] = {d};
    report.cmc = evaluate(result.model, result.test_policies, domains);
    report.wall_clock_seconds = clock.seconds();
    record(std::move(report), result.model);
  }
}

void SeedRun::run_finetune(StageKind kind, const TrainedModel& base_model) {
  const StageConfig* base = config_.stage(kind);
  const bool guided = base->dropout.kind != DropoutSpec::Kind::Standard;
  std::map<int, ImpactScores> impact;
  if (guided) {
    impact = config_.rescore_before_finetune || outcome_.jstl_impact.empty()
                 ? score_domains(base_model, "jstl_dgd")
                 : outcome_.jstl_impact;
    outcome_.finetune_impact = impact;
  }
  for (int d : finetune_domains(*base)) {
    Stopwatch clock;
    StageConfig cfg = *base;
    cfg.target_domain = d;
    cfg.seed = stage_seed(seed_, *base, d);
    const auto train = data_.train.domain_samples(d);
    const auto val = domain_only(data_.val, d);
    const ImpactScores* scores = guided ? &impact.at(d) : nullptr;
    auto result = finetune_on_domain(base_model.encoder, train, val, scores, cfg);
    if (const auto* sto = std::get_if<StochasticDgd>(&result.test_policies.at(d))) {
      outcome_.finetune_temperature[d] = sto->temperature;
      if (writing()) {
        write_keep_histogram_csv(
            path(fmt::format("diagnostics/keep_histogram_domain{}.csv", d)),
            cumulative_keep_histogram(sto->scores.scores.values(), sto->temperature),
            sto->temperature);
      }
    }
    StageReport report;
    report.stage = kind;
    report.target_domain = d;
    report.epochs = std::move(result.log.epochs);
    if (guided) report.impact_ref = fmt::format("impact/jstl_dgd_domain{}.json", d);
    const int domains[] = {d};
    report.cmc = evaluate(result.model, result.test_policies, domains);
    report.wall_clock_seconds = clock.seconds();
    record(std::move(report), result.model);
  }
}

void SeedRun::write_diagnostics() {
  const auto& impact = outcome_.jstl_impact;
  if (impact.empty()) return;
  for (const auto& spec : config_.domains) {
    const int d = spec.domain_id;
    if (!impact.count(d)) continue;
    DroppedNeuronRow row;
    row.domain_id = d;
    row.num_identities = spec.num_identities;
    row.non_positive = impact.at(d).non_positive_count();
    if (jstl_top1_.count(d) && jstl_dgd_top1_.count(d)) {
      row.top1_jstl = jstl_top1_.at(d);
      row.top1_jstl_dgd = jstl_dgd_top1_.at(d);
      row.relative_gain = row.top1_jstl > 0.0
                              ? (row.top1_jstl_dgd - row.top1_jstl) / row.top1_jstl
                              : 0.0;
    }
    outcome_.dropped_neurons.push_back(row);
  }
  if (!writing()) return;
  write_dropped_neurons_csv(path("diagnostics/gain_vs_dropped.csv"),
                            outcome_.dropped_neurons);
  std::vector<std::pair<const ImpactScores*, const ImpactScores*>> pairs;
  for (auto a = impact.begin(); a != impact.end(); ++a) {
    for (auto b = std::next(a); b != impact.end(); ++b) {
      pairs.emplace_back(&a->second, &b->second);
    }
  }
  write_correlation_csvs(options_.out_dir, pairs);
}

PipelineOutcome SeedRun::run() {
  const bool want_individual = selected(StageKind::Individual);
  const bool want_jstl = selected(StageKind::Jstl);
  const bool want_dgd = selected(StageKind::JstlDgd);
  const bool want_ft = selected(StageKind::FtJstl);
  const bool want_ft_dgd = selected(StageKind::FtJstlDgd);

  if (want_individual) run_individual();

  std::optional<TrainedModel> jstl;
  const bool need_jstl = want_jstl || want_dgd || want_ft ||
                         (want_ft_dgd && !obtain(StageKind::JstlDgd, "jstl_dgd"));
  if (need_jstl) jstl = run_jstl(want_jstl);

  std::optional<TrainedModel> jstl_dgd;
  if (want_dgd) {
    jstl_dgd = run_jstl_dgd(*jstl);
  } else if (want_ft_dgd) {
    jstl_dgd = obtain(StageKind::JstlDgd, "jstl_dgd");
    if (!jstl_dgd) {
      throw ConfigError("ft_jstl_dgd needs the jstl_dgd stage or its checkpoint");
    }
  }
  if (jstl && jstl->heads.size() == 1 && outcome_.jstl_impact.empty() &&
      config_.stage(StageKind::JstlDgd) != nullptr) {
    outcome_.jstl_impact = score_domains(*jstl, "jstl");
  }

  if (want_ft) run_finetune(StageKind::FtJstl, *jstl);
  if (want_ft_dgd) run_finetune(StageKind::FtJstlDgd, *jstl_dgd);

  write_diagnostics();
  if (writing()) write_json(path("summary.json"), seed_summary(outcome_));
  return std::move(outcome_);
}

}  // namespace

PipelineOutcome run_full_pipeline(const ExperimentConfig& config, std::uint64_t seed,
                                  const PipelineOptions& options) {
  config.validate();
  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
  SeedRun run(config, seed, options);
  return run.run();
}

}  // namespace dgd
