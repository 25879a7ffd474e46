// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgd/checkpoint.hpp"
#include "dgd/data.hpp"
#include "dgd/dropout.hpp"
#include "dgd/impact.hpp"
#include "dgd/reid.hpp"
#include "dgd/schedule.hpp"

namespace dgd {

/// Stages in the order results are tabulated.
enum class StageKind { Individual, Jstl, JstlDgd, FtJstl, FtJstlDgd };

enum class Objective { SingleTask, MultiTask };

std::string stage_key(StageKind stage);    // "jstl_dgd"
std::string stage_label(StageKind stage);  // "JSTL+DGD"
StageKind stage_from_key(const std::string& key);
bool is_finetune(StageKind stage);

/// Dropout as configured, before any impact scores exist.
struct DropoutSpec {
  enum class Kind { Standard, DeterministicDgd, StochasticDgd };
  Kind kind = Kind::Standard;
  double rate = 0.5;
  std::optional<double> temperature;  // empty: select from the scores
  double target_max_keep = 0.9;
};

struct StageConfig {
  StageKind stage = StageKind::Jstl;
  Objective objective = Objective::SingleTask;
  Schedule schedule = StepDecay{};
  DropoutSpec dropout;
  std::optional<int> target_domain;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// DGD stages: recompute impact scores every N epochs (0 keeps them frozen).
  std::size_t recompute_interval = 0;
  ImpactMethod impact_method = ImpactMethod::Taylor;
  /// Stop when validation loss has not improved for this many epochs.
  std::optional<std::size_t> early_stop_patience;

  static StageConfig defaults(StageKind stage);
  /// Throws ConfigError when the stage/objective/domain combination is invalid.
  void validate() const;
};

struct EncoderConfig {
  std::vector<std::size_t> hidden = {128};
  std::size_t feature_dim = 64;

  std::vector<std::size_t> widths() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;  // empty without validation samples
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
};

/// Sample paired with the head that scores it and its zero-based class.
struct RoutedSample {
  const Sample* sample = nullptr;
  std::size_t head = 0;
  std::size_t label = 0;
};

/// Dropout policy per domain id.
using PolicyMap = std::map<int, DropoutPolicy>;

struct StageResult {
  TrainedModel model;
  PolicyMap test_policies;
  TrainingLog log;
};

struct BatchGradients {
  std::vector<LayerGradient> encoder;
  std::vector<LayerGradient> heads;
  double loss_sum = 0.0;
};

/// Summed gradients over `batch`; masks[k] gates sample k (nullptr entries
/// run unmasked).
BatchGradients batch_gradients(const TrainedModel& model,
                               std::span<const RoutedSample> batch,
                               std::span<const Mask* const> masks);

/// Mini-batch momentum SGD over uniformly shuffled samples. Masks are drawn
/// per sample from `train_policies` keyed by the sample's domain.
/// Called after every epoch; may replace the policies used from the next
/// epoch on.
using EpochHook =
    std::function<void(std::size_t epoch, const TrainedModel&, PolicyMap&)>;

TrainingLog train_loop(TrainedModel& model,
                       std::span<const RoutedSample> train,
                       std::span<const RoutedSample> val,
                       PolicyMap train_policies, const StageConfig& cfg,
                       const EpochHook& on_epoch_end = {});

TrainedModel init_model(std::size_t input_dim, const EncoderConfig& encoder,
                        const std::vector<std::size_t>& head_classes,
                        std::uint64_t seed);

/// One merged softmax head over all domains (single-task objective).
StageResult train_jstl(const MergedDataset& train, std::span<const Sample> val,
                       const EncoderConfig& encoder, const StageConfig& cfg);

/// Shared encoder with one head per domain, each sample routed to its own
/// domain's head with its local label.
StageResult train_multitask(const MergedDataset& train,
                            std::span<const Sample> val,
                            const EncoderConfig& encoder,
                            const StageConfig& cfg);

/// Trains from scratch on one domain's identities.
StageResult train_individual(std::span<const Sample> domain_train,
                             std::span<const Sample> domain_val,
                             const EncoderConfig& encoder,
                             const StageConfig& cfg);

/// Continues a single-task model with per-domain guided dropout.
StageResult resume_with_dgd(const TrainedModel& pretrained,
                            const MergedDataset& train,
                            std::span<const Sample> val,
                            const std::map<int, ImpactScores>& impact,
                            const StageConfig& cfg);

/// Warm-starts the encoder, attaches a fresh head over the target domain's
/// identities and trains on that domain alone. `impact` is required for
/// guided-dropout policies.
StageResult finetune_on_domain(const EncoderModel& encoder,
                               std::span<const Sample> domain_train,
                               std::span<const Sample> domain_val,
                               const ImpactScores* impact,
                               const StageConfig& cfg);

/// Mean cross-entropy over `samples` under the test-time policy of each
/// sample's domain.
double evaluate_loss(const TrainedModel& model,
                     std::span<const RoutedSample> samples,
                     const PolicyMap& policies);

/// Resolves a configured dropout into a concrete policy for one domain.
DropoutPolicy resolve_policy(const DropoutSpec& spec, const ImpactScores* impact);

struct ExperimentConfig {
  std::string name = "experiment";
  WorldSpec world;
  std::vector<DomainSpec> domains;
  double val_fraction = 0.2;
  EncoderConfig encoder;
  std::vector<StageConfig> stages;
  std::vector<std::uint64_t> seeds = {1};
  ImpactMethod impact_method = ImpactMethod::Taylor;
  bool impact_on_validation = false;
  std::size_t max_rank = 20;
  bool l2_normalize = false;
  /// Score the JSTL+DGD model again before stochastic fine-tuning.
  bool rescore_before_finetune = true;

  const StageConfig* stage(StageKind kind) const;
  void validate() const;
};

/// Everything a seed's pipeline consumes, generated from (config, seed).
struct ExperimentData {
  std::vector<DomainData> domains;
  MergedDataset train;
  std::vector<Sample> val;
  std::map<int, ProbeGallery> protocol;
};

ExperimentData build_experiment_data(const ExperimentConfig& config,
                                     std::uint64_t seed);

struct DomainCmc {
  int domain_id = 0;
  CmcCurve curve;
};

struct StageReport {
  StageKind stage = StageKind::Jstl;
  std::optional<int> target_domain;
  std::vector<EpochRecord> epochs;
  std::vector<DomainCmc> cmc;
  std::string impact_ref;
  std::string checkpoint_ref;
  double wall_clock_seconds = 0.0;

  const CmcCurve* cmc_for(int domain_id) const;
};

/// Per-domain row of the gain-vs-dropped-neurons diagnostic.
struct DroppedNeuronRow {
  int domain_id = 0;
  std::size_t num_identities = 0;
  std::size_t non_positive = 0;
  double top1_jstl = 0.0;
  double top1_jstl_dgd = 0.0;
  double relative_gain = 0.0;
};

struct PipelineOutcome {
  std::uint64_t seed = 0;
  std::vector<StageReport> reports;
  std::map<int, ImpactScores> jstl_impact;
  std::map<int, ImpactScores> finetune_impact;
  std::map<int, double> finetune_temperature;
  std::vector<DroppedNeuronRow> dropped_neurons;
  std::optional<double> val_loss_before_dgd;
  std::optional<double> val_loss_after_dgd;
};

struct PipelineOptions {
  /// Per-seed output directory; nothing is written when empty.
  std::filesystem::path out_dir;
  /// Stage subset; empty runs every configured stage.
  std::vector<StageKind> only_stages;
  std::size_t jobs = 1;
};

/// Individual -> JSTL -> impact scoring -> JSTL+DGD -> per-domain FT-JSTL and
/// FT-JSTL+DGD. Stages whose prerequisite was filtered out are loaded from
/// checkpoints under out_dir when present.
PipelineOutcome run_full_pipeline(const ExperimentConfig& config,
                                  std::uint64_t seed,
                                  const PipelineOptions& options = {});

nlohmann::json report_to_json(const StageReport& report);

}  // namespace dgd
