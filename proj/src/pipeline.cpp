// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dgd/errors.hpp"
#include "dgd/rng.hpp"

namespace dgd {

namespace {

// Tags keep the derived random streams of different consumers apart.
constexpr std::uint64_t kInitTag = 0x1001;
constexpr std::uint64_t kShuffleTag = 0x1002;
constexpr std::uint64_t kMaskTag = 0x1003;
constexpr std::uint64_t kHeadTag = 0x1004;
constexpr std::uint64_t kWorldTag = 0x2001;
constexpr std::uint64_t kDomainTag = 0x2002;
constexpr std::uint64_t kSplitTag = 0x2003;
constexpr std::uint64_t kProtocolTag = 0x2004;
constexpr std::uint64_t kStageTag = 0x3001;

}  // namespace

std::string stage_key(StageKind stage) {
  switch (stage) {
    case StageKind::Individual: return "individual";
    case StageKind::Jstl: return "jstl";
    case StageKind::JstlDgd: return "jstl_dgd";
    case StageKind::FtJstl: return "ft_jstl";
    case StageKind::FtJstlDgd: return "ft_jstl_dgd";
  }
  return "unknown";
}

std::string stage_label(StageKind stage) {
  switch (stage) {
    case StageKind::Individual: return "Individually";
    case StageKind::Jstl: return "JSTL";
    case StageKind::JstlDgd: return "JSTL+DGD";
    case StageKind::FtJstl: return "FT-JSTL";
    case StageKind::FtJstlDgd: return "FT-JSTL+DGD";
  }
  return "unknown";
}

StageKind stage_from_key(const std::string& key) {
  for (auto kind : {StageKind::Individual, StageKind::Jstl, StageKind::JstlDgd,
                    StageKind::FtJstl, StageKind::FtJstlDgd}) {
    if (stage_key(kind) == key) return kind;
  }
  throw ConfigError(fmt::format(
      "unknown stage '{}' (expected individual, jstl, jstl_dgd, ft_jstl, "
      "ft_jstl_dgd)",
      key));
}

bool is_finetune(StageKind stage) {
  return stage == StageKind::FtJstl || stage == StageKind::FtJstlDgd;
}

StageConfig StageConfig::defaults(StageKind stage) {
  StageConfig cfg;
  cfg.stage = stage;
  switch (stage) {
    case StageKind::Individual:
    case StageKind::Jstl:
      cfg.schedule = StepDecay{};
      cfg.epochs = 100;
      break;
    case StageKind::JstlDgd:
      cfg.schedule = PolyDecay{};
      cfg.dropout.kind = DropoutSpec::Kind::DeterministicDgd;
      cfg.epochs = 10;
      break;
    case StageKind::FtJstl:
      cfg.schedule = PolyDecay{};
      cfg.epochs = 10;
      break;
    case StageKind::FtJstlDgd:
      cfg.schedule = PolyDecay{};
      cfg.dropout.kind = DropoutSpec::Kind::StochasticDgd;
      cfg.epochs = 10;
      break;
  }
  return cfg;
}

void StageConfig::validate() const {
  const auto key = stage_key(stage);
  if (is_finetune(stage)) {
    if (!target_domain) {
      throw ConfigError(fmt::format("stage {} requires target_domain", key));
    }
  } else if ((stage == StageKind::Jstl || stage == StageKind::JstlDgd) &&
             target_domain) {
    throw ConfigError(fmt::format("stage {} must not set target_domain", key));
  }
  if (objective == Objective::MultiTask && stage != StageKind::Jstl) {
    throw ConfigError(fmt::format(
        "stage {}: the multi-task objective is only available for jstl", key));
  }
  if (epochs == 0) throw ConfigError(fmt::format("stage {}: epochs must be > 0", key));
  if (batch_size == 0) {
    throw ConfigError(fmt::format("stage {}: batch_size must be > 0", key));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError(fmt::format("stage {}: momentum must lie in [0, 1)", key));
  }
  if (!(weight_decay >= 0.0)) {
    throw ConfigError(fmt::format("stage {}: weight_decay must be >= 0", key));
  }
  if (dropout.kind == DropoutSpec::Kind::Standard &&
      !(dropout.rate > 0.0 && dropout.rate < 1.0)) {
    throw ConfigError(fmt::format("stage {}: dropout rate must lie in (0, 1)", key));
  }
  if (dropout.kind == DropoutSpec::Kind::StochasticDgd) {
    if (dropout.temperature && !(*dropout.temperature > 0.0)) {
      throw ConfigError(fmt::format("stage {}: temperature must be > 0", key));
    }
    if (!(dropout.target_max_keep > 0.5 && dropout.target_max_keep < 1.0)) {
      throw ConfigError(
          fmt::format("stage {}: target_max_keep must lie in (0.5, 1)", key));
    }
  }
  const bool guided = dropout.kind != DropoutSpec::Kind::Standard;
  if (guided && (stage == StageKind::Individual || stage == StageKind::Jstl ||
                 stage == StageKind::FtJstl)) {
    throw ConfigError(fmt::format(
        "stage {} has no impact scores to guide dropout; use standard", key));
  }
}

std::vector<std::size_t> EncoderConfig::widths() const {
  auto w = hidden;
  w.push_back(feature_dim);
  return w;
}

TrainedModel init_model(std::size_t input_dim, const EncoderConfig& encoder,
                        const std::vector<std::size_t>& head_classes,
                        std::uint64_t seed) {
  Rng rng(seed);
  TrainedModel model;
  model.encoder = make_encoder(input_dim, encoder.widths(), rng);
  for (auto classes : head_classes) {
    model.heads.push_back(make_head(encoder.feature_dim, classes, rng));
  }
  return model;
}

namespace {

std::vector<RoutedSample> route_merged(std::span<const Sample> samples) {
  std::vector<RoutedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.merged_label < 1) {
      throw ArgumentError(fmt::format(
          "sample of domain {} has no merged label", s.domain_id));
    }
    out.push_back({&s, 0, static_cast<std::size_t>(s.merged_label - 1)});
  }
  return out;
}

std::vector<RoutedSample> route_local(std::span<const Sample> samples,
                                      const std::map<int, std::size_t>& head_of) {
  std::vector<RoutedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto it = head_of.find(s.domain_id);
    if (it == head_of.end()) {
      throw ConfigError(fmt::format("no head for domain {}", s.domain_id));
    }
    out.push_back({&s, it->second, static_cast<std::size_t>(s.local_label - 1)});
  }
  return out;
}

std::vector<ParamSlot> bind_slots(TrainedModel& model,
                                  std::vector<LayerGradient>& encoder_grads,
                                  std::vector<LayerGradient>& head_grads) {
  std::vector<ParamSlot> slots;
  for (std::size_t k = 0; k < model.encoder.layers.size(); ++k) {
    slots.push_back({fmt::format("encoder.{}.weights", k),
                     &model.encoder.layers[k].weights, &encoder_grads[k].weights});
    slots.push_back({fmt::format("encoder.{}.bias", k),
                     &model.encoder.layers[k].bias, &encoder_grads[k].bias});
  }
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    slots.push_back({fmt::format("head.{}.weights", h), &model.heads[h].weights,
                     &head_grads[h].weights});
    slots.push_back({fmt::format("head.{}.bias", h), &model.heads[h].bias,
                     &head_grads[h].bias});
  }
  return slots;
}

std::vector<LayerGradient> zero_head_gradients(const TrainedModel& model) {
  std::vector<LayerGradient> grads;
  for (const auto& head : model.heads) grads.push_back(zero_gradient(head));
  return grads;
}

void clear(std::vector<LayerGradient>& grads) {
  for (auto& g : grads) {
    g.weights.fill(0.0);
    g.bias.fill(0.0);
  }
}

void scale_gradients(std::vector<LayerGradient>& grads, double factor) {
  for (auto& g : grads) {
    for (auto& v : g.weights.storage()) v *= factor;
    for (auto& v : g.bias.storage()) v *= factor;
  }
}

void add_decay(Tensor& grad, const Tensor& param, double decay) {
  auto& g = grad.storage();
  const auto& p = param.storage();
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += decay * p[j];
}

const DropoutPolicy* find_policy(const PolicyMap& policies, int domain_id) {
  if (policies.empty()) return nullptr;
  auto it = policies.find(domain_id);
  if (it == policies.end()) {
    throw ConfigError(fmt::format("no dropout policy for domain {}", domain_id));
  }
  return &it->second;
}

}  // namespace

BatchGradients batch_gradients(const TrainedModel& model,
                               std::span<const RoutedSample> batch,
                               std::span<const Mask* const> masks) {
  if (masks.size() != batch.size()) {
    throw DimensionError("one mask slot per batch sample is required");
  }
  BatchGradients out;
  out.encoder = zero_gradients(model.encoder);
  out.heads = zero_head_gradients(model);
  Backprop pass;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& r = batch[k];
    out.loss_sum += pass.accumulate(model.encoder, model.heads.at(r.head),
                                    r.sample->features.values(), r.label,
                                    masks[k], out.encoder, out.heads[r.head]);
  }
  return out;
}

double evaluate_loss(const TrainedModel& model,
                     std::span<const RoutedSample> samples,
                     const PolicyMap& policies) {
  if (samples.empty()) throw ArgumentError("no samples to evaluate");
  double total = 0.0;
  for (const auto& r : samples) {
    Tensor g = encode(model.encoder, r.sample->features);
    if (const auto* policy = find_policy(policies, r.sample->domain_id)) {
      apply_test_scaling_inplace(*policy, g.values());
    }
    total += head_loss(model.heads.at(r.head), g.values(), r.label);
  }
  return total / static_cast<double>(samples.size());
}

TrainingLog train_loop(TrainedModel& model, std::span<const RoutedSample> train,
                       std::span<const RoutedSample> val,
                       PolicyMap train_policies, const StageConfig& cfg,
                       const EpochHook& on_epoch_end) {
  if (train.empty()) throw ArgumentError("no training samples");
  model.encoder.validate();
  const std::size_t d = model.encoder.feature_dim();
  const std::size_t n = train.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_iter = cfg.epochs * batches;

  auto encoder_grads = zero_gradients(model.encoder);
  auto head_grads = zero_head_gradients(model);
  const auto slots = bind_slots(model, encoder_grads, head_grads);
  SgdMomentum optimizer(cfg.momentum);
  Backprop pass;

  TrainingLog log;
  std::vector<std::size_t> order(n);
  std::optional<double> best_val;
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {kShuffleTag, epoch}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    double last_lr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      clear(encoder_grads);
      clear(head_grads);
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        const auto& r = train[i];
        std::optional<Mask> mask;
        if (const auto* policy = find_policy(train_policies, r.sample->domain_id)) {
          Rng mask_rng(derive_seed(cfg.seed, {kMaskTag, epoch, i}));
          mask = draw_train_mask(*policy, d, mask_rng);
        }
        const double loss = pass.accumulate(
            model.encoder, model.heads[r.head], r.sample->features.values(),
            r.label, mask ? &*mask : nullptr, encoder_grads, head_grads[r.head]);
        if (!std::isfinite(loss)) {
          throw TrainingError(fmt::format(
              "{}: non-finite loss at epoch {}, batch {} (sample of domain {})",
              stage_key(cfg.stage), epoch, b, r.sample->domain_id));
        }
        epoch_loss += loss;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      scale_gradients(encoder_grads, inv);
      scale_gradients(head_grads, inv);
      if (cfg.weight_decay > 0.0) {
        for (std::size_t k = 0; k < encoder_grads.size(); ++k) {
          add_decay(encoder_grads[k].weights, model.encoder.layers[k].weights,
                    cfg.weight_decay);
        }
        for (std::size_t h = 0; h < head_grads.size(); ++h) {
          add_decay(head_grads[h].weights, model.heads[h].weights, cfg.weight_decay);
        }
      }
      const std::size_t iter = epoch * batches + b;
      last_lr = std::holds_alternative<StepDecay>(cfg.schedule)
                    ? lr_step_decay(epoch, std::get<StepDecay>(cfg.schedule))
                    : lr_poly_decay(iter, total_iter, std::get<PolyDecay>(cfg.schedule));
      optimizer.step(slots, last_lr);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = last_lr;
    record.train_loss = epoch_loss / static_cast<double>(n);
    if (!val.empty()) {
      record.val_loss = evaluate_loss(model, val, train_policies);
      if (!std::isfinite(*record.val_loss)) {
        throw TrainingError(fmt::format("{}: non-finite validation loss at epoch {}",
                                        stage_key(cfg.stage), epoch));
      }
    }
    spdlog::debug("{} epoch {:3d} lr {:.6f} train {:.4f} val {}", stage_key(cfg.stage),
                  epoch, record.learning_rate, record.train_loss,
                  record.val_loss ? fmt::format("{:.4f}", *record.val_loss) : "-");
    log.epochs.push_back(record);

    if (on_epoch_end) on_epoch_end(epoch, model, train_policies);

    if (cfg.early_stop_patience && record.val_loss) {
      if (!best_val || *record.val_loss < *best_val) {
        best_val = record.val_loss;
        stale_epochs = 0;
      } else if (++stale_epochs >= *cfg.early_stop_patience) {
        spdlog::info("{}: early stop after epoch {}", stage_key(cfg.stage), epoch);
        break;
      }
    }
  }
  return log;
}

DropoutPolicy resolve_policy(const DropoutSpec& spec, const ImpactScores* impact) {
  switch (spec.kind) {
    case DropoutSpec::Kind::Standard:
      return StandardDropout{spec.rate};
    case DropoutSpec::Kind::DeterministicDgd:
      if (impact == nullptr) {
        throw ConfigError("deterministic guided dropout needs impact scores");
      }
      return DeterministicDgd{*impact};
    case DropoutSpec::Kind::StochasticDgd: {
      if (impact == nullptr) {
        throw ConfigError("stochastic guided dropout needs impact scores");
      }
      const double t = spec.temperature
                           ? *spec.temperature
                           : select_temperature(impact->scores.values(),
                                                spec.target_max_keep);
      return StochasticDgd{*impact, t};
    }
  }
  throw ConfigError("unknown dropout kind");
}

namespace {

PolicyMap uniform_policy(const DropoutPolicy& policy, std::span<const int> domains) {
  PolicyMap out;
  for (int d : domains) out.emplace(d, policy);
  return out;
}

std::size_t input_dim_of(std::span<const Sample> samples) {
  if (samples.empty()) throw ArgumentError("no samples");
  return samples.front().features.size();
}

std::vector<int> domains_of(std::span<const Sample> samples) {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.domain_id);
  return {ids.begin(), ids.end()};
}

}  // namespace

StageResult train_jstl(const MergedDataset& train, std::span<const Sample> val,
                       const EncoderConfig& encoder, const StageConfig& cfg) {
  if (cfg.objective != Objective::SingleTask) {
    throw ConfigError("train_jstl needs the single-task objective");
  }
  if (cfg.dropout.kind != DropoutSpec::Kind::Standard) {
    throw ConfigError("train_jstl uses standard dropout");
  }
  StageResult result;
  result.model = init_model(input_dim_of(train.samples), encoder,
                            {train.total_classes}, derive_seed(cfg.seed, {kInitTag}));
  const auto routed_train = route_merged(train.samples);
  const auto routed_val = route_merged(val);
  result.test_policies = uniform_policy(resolve_policy(cfg.dropout, nullptr),
                                        train.domain_order);
  result.log = train_loop(result.model, routed_train, routed_val,
                          result.test_policies, cfg);
  return result;
}

StageResult train_multitask(const MergedDataset& train, std::span<const Sample> val,
                            const EncoderConfig& encoder, const StageConfig& cfg) {
  if (cfg.objective != Objective::MultiTask) {
    throw ConfigError("train_multitask needs the multi-task objective");
  }
  std::map<int, std::size_t> head_of;
  std::vector<std::size_t> classes;
  for (int d : train.domain_order) {
    head_of[d] = classes.size();
    classes.push_back(train.identities.at(d));
  }
  StageResult result;
  result.model = init_model(input_dim_of(train.samples), encoder, classes,
                            derive_seed(cfg.seed, {kInitTag}));
  const auto routed_train = route_local(train.samples, head_of);
  const auto routed_val = route_local(val, head_of);
  result.test_policies = uniform_policy(resolve_policy(cfg.dropout, nullptr),
                                        train.domain_order);
  result.log = train_loop(result.model, routed_train, routed_val,
                          result.test_policies, cfg);
  return result;
}

StageResult train_individual(std::span<const Sample> domain_train,
                             std::span<const Sample> domain_val,
                             const EncoderConfig& encoder, const StageConfig& cfg) {
  const auto domains = domains_of(domain_train);
  if (domains.size() != 1) {
    throw ConfigError("individual training needs samples of exactly one domain");
  }
  int max_label = 0;
  for (const auto& s : domain_train) max_label = std::max(max_label, s.local_label);
  StageResult result;
  result.model = init_model(input_dim_of(domain_train), encoder,
                            {static_cast<std::size_t>(max_label)},
                            derive_seed(cfg.seed, {kInitTag}));
  const std::map<int, std::size_t> head_of{{domains.front(), 0}};
  const auto routed_train = route_local(domain_train, head_of);
  const auto routed_val = route_local(domain_val, head_of);
  result.test_policies = uniform_policy(resolve_policy(cfg.dropout, nullptr), domains);
  result.log = train_loop(result.model, routed_train, routed_val,
                          result.test_policies, cfg);
  return result;
}

StageResult resume_with_dgd(const TrainedModel& pretrained,
                            const MergedDataset& train, std::span<const Sample> val,
                            const std::map<int, ImpactScores>& impact,
                            const StageConfig& cfg) {
  if (pretrained.heads.size() != 1 ||
      pretrained.head().num_classes() != train.total_classes) {
    throw ConfigError("resume_with_dgd expects a single merged-label head");
  }
  PolicyMap policies;
  for (int d : train.domain_order) {
    auto it = impact.find(d);
    if (it == impact.end()) {
      throw ConfigError(fmt::format("missing impact scores for domain {}", d));
    }
    if (it->second.dim() != pretrained.encoder.feature_dim()) {
      throw ConfigError(fmt::format("impact scores for domain {} have {} entries, "
                                    "features have {}",
                                    d, it->second.dim(),
                                    pretrained.encoder.feature_dim()));
    }
    policies.emplace(d, resolve_policy(cfg.dropout, &it->second));
  }

  StageResult result;
  result.model = pretrained;
  const auto routed_train = route_merged(train.samples);
  const auto routed_val = route_merged(val);

  EpochHook hook;
  if (cfg.recompute_interval > 0) {
    hook = [&](std::size_t epoch, const TrainedModel& model, PolicyMap& current) {
      if ((epoch + 1) % cfg.recompute_interval != 0 || epoch + 1 == cfg.epochs) return;
      for (int d : train.domain_order) {
        const auto samples = train.domain_samples(d);
        const auto scores = average_impact(model.encoder, model.head(), samples,
                                           cfg.impact_method);
        current.insert_or_assign(d, resolve_policy(cfg.dropout, &scores));
      }
      result.test_policies = current;
    };
  }
  result.test_policies = policies;
  result.log = train_loop(result.model, routed_train, routed_val, policies, cfg, hook);
  return result;
}

StageResult finetune_on_domain(const EncoderModel& encoder,
                               std::span<const Sample> domain_train,
                               std::span<const Sample> domain_val,
                               const ImpactScores* impact, const StageConfig& cfg) {
  if (!cfg.target_domain) throw ConfigError("fine-tuning needs target_domain");
  const int target = *cfg.target_domain;
  std::vector<Sample> train_set, val_set;
  for (const auto& s : domain_train) {
    if (s.domain_id == target) train_set.push_back(s);
  }
  for (const auto& s : domain_val) {
    if (s.domain_id == target) val_set.push_back(s);
  }
  if (train_set.empty()) {
    throw ConfigError(fmt::format("unknown domain {}: no training samples", target));
  }
  if (impact != nullptr && impact->domain_id != target) {
    throw ConfigError(fmt::format("impact scores belong to domain {}, not {}",
                                  impact->domain_id, target));
  }
  int max_label = 0;
  for (const auto& s : train_set) max_label = std::max(max_label, s.local_label);

  StageResult result;
  result.model.encoder = encoder;
  Rng head_rng(derive_seed(cfg.seed, {kHeadTag}));
  result.model.heads.push_back(make_head(encoder.feature_dim(),
                                         static_cast<std::size_t>(max_label),
                                         head_rng));
  const DropoutPolicy policy = resolve_policy(cfg.dropout, impact);
  result.test_policies = {{target, policy}};
  const std::map<int, std::size_t> head_of{{target, 0}};
  const auto routed_train = route_local(train_set, head_of);
  const auto routed_val = route_local(val_set, head_of);
  result.log = train_loop(result.model, routed_train, routed_val,
                          result.test_policies, cfg);
  return result;
}

const StageConfig* ExperimentConfig::stage(StageKind kind) const {
  for (const auto& s : stages) {
    if (s.stage == kind) return &s;
  }
  return nullptr;
}

void ExperimentConfig::validate() const {
  world.validate();
  if (domains.empty()) throw ConfigError("config lists no domains");
  std::set<int> ids;
  for (const auto& d : domains) {
    d.validate();
    if (!ids.insert(d.domain_id).second) {
      throw ConfigError(fmt::format("duplicate domain_id {}", d.domain_id));
    }
    if (d.input_dim != world.input_dim) {
      throw ConfigError(fmt::format("domain {}: input_dim {} differs from world {}",
                                    d.domain_id, d.input_dim, world.input_dim));
    }
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  if (encoder.feature_dim == 0) throw ConfigError("encoder.feature_dim must be > 0");
  std::set<StageKind> seen;
  for (const auto& s : stages) {
    if (!seen.insert(s.stage).second) {
      throw ConfigError(fmt::format("stage {} listed twice", stage_key(s.stage)));
    }
    StageConfig probe = s;
    if (is_finetune(s.stage) && !probe.target_domain) {
      probe.target_domain = domains.front().domain_id;
    }
    if (s.stage == StageKind::Individual) probe.target_domain.reset();
    probe.validate();
    if (s.target_domain && !ids.count(*s.target_domain)) {
      throw ConfigError(fmt::format("stage {}: unknown target_domain {}",
                                    stage_key(s.stage), *s.target_domain));
    }
  }
  if (seeds.empty()) throw ConfigError("config lists no seeds");
  if (max_rank == 0) throw ConfigError("eval.max_rank must be > 0");
}

ExperimentData build_experiment_data(const ExperimentConfig& config,
                                     std::uint64_t seed) {
  ExperimentData data;
  WorldSpec world = config.world;
  world.seed = derive_seed(seed, {kWorldTag, config.world.seed});
  std::vector<std::vector<Sample>> training;
  for (const auto& spec : config.domains) {
    DomainSpec effective = spec;
    effective.seed = derive_seed(
        seed, {kDomainTag, static_cast<std::uint64_t>(spec.domain_id), spec.seed});
    data.domains.push_back(generate_domain(effective, world));
    training.push_back(data.domains.back().training);
  }
  auto merged = merge_single_task(training);
  auto split = split_train_val(merged, config.val_fraction,
                               derive_seed(seed, {kSplitTag}));
  data.train = std::move(split.train);
  data.val = std::move(split.val);
  for (const auto& domain : data.domains) {
    if (domain.held_out.empty()) continue;
    data.protocol.emplace(
        domain.spec.domain_id,
        split_probe_gallery(domain.held_out,
                            derive_seed(seed, {kProtocolTag,
                                               static_cast<std::uint64_t>(
                                                   domain.spec.domain_id)})));
  }
  return data;
}

const CmcCurve* StageReport::cmc_for(int domain_id) const {
  for (const auto& entry : cmc) {
    if (entry.domain_id == domain_id) return &entry.curve;
  }
  return nullptr;
}

nlohmann::json report_to_json(const StageReport& report) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"learning_rate", e.learning_rate},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss ? nlohmann::json(*e.val_loss)
                                              : nlohmann::json(nullptr)}});
  }
  nlohmann::json cmc = nlohmann::json::array();
  for (const auto& entry : report.cmc) {
    cmc.push_back({{"domain_id", entry.domain_id},
                   {"num_probes", entry.curve.num_probes},
                   {"top1", entry.curve.top1()},
                   {"accuracies", entry.curve.accuracies}});
  }
  return {{"stage", stage_key(report.stage)},
          {"label", stage_label(report.stage)},
          {"target_domain", report.target_domain ? nlohmann::json(*report.target_domain)
                                                 : nlohmann::json(nullptr)},
          {"epochs", std::move(epochs)},
          {"cmc", std::move(cmc)},
          {"impact_ref", report.impact_ref},
          {"checkpoint_ref", report.checkpoint_ref}};
}

}  // namespace dgd
