// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "dgd/errors.hpp"

namespace dgd {

using nlohmann::json;

namespace {

/// View of one JSON object that remembers its path and which keys were read.
class Fields {
 public:
  Fields(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError(fmt::format("{}: {}", path.empty() ? "<root>" : path, what));
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, child(key));
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else {
        out = convert<T>(*v, child(key));
      }
    }
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr) fail(child(key), "missing required field");
    return *v;
  }

  /// Rejects keys nobody asked for.
  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) fail(child(it.key()), "unknown field");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        fail(path, "expected a non-negative integer");
      }
      return v.get<T>();
    } else {
      static_assert(std::is_integral_v<T>);
      if (!v.is_number_integer()) fail(path, "expected an integer");
      return v.get<T>();
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

Schedule parse_schedule(const json& node, const std::string& path) {
  Fields f(node, path);
  const auto type = Fields::convert<std::string>(f.require("type"), f.child("type"));
  if (type == "step") {
    StepDecay s;
    f.get("initial", s.initial);
    f.get("factor", s.factor);
    f.get("every_epochs", s.every_epochs);
    f.get("floor", s.floor);
    f.finish();
    if (s.every_epochs == 0) Fields::fail(f.child("every_epochs"), "must be > 0");
    return s;
  }
  if (type == "poly") {
    PolyDecay p;
    f.get("base", p.base);
    f.get("power", p.power);
    f.finish();
    return p;
  }
  Fields::fail(f.child("type"), fmt::format("unknown schedule '{}' (step, poly)", type));
}

DropoutSpec parse_dropout(const json& node, const std::string& path,
                          DropoutSpec spec) {
  Fields f(node, path);
  if (const json* k = f.find("kind")) {
    const auto kind = Fields::convert<std::string>(*k, f.child("kind"));
    if (kind == "standard") {
      spec.kind = DropoutSpec::Kind::Standard;
    } else if (kind == "deterministic_dgd") {
      spec.kind = DropoutSpec::Kind::DeterministicDgd;
    } else if (kind == "stochastic_dgd") {
      spec.kind = DropoutSpec::Kind::StochasticDgd;
    } else {
      Fields::fail(f.child("kind"),
                   fmt::format("unknown dropout '{}' (standard, deterministic_dgd, "
                               "stochastic_dgd)",
                               kind));
    }
  }
  f.get("rate", spec.rate);
  if (const json* t = f.find("temperature")) {
    if (t->is_string() && t->get<std::string>() == "auto") {
      spec.temperature.reset();
    } else if (t->is_number()) {
      spec.temperature = t->get<double>();
    } else {
      Fields::fail(f.child("temperature"), "expected \"auto\" or a number");
    }
  }
  f.get("target_max_keep", spec.target_max_keep);
  f.finish();
  return spec;
}

StageConfig parse_stage(const json& node, const std::string& path) {
  Fields f(node, path);
  const auto key = Fields::convert<std::string>(f.require("stage"), f.child("stage"));
  StageKind kind;
  try {
    kind = stage_from_key(key);
  } catch (const ConfigError& e) {
    Fields::fail(f.child("stage"), e.what());
  }
  StageConfig cfg = StageConfig::defaults(kind);
  if (const json* o = f.find("objective")) {
    const auto name = Fields::convert<std::string>(*o, f.child("objective"));
    if (name == "single_task") {
      cfg.objective = Objective::SingleTask;
    } else if (name == "multi_task") {
      cfg.objective = Objective::MultiTask;
    } else {
      Fields::fail(f.child("objective"),
                   fmt::format("unknown objective '{}' (single_task, multi_task)", name));
    }
  }
  if (const json* s = f.find("schedule")) cfg.schedule = parse_schedule(*s, f.child("schedule"));
  if (const json* d = f.find("dropout")) {
    cfg.dropout = parse_dropout(*d, f.child("dropout"), cfg.dropout);
  }
  f.get("target_domain", cfg.target_domain);
  f.get("epochs", cfg.epochs);
  f.get("batch_size", cfg.batch_size);
  f.get("momentum", cfg.momentum);
  f.get("weight_decay", cfg.weight_decay);
  f.get("seed", cfg.seed);
  f.get("recompute_interval", cfg.recompute_interval);
  f.get("early_stop_patience", cfg.early_stop_patience);
  f.finish();
  return cfg;
}

DomainSpec parse_domain(const json& node, const std::string& path, std::size_t input_dim) {
  Fields f(node, path);
  DomainSpec d;
  d.input_dim = input_dim;
  d.domain_id = Fields::convert<int>(f.require("id"), f.child("id"));
  d.num_identities =
      Fields::convert<std::size_t>(f.require("identities"), f.child("identities"));
  f.get("test_identities", d.test_identities);
  f.get("samples_per_identity", d.samples_per_identity);
  f.get("bias_strength", d.bias_strength);
  f.get("noise_sigma", d.noise_sigma);
  f.get("seed", d.seed);
  f.finish();
  return d;
}

json schedule_json(const Schedule& schedule) {
  if (const auto* s = std::get_if<StepDecay>(&schedule)) {
    return {{"type", "step"},
            {"initial", s->initial},
            {"factor", s->factor},
            {"every_epochs", s->every_epochs},
            {"floor", s->floor}};
  }
  const auto& p = std::get<PolyDecay>(schedule);
  return {{"type", "poly"}, {"base", p.base}, {"power", p.power}};
}

json dropout_json(const DropoutSpec& spec) {
  switch (spec.kind) {
    case DropoutSpec::Kind::Standard:
      return {{"kind", "standard"}, {"rate", spec.rate}};
    case DropoutSpec::Kind::DeterministicDgd:
      return {{"kind", "deterministic_dgd"}};
    case DropoutSpec::Kind::StochasticDgd:
      return {{"kind", "stochastic_dgd"},
              {"temperature", spec.temperature ? json(*spec.temperature) : json("auto")},
              {"target_max_keep", spec.target_max_keep}};
  }
  return nullptr;
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text,
                                                std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  Fields root(doc, "");
  ExperimentConfig cfg;
  root.get("name", cfg.name);
  if (const json* w = root.find("world")) {
    Fields f(*w, "world");
    f.get("input_dim", cfg.world.input_dim);
    f.get("identity_rank", cfg.world.identity_rank);
    f.get("nuisance_rank", cfg.world.nuisance_rank);
    f.get("nuisance_scale", cfg.world.nuisance_scale);
    f.get("seed", cfg.world.seed);
    f.finish();
  }
  const json& domains = root.require("domains");
  if (!domains.is_array() || domains.empty()) {
    Fields::fail("domains", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < domains.size(); ++i) {
    cfg.domains.push_back(
        parse_domain(domains[i], fmt::format("domains[{}]", i), cfg.world.input_dim));
  }
  root.get("val_fraction", cfg.val_fraction);
  if (const json* e = root.find("encoder")) {
    Fields f(*e, "encoder");
    if (const json* h = f.find("hidden")) {
      if (!h->is_array()) Fields::fail("encoder.hidden", "expected an array");
      cfg.encoder.hidden.clear();
      for (std::size_t i = 0; i < h->size(); ++i) {
        const auto path = fmt::format("encoder.hidden[{}]", i);
        const auto width = Fields::convert<std::size_t>((*h)[i], path);
        if (width == 0) Fields::fail(path, "must be > 0");
        cfg.encoder.hidden.push_back(width);
      }
    }
    f.get("feature_dim", cfg.encoder.feature_dim);
    f.finish();
  }
  if (const json* s = root.find("stages")) {
    if (!s->is_array()) Fields::fail("stages", "expected an array of stage objects");
    for (std::size_t i = 0; i < s->size(); ++i) {
      cfg.stages.push_back(parse_stage((*s)[i], fmt::format("stages[{}]", i)));
    }
    // Reports follow table order whatever order the file lists stages in.
    std::stable_sort(cfg.stages.begin(), cfg.stages.end(),
                     [](const StageConfig& a, const StageConfig& b) {
                       return static_cast<int>(a.stage) < static_cast<int>(b.stage);
                     });
  } else {
    for (auto kind : {StageKind::Individual, StageKind::Jstl, StageKind::JstlDgd,
                      StageKind::FtJstl, StageKind::FtJstlDgd}) {
      cfg.stages.push_back(StageConfig::defaults(kind));
    }
  }
  if (const json* s = root.find("seeds")) {
    cfg.seeds.clear();
    if (s->is_number_integer()) {
      const auto n = s->get<std::int64_t>();
      if (n <= 0) Fields::fail("seeds", "must be > 0");
      for (std::int64_t i = 1; i <= n; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(i));
    } else if (s->is_array()) {
      for (std::size_t i = 0; i < s->size(); ++i) {
        cfg.seeds.push_back(
            Fields::convert<std::uint64_t>((*s)[i], fmt::format("seeds[{}]", i)));
      }
    } else {
      Fields::fail("seeds", "expected a count or an array of seeds");
    }
  }
  if (const json* i = root.find("impact")) {
    Fields f(*i, "impact");
    if (const json* m = f.find("method")) {
      const auto name = Fields::convert<std::string>(*m, "impact.method");
      try {
        cfg.impact_method = impact_method_from_string(name);
      } catch (const Error& e) {
        Fields::fail("impact.method", e.what());
      }
    }
    f.get("on_validation", cfg.impact_on_validation);
    f.get("rescore_before_finetune", cfg.rescore_before_finetune);
    f.finish();
  }
  if (const json* e = root.find("eval")) {
    Fields f(*e, "eval");
    f.get("max_rank", cfg.max_rank);
    f.get("l2_normalize", cfg.l2_normalize);
    f.finish();
  }
  root.finish();
  for (auto& stage : cfg.stages) stage.impact_method = cfg.impact_method;
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& config) {
  json domains = json::array();
  for (const auto& d : config.domains) {
    domains.push_back({{"id", d.domain_id},
                       {"identities", d.num_identities},
                       {"test_identities", d.test_identities},
                       {"samples_per_identity", d.samples_per_identity},
                       {"bias_strength", d.bias_strength},
                       {"noise_sigma", d.noise_sigma},
                       {"seed", d.seed}});
  }
  json stages = json::array();
  for (const auto& s : config.stages) {
    stages.push_back({
        {"stage", stage_key(s.stage)},
        {"objective", s.objective == Objective::SingleTask ? "single_task" : "multi_task"},
        {"schedule", schedule_json(s.schedule)},
        {"dropout", dropout_json(s.dropout)},
        {"target_domain", s.target_domain ? json(*s.target_domain) : json(nullptr)},
        {"epochs", s.epochs},
        {"batch_size", s.batch_size},
        {"momentum", s.momentum},
        {"weight_decay", s.weight_decay},
        {"seed", s.seed},
        {"recompute_interval", s.recompute_interval},
        {"early_stop_patience",
         s.early_stop_patience ? json(*s.early_stop_patience) : json(nullptr)}});
  }
  return {{"name", config.name},
          {"world",
           {{"input_dim", config.world.input_dim},
            {"identity_rank", config.world.identity_rank},
            {"nuisance_rank", config.world.nuisance_rank},
            {"nuisance_scale", config.world.nuisance_scale},
            {"seed", config.world.seed}}},
          {"domains", std::move(domains)},
          {"val_fraction", config.val_fraction},
          {"encoder",
           {{"hidden", config.encoder.hidden}, {"feature_dim", config.encoder.feature_dim}}},
          {"stages", std::move(stages)},
          {"seeds", config.seeds},
          {"impact",
           {{"method", to_string(config.impact_method)},
            {"on_validation", config.impact_on_validation},
            {"rescore_before_finetune", config.rescore_before_finetune}}},
          {"eval",
           {{"max_rank", config.max_rank}, {"l2_normalize", config.l2_normalize}}}};
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    std::string what = e.what();
    // Drop the library's own "[json.exception.parse_error.101] parse error at ..." prefix.
    if (auto pos = what.find(": "); pos != std::string::npos) what = what.substr(pos + 2);
    throw ConfigError(fmt::format("{}:{}:{}: {}", origin, line, col, what));
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const auto doc = parse_json_text(buffer.str(), path.string());
  try {
    return config_from_json(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string config_hash(const ExperimentConfig& config) {
  const auto text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace dgd
