// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

// dgd_lab: synthetic multi-domain re-identification experiments.
//
// Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime, 4 protocol.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dgd/checkpoint.hpp"
#include "dgd/config.hpp"
#include "dgd/errors.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3, kProtocol = 4 };

struct GlobalOptions {
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> seeds;
  std::size_t jobs = 1;
  std::string stages;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("dgd_lab");
  logger->set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("DGD_LAB_LOG")) {
    spdlog::cfg::helpers::load_levels(level);
  }
}

dgd::ExperimentConfig require_config(const GlobalOptions& g) {
  if (g.config.empty()) throw dgd::ConfigError("--config is required");
  return dgd::load_config(g.config);
}

std::vector<std::uint64_t> seed_set(const GlobalOptions& g,
                                    const dgd::ExperimentConfig& config) {
  if (g.seed) return {*g.seed};
  if (g.seeds) {
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= *g.seeds; ++s) seeds.push_back(s);
    return seeds;
  }
  return config.seeds;
}

std::vector<dgd::StageKind> parse_stages(const std::string& list) {
  std::vector<dgd::StageKind> out;
  std::size_t start = 0;
  while (start <= list.size() && !list.empty()) {
    const auto comma = list.find(',', start);
    const auto item = list.substr(start, comma == std::string::npos ? std::string::npos
                                                                      : comma - start);
    if (!item.empty()) out.push_back(dgd::stage_from_key(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// ---- generate --------------------------------------------------------------

int cmd_generate(const GlobalOptions& g) {
  const auto config = require_config(g);
  const auto seed = seed_set(g, config).front();
  const auto data = dgd::build_experiment_data(config, seed);
  const fs::path out = g.out;
  fs::create_directories(out / "data");
  fs::create_directories(out / "protocol");

  json index = {{"seed", seed},
                {"config_hash", dgd::config_hash(config)},
                {"total_classes", data.train.total_classes},
                {"domains", json::array()}};
  fmt::print("{:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "domain", "ids", "train",
             "val", "test_ids", "probes", "gallery");
  for (const auto& domain : data.domains) {
    const int d = domain.spec.domain_id;
    auto samples = data.train.domain_samples(d);
    const auto train_count = samples.size();
    std::size_t val_count = 0;
    for (const auto& s : data.val) {
      if (s.domain_id == d) {
        samples.push_back(s);
        ++val_count;
      }
    }
    samples.insert(samples.end(), domain.held_out.begin(), domain.held_out.end());
    const auto file = fmt::format("domain{}.jsonl", d);
    dgd::write_samples_jsonl(out / "data" / file, samples);

    std::size_t probes = 0;
    std::size_t gallery = 0;
    if (auto it = data.protocol.find(d); it != data.protocol.end()) {
      dgd::write_samples_jsonl(out / "protocol" / fmt::format("domain{}_probes.jsonl", d),
                               it->second.probes);
      dgd::write_samples_jsonl(out / "protocol" / fmt::format("domain{}_gallery.jsonl", d),
                               it->second.gallery);
      probes = it->second.probes.size();
      gallery = it->second.gallery.size();
      for (const auto& w : it->second.warnings) spdlog::warn("domain {}: {}", d, w);
    }
    index["domains"].push_back({{"domain_id", d},
                                {"file", file},
                                {"identities", domain.spec.num_identities},
                                {"label_offset", data.train.label_offset.at(d)},
                                {"train_samples", train_count},
                                {"val_samples", val_count},
                                {"test_identities", domain.spec.test_identities},
                                {"probes", probes},
                                {"gallery", gallery}});
    fmt::print("{:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}\n", d,
               domain.spec.num_identities, train_count, val_count,
               domain.spec.test_identities, probes, gallery);
  }
  dgd::write_json(out / "data" / "merged_index.json", index);
  return kOk;
}

// ---- pipeline --------------------------------------------------------------

int cmd_pipeline(const GlobalOptions& g) {
  const auto config = require_config(g);
  const auto seeds = seed_set(g, config);
  dgd::PipelineOptions options;
  options.jobs = g.jobs;
  options.only_stages = parse_stages(g.stages);
  const fs::path out = g.out;
  fs::create_directories(out);

  const auto hash = dgd::config_hash(config);
  json manifest = {{"run_id", fmt::format("{}-{}", config.name, hash.substr(0, 8))},
                   {"config_hash", hash},
                   {"seeds", seeds},
                   {"stages", g.stages.empty() ? json("all") : json(g.stages)},
                   {"tool_version", DGD_LAB_VERSION},
                   {"started", utc_stamp()},
                   {"status", "running"},
                   {"completed_seeds", json::array()},
                   {"reports", json::array()},
                   {"checkpoints", json::array()}};
  dgd::write_json(out / "config.json", dgd::config_to_json(config));
  dgd::write_json(out / "manifest.json", manifest);

  std::vector<json> summaries;
  json timings = json::object();
  for (auto seed : seeds) {
    options.out_dir = out / fmt::format("seed_{}", seed);
    spdlog::info("seed {}: writing to {}", seed, options.out_dir.string());
    dgd::PipelineOutcome outcome;
    try {
      outcome = dgd::run_full_pipeline(config, seed, options);
    } catch (const std::exception& e) {
      manifest["status"] = "failed";
      manifest["error"] = fmt::format("seed {}: {}", seed, e.what());
      dgd::write_json(out / "manifest.json", manifest);
      throw;
    }
    const auto seed_dir = fmt::format("seed_{}", seed);
    json seed_times = json::object();
    for (const auto& r : outcome.reports) {
      const auto name = r.target_domain
                            ? fmt::format("{}_domain{}", dgd::stage_key(r.stage),
                                          *r.target_domain)
                            : dgd::stage_key(r.stage);
      manifest["reports"].push_back(fmt::format("{}/reports/{}.json", seed_dir, name));
      manifest["checkpoints"].push_back(fmt::format("{}/{}", seed_dir, r.checkpoint_ref));
      seed_times[name] = r.wall_clock_seconds;
    }
    timings[std::to_string(seed)] = std::move(seed_times);
    manifest["completed_seeds"].push_back(seed);
    dgd::write_json(out / "manifest.json", manifest);
    summaries.push_back(dgd::seed_summary(outcome));
  }

  const auto aggregate = dgd::aggregate_summaries(summaries);
  dgd::write_json(out / "summary.json", aggregate);
  dgd::write_summary_table_csv(out / "table.csv", aggregate);
  dgd::write_json(out / "timings.json", timings);
  manifest["status"] = "complete";
  manifest["summary"] = "summary.json";
  dgd::write_json(out / "manifest.json", manifest);
  fmt::print("CMC top-1 (%), mean±std over {} seed(s)\n{}", seeds.size(),
             dgd::format_summary_table(aggregate));
  return kOk;
}

// ---- impact ----------------------------------------------------------------

struct ImpactArgs {
  std::string checkpoint;
  std::string method = "taylor";
  std::string data_dir;
  std::vector<int> domains;
};

std::map<int, std::vector<dgd::Sample>> scoring_samples(const GlobalOptions& g,
                                                        const ImpactArgs& a) {
  std::map<int, std::vector<dgd::Sample>> out;
  if (!a.data_dir.empty()) {
    const auto index = dgd::read_json(fs::path(a.data_dir) / "merged_index.json");
    for (const auto& entry : index.at("domains")) {
      const auto file = fs::path(a.data_dir) / entry.at("file").get<std::string>();
      for (auto& s : dgd::read_samples_jsonl(file)) {
        if (s.merged_label > 0) out[s.domain_id].push_back(std::move(s));
      }
    }
    return out;
  }
  const auto config = require_config(g);
  const auto data = dgd::build_experiment_data(config, seed_set(g, config).front());
  for (int d : data.train.domain_order) out[d] = data.train.domain_samples(d);
  return out;
}

int cmd_impact(const GlobalOptions& g, const ImpactArgs& a) {
  const auto model = dgd::load_checkpoint(a.checkpoint);
  if (model.heads.size() != 1) {
    throw dgd::ConfigError("impact scoring needs a single-task checkpoint (one head)");
  }
  std::vector<dgd::ImpactMethod> methods;
  if (a.method == "both") {
    methods = {dgd::ImpactMethod::Exact, dgd::ImpactMethod::Taylor};
  } else {
    methods = {dgd::impact_method_from_string(a.method)};
  }
  const auto samples = scoring_samples(g, a);
  const fs::path out = g.out;
  for (const auto& [d, set] : samples) {
    if (!a.domains.empty() &&
        std::find(a.domains.begin(), a.domains.end(), d) == a.domains.end()) {
      continue;
    }
    if (!set.empty() && set.front().features.size() != model.encoder.input_dim()) {
      throw dgd::ConfigError(fmt::format(
          "checkpoint expects {} inputs but domain {} samples have {}",
          model.encoder.input_dim(), d, set.front().features.size()));
    }
    std::map<dgd::ImpactMethod, dgd::ImpactScores> scores;
    for (auto m : methods) {
      auto s = dgd::average_impact(model.encoder, model.head(), set, m,
                                   dgd::LabelSpace::Merged, g.jobs);
      const auto tag = dgd::to_string(m);
      dgd::write_json(out / fmt::format("{}_domain{}.json", tag, d), dgd::impact_to_json(s));
      std::vector<std::size_t> order(s.dim());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return s.scores[x] > s.scores[y];
      });
      std::ofstream curve(out / fmt::format("sorted_{}_domain{}.csv", tag, d));
      curve << "position,neuron,score\n";
      for (std::size_t i = 0; i < order.size(); ++i) {
        curve << fmt::format("{},{},{}\n", i, order[i], s.scores[order[i]]);
      }
      fmt::print("domain {} {}: {} neurons, {} with non-positive impact\n", d, tag,
                 s.dim(), s.non_positive_count());
      scores.emplace(m, std::move(s));
    }
    if (scores.size() == 2) {
      const auto& exact = scores.at(dgd::ImpactMethod::Exact);
      const auto& taylor = scores.at(dgd::ImpactMethod::Taylor);
      dgd::write_method_comparison_csv(out / fmt::format("compare_domain{}.csv", d), exact,
                                       taylor);
      const auto rho = dgd::spearman_correlation(exact.scores.values(),
                                                 taylor.scores.values());
      double mae = 0.0;
      for (std::size_t i = 0; i < exact.dim(); ++i) {
        mae += std::abs(exact.scores[i] - taylor.scores[i]);
      }
      mae /= static_cast<double>(exact.dim());
      fmt::print("domain {}: spearman(exact, taylor) = {}, mean abs error = {:.3e}\n", d,
                 rho ? fmt::format("{:.4f}", *rho) : std::string("undefined"), mae);
    }
  }
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string probes;
  std::string gallery;
  std::string policy = "standard";
  std::string impact;
  std::optional<double> temperature;
  std::size_t max_rank = 20;
  bool l2 = false;
};

int cmd_eval(const GlobalOptions& g, const EvalArgs& a) {
  const auto model = dgd::load_checkpoint(a.checkpoint);
  dgd::DropoutPolicy policy = dgd::StandardDropout{};
  if (a.policy != "standard") {
    if (a.impact.empty()) throw dgd::ConfigError("--impact is required for guided policies");
    auto scores = dgd::impact_from_json(dgd::read_json(a.impact));
    if (a.policy == "deterministic") {
      policy = dgd::DeterministicDgd{std::move(scores)};
    } else if (a.policy == "stochastic") {
      const double t = a.temperature ? *a.temperature
                                     : dgd::select_temperature(scores.scores.values());
      policy = dgd::StochasticDgd{std::move(scores), t};
    } else {
      throw dgd::ConfigError(fmt::format("unknown policy '{}'", a.policy));
    }
  }
  const auto probes = dgd::read_samples_jsonl(a.probes);
  const auto gallery = dgd::read_samples_jsonl(a.gallery);
  const auto pf = dgd::extract_features(model.encoder, policy, probes, a.l2);
  const auto gf = dgd::extract_features(model.encoder, policy, gallery, a.l2);
  const auto curve = dgd::cmc(pf, gf, std::min(a.max_rank, gf.rows));
  const fs::path out = g.out.empty() ? fs::path("cmc.csv") : fs::path(g.out);
  dgd::write_cmc_csv(out, curve);
  fmt::print("top-1 {:.4f} over {} probes ({} gallery identities); curve in {}\n",
             curve.top1(), curve.num_probes, gf.rows, out.string());
  return kOk;
}

// ---- report ----------------------------------------------------------------

int cmd_report(const GlobalOptions& g) {
  const fs::path out = g.out;
  std::vector<std::pair<std::uint64_t, json>> found;
  if (!fs::is_directory(out)) {
    throw dgd::ConfigError(fmt::format("{} is not a run directory", out.string()));
  }
  for (const auto& entry : fs::directory_iterator(out)) {
    const auto summary = entry.path() / "summary.json";
    if (entry.is_directory() && fs::exists(summary)) {
      auto doc = dgd::read_json(summary);
      found.emplace_back(doc.at("seed").get<std::uint64_t>(), std::move(doc));
    }
  }
  if (found.empty()) {
    throw dgd::ConfigError(fmt::format("no per-seed summaries under {}", out.string()));
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<json> summaries;
  for (auto& [seed, doc] : found) summaries.push_back(std::move(doc));
  const auto aggregate = dgd::aggregate_summaries(summaries);
  dgd::write_json(out / "summary.json", aggregate);
  dgd::write_summary_table_csv(out / "table.csv", aggregate);
  fmt::print("CMC top-1 (%), mean±std over {} seed(s)\n{}", summaries.size(),
             dgd::format_summary_table(aggregate));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Domain guided dropout experiments on synthetic re-identification data"};
  app.set_version_flag("--version", std::string(DGD_LAB_VERSION));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--out", g.out, "output directory or file");
  auto* seed_opt = app.add_option("--seed", g.seed, "run a single seed");
  app.add_option("--seeds", g.seeds, "run seeds 1..N")->excludes(seed_opt);
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--stages", g.stages,
                 "comma-separated subset: individual,jstl,jstl_dgd,ft_jstl,ft_jstl_dgd");

  auto* generate = app.add_subcommand("generate", "write synthetic domains and protocol splits");
  auto* pipeline = app.add_subcommand("pipeline", "run the staged training pipeline");

  ImpactArgs impact_args;
  auto* impact = app.add_subcommand("impact", "score feature neurons of a checkpoint");
  impact->add_option("--checkpoint", impact_args.checkpoint, "model checkpoint")->required();
  impact->add_option("--method", impact_args.method, "exact, taylor or both")
      ->check(CLI::IsMember({"exact", "taylor", "both"}));
  impact->add_option("--data", impact_args.data_dir,
                     "data directory from `generate` (default: regenerate from --config)");
  impact->add_option("--domain", impact_args.domains, "restrict to these domain ids");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "CMC evaluation on probe/gallery files");
  eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  eval->add_option("--probes", eval_args.probes, "probe samples (jsonl)")->required();
  eval->add_option("--gallery", eval_args.gallery, "gallery samples (jsonl)")->required();
  eval->add_option("--policy", eval_args.policy, "standard, deterministic or stochastic")
      ->check(CLI::IsMember({"standard", "deterministic", "stochastic"}));
  eval->add_option("--impact", eval_args.impact, "impact report for guided policies");
  eval->add_option("--temperature", eval_args.temperature, "stochastic temperature");
  eval->add_option("--max-rank", eval_args.max_rank, "longest CMC rank");
  eval->add_flag("--l2", eval_args.l2, "L2-normalise features");

  auto* report = app.add_subcommand("report", "aggregate per-seed summaries under --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(g);
    if (*pipeline) return cmd_pipeline(g);
    if (*impact) return cmd_impact(g, impact_args);
    if (*eval) {
      if (g.out == "runs") g.out.clear();
      return cmd_eval(g, eval_args);
    }
    if (*report) return cmd_report(g);
  } catch (const dgd::ProtocolError& e) {
    spdlog::error("protocol: {}", e.what());
    return kProtocol;
  } catch (const dgd::ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kUsage;
}
