// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

// Runs the acceptance criteria and prints one PASS/FAIL line for each.
//
//   dgd_lab_acceptance [--config <benchmark.json>] [--only 1,2,...] [--keep <dir>]
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "dgd/config.hpp"
#include "dgd/errors.hpp"
#include "dgd/dropout.hpp"
#include "dgd/impact.hpp"
#include "dgd/nn.hpp"
#include "dgd/pipeline.hpp"
#include "dgd/reid.hpp"
#include "dgd/schedule.hpp"
#include "support.hpp"

using namespace dgd;
using namespace dgd::testing;
namespace fs = std::filesystem;

#ifndef DGD_LAB_BENCHMARK_CONFIG
#define DGD_LAB_BENCHMARK_CONFIG "configs/benchmark.json"
#endif

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------- 1

Verdict gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  int models = 0;
  double worst_param = 0.0, worst_hess = 0.0;
  std::size_t params = 0;
  while (models < 30) {
    const std::size_t in = 2 + rng.index(5);
    const std::size_t hidden = 2 + rng.index(7);
    const std::size_t d = 2 + rng.index(6);
    const std::size_t classes = 2 + rng.index(5);
    const auto m = random_encoder(in, {hidden, d}, rng);
    const auto h = random_head(d, classes, rng);
    const auto x = random_tensor({in}, rng);
    // Central differences across a ReLU kink measure the kink, not the gradient.
    if (!away_from_kinks(m, x.storage(), 1e-3)) continue;
    const std::size_t label = rng.index(classes);
    const auto check = finite_difference_check(m, h, x.storage(), label, backward(m, h, x, label));
    worst_param = std::max(worst_param, check.max_param_error);
    worst_hess = std::max(worst_hess, check.max_hessian_error);
    params += check.params;
    ++models;
  }
  const double t = seconds_since(start);
  return {worst_param < 1e-5 && worst_hess < 1e-4 && t < 30.0,
          fmt::format("{} models, {} parameters; max rel err gradient {:.2e}, Hessian {:.2e}; {:.2f}s",
                      models, params, worst_param, worst_hess, t)};
}

// ---------------------------------------------------------------- 2

Verdict impact_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2002);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.index(8);
    const std::size_t in = 2 + rng.index(6);
    const std::size_t classes = 2 + rng.index(6);
    const auto m = random_encoder(in, {2 + rng.index(8), d}, rng);
    const auto h = random_head(d, classes, rng);
    const auto x = random_tensor({in}, rng);
    const std::size_t label = rng.index(classes);
    const auto s = impact_exact(m, h, x.values(), label);
    const auto ref = ref_impact(m, h, x.storage(), label);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(s[i] - ref[i]));
  }

  // Trained toy model with a 64-wide feature layer.
  WorldSpec world;
  world.input_dim = 32;
  world.seed = 5;
  std::vector<std::vector<Sample>> domains;
  for (int id = 1; id <= 2; ++id) {
    DomainSpec spec;
    spec.domain_id = id;
    spec.num_identities = id == 1 ? 40 : 15;
    spec.samples_per_identity = 6;
    spec.input_dim = 32;
    spec.bias_strength = 0.6;
    spec.noise_sigma = 0.5;
    spec.seed = 70 + static_cast<std::uint64_t>(id);
    domains.push_back(generate_domain(spec, world).training);
  }
  const auto merged = merge_single_task(domains);
  auto cfg = StageConfig::defaults(StageKind::Jstl);
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.schedule = StepDecay{0.005, 0.96, 4, 0.0005};
  cfg.seed = 9;
  const auto trained = train_jstl(merged, {}, EncoderConfig{{128}, 64}, cfg);
  double lowest = 1.0;
  for (int id : merged.domain_order) {
    const auto samples = merged.domain_samples(id);
    const auto exact = average_impact(trained.model.encoder, trained.model.head(), samples,
                                      ImpactMethod::Exact);
    const auto taylor = average_impact(trained.model.encoder, trained.model.head(), samples,
                                       ImpactMethod::Taylor);
    const auto a = exact.scores.storage();
    const auto b = taylor.scores.storage();
    lowest = std::min(lowest, ref_spearman(a, b));
  }
  const double t = seconds_since(start);
  return {worst <= 1e-10 && lowest >= 0.9 && t < 60.0,
          fmt::format("100 cases, max |exact - brute force| {:.2e}; Taylor vs exact Spearman "
                      "(d = 64, worst domain) {:.4f}; {:.2f}s",
                      worst, lowest, t)};
}

// ---------------------------------------------------------------- 3

Verdict dropout_limits() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(3003);
  std::size_t compared = 0, mismatched = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(64);
    for (auto& v : s) {
      v = rng.normal() * std::pow(10.0, rng.uniform() * 4 - 2);
      if (std::abs(v) < 1e-6) v = std::copysign(1e-6, v);
    }
    s[0] = 1e-6;
    s[1] = -1e-6;
    const auto cold = stochastic_mask(s, 1e-9, rng);
    const auto det = deterministic_mask(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++compared;
      if (cold.values[i] != det.values[i]) ++mismatched;
    }
  }

  std::vector<double> s(64);
  for (auto& v : s) v = rng.normal();
  double top = 0.0;
  for (double v : s) top = std::max(top, std::abs(v));
  const double hot = 1e6 * top;
  double kept = 0.0;
  const int draws = 10000;
  for (int n = 0; n < draws; ++n) {
    const auto m = stochastic_mask(s, hot, rng);
    kept += m.values[static_cast<std::size_t>(n) % s.size()];
  }
  const double rate = kept / draws;
  const double t = seconds_since(start);
  return {mismatched == 0 && std::abs(rate - 0.5) <= 0.02 && t < 10.0,
          fmt::format("cold: {}/{} entries differ from the deterministic mask; hot: keep rate "
                      "{:.4f} over {} draws; {:.2f}s",
                      mismatched, compared, rate, draws, t)};
}

// ---------------------------------------------------------------- 4

Verdict temperature_heuristic() {
  Rng rng(4004);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(1 + rng.index(128));
    for (auto& v : s) v = rng.normal() * std::pow(10.0, rng.uniform() * 8 - 4);
    s[rng.index(s.size())] = std::abs(rng.normal()) + 1e-12;
    const double top = *std::max_element(s.begin(), s.end());
    worst = std::max(worst, std::abs(keep_probability(top, select_temperature(s)) - 0.9));
  }
  return {worst <= 1e-12,
          fmt::format("1000 score vectors; max |keep(max s) - 0.9| {:.2e}", worst)};
}

// ---------------------------------------------------------------- 5

Verdict schedule_exactness() {
  struct Point {
    const char* what;
    double got, want;
  };
  const std::size_t max_iter = 1000;
  const Point points[] = {
      {"step(0)", lr_step_decay(0), 0.1},
      {"step(4)", lr_step_decay(4), 0.096},
      {"step(8)", lr_step_decay(8), 0.1 * 0.96 * 0.96},
      {"step floor", lr_step_decay(100000), 0.0005},
      {"poly(0)", lr_poly_decay(0, max_iter), 0.01},
      {"poly(max)", lr_poly_decay(max_iter, max_iter), 0.0},
      {"poly(max/2)", lr_poly_decay(max_iter / 2, max_iter), 0.01 / std::sqrt(2.0)},
  };
  double worst = 0.0;
  std::string failed;
  for (const auto& p : points) {
    const double err = std::abs(p.got - p.want);
    worst = std::max(worst, err);
    if (err > 1e-12) failed += fmt::format(" {}={}", p.what, p.got);
  }
  bool floor_ok = true;
  for (std::size_t e = 0; e < 5000; ++e) floor_ok = floor_ok && lr_step_decay(e) >= 0.0005;
  return {failed.empty() && floor_ok,
          fmt::format("7 reference points, max abs err {:.2e}; floor respected{}", worst,
                      failed.empty() ? "" : ";" + failed)};
}

// ---------------------------------------------------------------- 6

Verdict cmc_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(6006);
  int oracle_fail = 0, monotone_fail = 0, transform_fail = 0, rotated = 0, tied = 0;
  auto run = [](const Rows& p, const std::vector<int>& pid, const Rows& g,
                const std::vector<int>& gid, std::size_t k) {
    return cmc(FeatureMatrix::from_rows(p, pid), FeatureMatrix::from_rows(g, gid), k).accuracies;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng);
    const std::size_t k = inst.gallery.size();
    const auto curve = run(inst.probes, inst.probe_ids, inst.gallery, inst.gallery_ids, k);
    if (curve != ref_cmc(inst.probes, inst.probe_ids, inst.gallery, inst.gallery_ids, k)) {
      ++oracle_fail;
    }
    for (std::size_t r = 1; r < k; ++r) {
      if (curve[r] < curve[r - 1]) {
        ++monotone_fail;
        break;
      }
    }
    if (curve.back() != 1.0) ++monotone_fail;
    const std::size_t d = inst.gallery.front().size();
    const auto flip = random_signed_permutation(d, rng);
    if (run(transform(inst.probes, flip), inst.probe_ids, transform(inst.gallery, flip),
            inst.gallery_ids, k) != curve) {
      ++transform_fail;
    }
    if (has_distance_ties(inst)) {
      ++tied;
    } else {
      const auto q = random_orthogonal(d, rng);
      ++rotated;
      if (run(transform(inst.probes, q), inst.probe_ids, transform(inst.gallery, q),
              inst.gallery_ids, k) != curve) {
        ++transform_fail;
      }
    }
  }
  const double t = seconds_since(start);
  return {oracle_fail == 0 && monotone_fail == 0 && transform_fail == 0 && t < 30.0,
          fmt::format("200 instances ({} with distance ties); oracle mismatches {}, monotonicity "
                      "failures {}, transform failures {} (200 signed permutations, {} general "
                      "rotations); {:.2f}s",
                      tied, oracle_fail, monotone_fail, transform_fail, rotated, t)};
}

// ---------------------------------------------------------------- 7-9

struct BenchmarkRun {
  ExperimentConfig config;
  std::vector<PipelineOutcome> outcomes;
  fs::path dir;
  double seconds = 0.0;
};

BenchmarkRun run_benchmark(const fs::path& config_path, const fs::path& dir) {
  BenchmarkRun run;
  run.config = load_config(config_path);
  run.dir = dir;
  const auto start = std::chrono::steady_clock::now();
  for (auto seed : run.config.seeds) {
    PipelineOptions opts;
    opts.out_dir = dir / fmt::format("seed_{}", seed);
    run.outcomes.push_back(run_full_pipeline(run.config, seed, opts));
  }
  run.seconds = seconds_since(start);
  return run;
}

double top1(const PipelineOutcome& o, StageKind stage, int domain) {
  for (const auto& r : o.reports) {
    if (r.stage != stage) continue;
    if (const auto* c = r.cmc_for(domain)) return c->top1();
  }
  throw dgd::Error(fmt::format("no {} result for domain {}", stage_key(stage), domain));
}

int smallest_domain(const ExperimentConfig& c) {
  return std::min_element(c.domains.begin(), c.domains.end(),
                          [](const DomainSpec& a, const DomainSpec& b) {
                            return a.num_identities < b.num_identities;
                          })
      ->domain_id;
}

Verdict end_to_end(const BenchmarkRun& run) {
  const int small = smallest_domain(run.config);
  const std::size_t n = run.outcomes.size();
  std::size_t a = 0, b = 0, c = 0;
  for (const auto& o : run.outcomes) {
    a += top1(o, StageKind::Jstl, small) > top1(o, StageKind::Individual, small);
    b += top1(o, StageKind::JstlDgd, small) >= top1(o, StageKind::Jstl, small);
    c += top1(o, StageKind::FtJstlDgd, small) >= top1(o, StageKind::FtJstl, small);
  }
  const std::size_t need = (8 * n + 9) / 10;
  return {n >= 10 && a >= need && b >= need && c >= need && run.seconds < 600.0,
          fmt::format("domain {} over {} seeds: JSTL > Individually {}/{}, JSTL+DGD >= JSTL "
                      "{}/{}, FT-JSTL+DGD >= FT-JSTL {}/{}; {:.1f}s",
                      small, n, a, n, b, n, c, n, run.seconds)};
}

// Counts must not fall as domains shrink and the smallest domain must drop
// strictly more neurons than the largest.
Verdict dropped_neurons(const BenchmarkRun& run) {
  auto domains = run.config.domains;
  std::stable_sort(domains.begin(), domains.end(), [](const DomainSpec& x, const DomainSpec& y) {
    return x.num_identities > y.num_identities;
  });
  std::size_t ordered = 0, csvs = 0;
  std::string sample;
  for (std::size_t k = 0; k < run.outcomes.size(); ++k) {
    const auto& o = run.outcomes[k];
    std::vector<std::size_t> counts;
    for (const auto& d : domains) counts.push_back(o.jstl_impact.at(d.domain_id).non_positive_count());
    bool ok = counts.back() > counts.front();
    for (std::size_t i = 1; i < counts.size(); ++i) ok = ok && counts[i] >= counts[i - 1];
    ordered += ok;
    if (k == 0) sample = fmt::format("{}", fmt::join(counts, "/"));
    csvs += fs::exists(run.dir / fmt::format("seed_{}", run.config.seeds[k]) / "diagnostics" /
                       "gain_vs_dropped.csv");
  }
  const std::size_t n = run.outcomes.size();
  return {ordered * 10 >= 8 * n && csvs == n,
          fmt::format("non-positive counts ordered by domain size in {}/{} seeds (seed {}: {} "
                      "from largest to smallest); diagnostic CSV in {}/{} seeds",
                      ordered, n, run.config.seeds.front(), sample, csvs, n)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism(const BenchmarkRun& first, const fs::path& config_path) {
  const auto second = run_benchmark(config_path, first.dir.parent_path() / "rerun");
  std::size_t files = 0, differing = 0;
  std::string example;
  for (const auto& entry : fs::recursive_directory_iterator(first.dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), first.dir);
    ++files;
    if (slurp(entry.path()) != slurp(second.dir / rel)) {
      ++differing;
      if (example.empty()) example = rel.string();
    }
  }
  std::size_t second_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(second.dir)) {
    second_files += entry.is_regular_file();
  }
  return {files > 0 && differing == 0 && files == second_files,
          fmt::format("{} files compared across {} seeds, {} differ{}", files,
                      first.outcomes.size(), differing,
                      example.empty() ? "" : " (first: " + example + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dgd-lab acceptance suite"};
  std::string config_path = DGD_LAB_BENCHMARK_CONFIG;
  std::string only;
  std::string keep;
  app.add_option("--config", config_path, "benchmark config for the end-to-end criteria");
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--keep", keep, "write benchmark runs here and keep them");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  std::set<int> selected;
  if (only.empty()) {
    for (int k = 1; k <= 9; ++k) selected.insert(k);
  } else {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ',')) selected.insert(std::stoi(item));
  }

  const char* names[] = {"",
                         "gradient correctness",
                         "impact oracle",
                         "guided dropout limits",
                         "temperature heuristic",
                         "schedule exactness",
                         "CMC oracle",
                         "end-to-end benchmark",
                         "dropped neurons vs domain size",
                         "determinism"};
  int failures = 0;
  auto report = [&](int k, const std::function<Verdict()>& check) {
    if (!selected.count(k)) return;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, fmt::format("error: {}", e.what())};
    }
    failures += !v.pass;
    std::cout << fmt::format("{} criterion {}: {}: {}", v.pass ? "PASS" : "FAIL", k, names[k],
                             v.detail)
              << std::endl;
  };

  report(1, gradient_correctness);
  report(2, impact_oracle);
  report(3, dropout_limits);
  report(4, temperature_heuristic);
  report(5, schedule_exactness);
  report(6, cmc_oracle);

  if (selected.count(7) || selected.count(8) || selected.count(9)) {
    const fs::path root = keep.empty() ? fs::temp_directory_path() / "dgd_lab_acceptance"
                                       : fs::path(keep);
    fs::remove_all(root);
    std::optional<BenchmarkRun> run;
    std::string error;
    try {
      run = run_benchmark(config_path, root / "run");
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto with_run = [&](const std::function<Verdict(const BenchmarkRun&)>& f) {
      return [&, f]() -> Verdict {
        if (!run) return {false, fmt::format("benchmark failed: {}", error)};
        return f(*run);
      };
    };
    report(7, with_run(end_to_end));
    report(8, with_run(dropped_neurons));
    report(9, with_run([&](const BenchmarkRun& r) { return determinism(r, config_path); }));

    if (run && (selected.count(7) || selected.count(8))) {
      std::size_t improved = 0, measured = 0;
      for (const auto& o : run->outcomes) {
        if (o.val_loss_before_dgd && o.val_loss_after_dgd) {
          ++measured;
          improved += *o.val_loss_after_dgd <= *o.val_loss_before_dgd;
        }
      }
      std::cout << fmt::format("INFO validation loss after guided resume <= before in {}/{} seeds",
                               improved, measured)
                << std::endl;
    }
    if (keep.empty()) fs::remove_all(root);
  }

  std::cout << fmt::format("{} of {} criteria passed", selected.size() - failures,
                           selected.size())
            << std::endl;
  return failures == 0 ? 0 : 1;
}
