// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dgd/errors.hpp"
#include "dgd/rng.hpp"

namespace dgd {

void WorldSpec::validate() const {
  if (input_dim == 0) throw ConfigError("world.input_dim must be positive");
  if (identity_rank == 0) throw ConfigError("world.identity_rank must be positive");
  if (!(nuisance_scale >= 0.0)) throw ConfigError("world.nuisance_scale must be >= 0");
}

void DomainSpec::validate() const {
  if (num_identities < 2) {
    throw ConfigError(fmt::format("domain {}: num_identities must be >= 2",
                                  domain_id));
  }
  if (samples_per_identity < 2) {
    throw ConfigError(fmt::format(
        "domain {}: samples_per_identity must be >= 2", domain_id));
  }
  if (input_dim == 0) {
    throw ConfigError(fmt::format("domain {}: input_dim must be positive",
                                  domain_id));
  }
  if (!(bias_strength >= 0.0) || !(noise_sigma >= 0.0)) {
    throw ConfigError(fmt::format(
        "domain {}: bias_strength and noise_sigma must be >= 0", domain_id));
  }
}

std::vector<Sample> MergedDataset::domain_samples(int domain_id) const {
  std::vector<Sample> out;
  auto it = domain_index.find(domain_id);
  if (it == domain_index.end()) return out;
  out.reserve(it->second.size());
  for (auto i : it->second) out.push_back(samples[i]);
  return out;
}

namespace {

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double stddev,
                       Rng& rng) {
  Tensor m = Tensor::matrix(rows, cols);
  for (auto& v : m.storage()) v = stddev * rng.normal();
  return m;
}

}  // namespace

DomainData generate_domain(const DomainSpec& spec, const WorldSpec& world) {
  spec.validate();
  world.validate();
  if (spec.input_dim != world.input_dim) {
    throw ConfigError(fmt::format("domain {}: input_dim {} differs from world {}",
                                  spec.domain_id, spec.input_dim,
                                  world.input_dim));
  }
  const std::size_t n = world.input_dim;
  const std::size_t r = world.identity_rank;
  const std::size_t q = world.nuisance_rank;

  Rng world_rng(world.seed);
  const Tensor basis = gaussian_matrix(n, r, 1.0 / std::sqrt(double(r)), world_rng);
  const Tensor nuisance =
      q > 0 ? gaussian_matrix(n, q, 1.0 / std::sqrt(double(q)), world_rng)
            : Tensor();

  Rng rng(spec.seed);
  const std::size_t total_ids = spec.num_identities + spec.test_identities;
  std::vector<std::vector<double>> prototypes(total_ids, std::vector<double>(n));
  std::vector<double> z(r);
  for (auto& proto : prototypes) {
    for (auto& v : z) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < r; ++j) acc += basis.at(i, j) * z[j];
      proto[i] = acc;
    }
  }
  const Tensor distortion = gaussian_matrix(n, n, 1.0 / std::sqrt(double(n)), rng);
  std::vector<double> offset(n);
  for (auto& v : offset) v = rng.normal();

  const double b = spec.bias_strength;
  const double sigma = spec.noise_sigma;
  DomainData out;
  out.spec = spec;
  std::vector<double> u(q), clean(n);
  for (std::size_t id = 0; id < total_ids; ++id) {
    for (std::size_t s = 0; s < spec.samples_per_identity; ++s) {
      for (auto& v : u) v = rng.normal();
      for (std::size_t i = 0; i < n; ++i) {
        double nz = 0.0;
        for (std::size_t j = 0; j < q; ++j) nz += nuisance.at(i, j) * u[j];
        const double e = rng.normal();
        clean[i] = prototypes[id][i] + sigma * (world.nuisance_scale * nz + e);
      }
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += distortion.at(i, j) * clean[j];
        x[i] = clean[i] + b * (acc + offset[i]);
      }
      Sample sample{spec.domain_id, static_cast<int>(id + 1), 0,
                    Tensor::vector(std::move(x))};
      if (id < spec.num_identities) {
        out.training.push_back(std::move(sample));
      } else {
        out.held_out.push_back(std::move(sample));
      }
    }
  }
  return out;
}

MergedDataset merge_single_task(const std::vector<std::vector<Sample>>& domains) {
  if (domains.empty()) throw ArgumentError("no domains to merge");
  MergedDataset merged;
  std::size_t offset = 0;
  for (const auto& domain : domains) {
    if (domain.empty()) throw ArgumentError("cannot merge an empty domain");
    const int id = domain.front().domain_id;
    if (merged.identities.count(id) != 0) {
      throw ArgumentError(fmt::format("duplicate domain_id {}", id));
    }
    std::set<int> labels;
    for (const auto& s : domain) {
      if (s.domain_id != id) {
        throw ArgumentError(fmt::format(
            "domain list mixes domain ids {} and {}", id, s.domain_id));
      }
      labels.insert(s.local_label);
    }
    const auto m = labels.size();
    if (*labels.begin() != 1 || *labels.rbegin() != static_cast<int>(m)) {
      throw ArgumentError(fmt::format(
          "domain {}: local labels must cover 1..{} exactly", id, m));
    }
    merged.domain_order.push_back(id);
    merged.identities[id] = m;
    merged.label_offset[id] = offset;
    auto& index = merged.domain_index[id];
    for (const auto& s : domain) {
      Sample copy = s;
      copy.merged_label = s.local_label + static_cast<int>(offset);
      index.push_back(merged.samples.size());
      merged.samples.push_back(std::move(copy));
    }
    offset += m;
  }
  merged.total_classes = offset;
  return merged;
}

TrainValSplit split_train_val(const MergedDataset& dataset, double val_fraction,
                              std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError(
        fmt::format("val_fraction {} outside (0, 1)", val_fraction));
  }
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    by_label[dataset.samples[i].merged_label].push_back(i);
  }
  std::vector<bool> is_val(dataset.samples.size(), false);
  TrainValSplit split;
  for (auto& [label, members] : by_label) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
    rng.shuffle(std::span<std::size_t>(members));
    auto n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(members.size())));
    if (n_val >= members.size()) {
      n_val = members.size() - 1;
      split.warnings.push_back(fmt::format(
          "identity {} has {} sample(s); kept {} in training", label,
          members.size(), members.size() - n_val));
      spdlog::warn("{}", split.warnings.back());
    }
    for (std::size_t k = 0; k < n_val; ++k) is_val[members[k]] = true;
  }

  MergedDataset& train = split.train;
  train.domain_order = dataset.domain_order;
  train.identities = dataset.identities;
  train.label_offset = dataset.label_offset;
  train.total_classes = dataset.total_classes;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (is_val[i]) {
      split.val.push_back(s);
    } else {
      train.domain_index[s.domain_id].push_back(train.samples.size());
      train.samples.push_back(s);
    }
  }
  return split;
}

ProbeGallery split_probe_gallery(std::span<const Sample> held_out,
                                 std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    by_identity[{held_out[i].domain_id, held_out[i].local_label}].push_back(i);
  }
  ProbeGallery out;
  for (const auto& [key, members] : by_identity) {
    if (members.size() < 2) {
      out.warnings.push_back(fmt::format(
          "domain {} identity {} has fewer than 2 samples; excluded", key.first,
          key.second));
      spdlog::warn("{}", out.warnings.back());
      continue;
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(key.first),
                               static_cast<std::uint64_t>(key.second)}));
    const std::size_t pick = rng.index(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto& s = held_out[members[k]];
      (k == pick ? out.gallery : out.probes).push_back(s);
    }
  }
  return out;
}

void write_samples_jsonl(const std::filesystem::path& path,
                         std::span<const Sample> samples) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  for (const auto& s : samples) {
    nlohmann::json record = {{"domain_id", s.domain_id},
                             {"local_label", s.local_label},
                             {"merged_label", s.merged_label},
                             {"features", s.features.storage()}};
    out << record.dump() << '\n';
  }
}

std::vector<Sample> read_samples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto record = nlohmann::json::parse(line);
      Sample s;
      s.domain_id = record.at("domain_id").get<int>();
      s.local_label = record.at("local_label").get<int>();
      s.merged_label = record.value("merged_label", 0);
      s.features = Tensor::vector(record.at("features").get<std::vector<double>>());
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(
          fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return samples;
}

}  // namespace dgd
