// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dgd/tensor.hpp"

namespace dgd {

/// Structure shared by every synthetic domain: an identity subspace in which
/// person prototypes live and a nuisance subspace carrying intra-identity
/// variation (pose, lighting). Both are random bases drawn from `seed`.
struct WorldSpec {
  std::size_t input_dim = 32;
  std::size_t identity_rank = 16;
  std::size_t nuisance_rank = 8;
  double nuisance_scale = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DomainSpec {
  int domain_id = 1;
  std::size_t num_identities = 2;  // training identities
  std::size_t test_identities = 0; // held out for probe/gallery
  std::size_t samples_per_identity = 2;
  std::size_t input_dim = 32;
  double bias_strength = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One observation. Labels are 1-based; merged_label is 0 until the sample
/// has been through merge_single_task (and stays 0 for held-out identities).
struct Sample {
  int domain_id = 0;
  int local_label = 0;
  int merged_label = 0;
  Tensor features;

  bool operator==(const Sample&) const = default;
};

struct DomainData {
  DomainSpec spec;
  std::vector<Sample> training;  // local labels 1..num_identities
  std::vector<Sample> held_out;  // local labels num_identities+1..
};

/// Samples from every domain relabelled into one label space 1..M.
struct MergedDataset {
  std::vector<Sample> samples;
  std::map<int, std::vector<std::size_t>> domain_index;
  std::vector<int> domain_order;            // input order of domains
  std::map<int, std::size_t> identities;    // M_i per domain
  std::map<int, std::size_t> label_offset;  // sum of M_k over earlier domains
  std::size_t total_classes = 0;

  std::vector<Sample> domain_samples(int domain_id) const;
};

struct TrainValSplit {
  MergedDataset train;
  std::vector<Sample> val;
  std::vector<std::string> warnings;
};

struct ProbeGallery {
  std::vector<Sample> probes;
  std::vector<Sample> gallery;
  std::vector<std::string> warnings;
};

/// Draws the domain in a fixed order from Rng(world.seed) and Rng(spec.seed):
///   world: identity basis U [n x r] ~ N(0, 1/r), nuisance basis V [n x q] ~ N(0, 1/q)
///   domain: prototypes z_j ~ N(0, I_r) for all training then held-out
///   identities, distortion R [n x n] ~ N(0, 1/n), offset o ~ N(0, I_n), then
///   per sample u ~ N(0, I_q), e ~ N(0, I_n).
/// A sample is  x = (I + b R)(U z + sigma (nuisance_scale V u + e)) + b o.
DomainData generate_domain(const DomainSpec& spec, const WorldSpec& world);

/// Assigns merged labels by cumulative offset in the given domain order.
/// Throws ArgumentError on an empty list, mixed or duplicate domain ids, or
/// local labels that are not exactly 1..M_i.
MergedDataset merge_single_task(const std::vector<std::vector<Sample>>& domains);

/// Stratified per merged identity: round(val_fraction * n) samples of each
/// identity go to validation, capped so at least one stays in training.
TrainValSplit split_train_val(const MergedDataset& dataset, double val_fraction,
                              std::uint64_t seed);

/// Single-shot protocol: one random gallery sample per identity, the rest are
/// probes. Identities with fewer than two samples are skipped with a warning.
ProbeGallery split_probe_gallery(std::span<const Sample> held_out,
                                 std::uint64_t seed);

void write_samples_jsonl(const std::filesystem::path& path,
                         std::span<const Sample> samples);
std::vector<Sample> read_samples_jsonl(const std::filesystem::path& path);

}  // namespace dgd
