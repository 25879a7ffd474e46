// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgd/impact.hpp"
#include "dgd/nn.hpp"

namespace dgd {

inline constexpr const char* kCheckpointVersion = "dgd-lab.v1";

/// Shared encoder plus one or more classifier heads (one for single-task
/// training, one per domain for the multi-task objective).
struct TrainedModel {
  EncoderModel encoder;
  std::vector<ClassifierHead> heads;

  const ClassifierHead& head() const { return heads.front(); }
  bool operator==(const TrainedModel& other) const;
};

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

nlohmann::json impact_to_json(const ImpactScores& scores);
ImpactScores impact_from_json(const nlohmann::json& doc);

/// Writes `doc` with a trailing newline; output is byte-stable for equal docs.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc,
                int indent = 1);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace dgd
