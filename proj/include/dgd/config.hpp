// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dgd/pipeline.hpp"

namespace dgd {

/// Builds an experiment from its JSON form. Unknown keys and wrong types are
/// rejected with a ConfigError naming the offending field path.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Parse errors carry line and column.
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json parse_json_text(const std::string& text, const std::string& origin);

/// FNV-1a over the canonical (compact, key-sorted) JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace dgd
