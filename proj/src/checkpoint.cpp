// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include "dgd/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "dgd/errors.hpp"

namespace dgd {

using nlohmann::json;

bool TrainedModel::operator==(const TrainedModel& other) const {
  if (encoder.layers.size() != other.encoder.layers.size() ||
      heads.size() != other.heads.size()) {
    return false;
  }
  for (std::size_t k = 0; k < encoder.layers.size(); ++k) {
    const auto& a = encoder.layers[k];
    const auto& b = other.encoder.layers[k];
    if (a.weights != b.weights || a.bias != b.bias || a.activation != b.activation) {
      return false;
    }
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (heads[h].weights != other.heads[h].weights ||
        heads[h].bias != other.heads[h].bias) {
      return false;
    }
  }
  return true;
}

namespace {

json matrix_json(const Tensor& weights, const Tensor& bias) {
  return {{"shape", weights.shape()},
          {"weights", weights.storage()},
          {"bias", bias.storage()}};
}

std::pair<Tensor, Tensor> matrix_from_json(const json& doc) {
  auto shape = doc.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw ConfigError("checkpoint matrix shape must be 2-D");
  Tensor weights(shape, doc.at("weights").get<std::vector<double>>());
  Tensor bias({shape[0]}, doc.at("bias").get<std::vector<double>>());
  return {std::move(weights), std::move(bias)};
}

}  // namespace

json model_to_json(const TrainedModel& model) {
  json layers = json::array();
  for (const auto& layer : model.encoder.layers) {
    json entry = matrix_json(layer.weights, layer.bias);
    entry["activation"] = to_string(layer.activation);
    layers.push_back(std::move(entry));
  }
  json heads = json::array();
  for (const auto& head : model.heads) {
    heads.push_back(matrix_json(head.weights, head.bias));
  }
  return {{"version", kCheckpointVersion},
          {"encoder", {{"layers", std::move(layers)}}},
          {"heads", std::move(heads)}};
}

TrainedModel model_from_json(const json& doc) {
  try {
    const auto version = doc.at("version").get<std::string>();
    if (version != kCheckpointVersion) {
      throw ConfigError(fmt::format("unsupported checkpoint version '{}'", version));
    }
    TrainedModel model;
    for (const auto& entry : doc.at("encoder").at("layers")) {
      auto [w, b] = matrix_from_json(entry);
      model.encoder.layers.push_back(
          {std::move(w), std::move(b),
           activation_from_string(entry.at("activation").get<std::string>())});
    }
    model.encoder.validate();
    for (const auto& entry : doc.at("heads")) {
      auto [w, b] = matrix_from_json(entry);
      ClassifierHead head{std::move(w), std::move(b)};
      head.validate();
      if (head.feature_dim() != model.encoder.feature_dim()) {
        throw ConfigError("checkpoint head width does not match encoder");
      }
      model.heads.push_back(std::move(head));
    }
    if (model.heads.empty()) throw ConfigError("checkpoint has no heads");
    return model;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed checkpoint: {}", e.what()));
  } catch (const DimensionError& e) {
    throw ConfigError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  write_json(path, model_to_json(model), -1);
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

json impact_to_json(const ImpactScores& scores) {
  return {{"domain_id", scores.domain_id},
          {"method", to_string(scores.method)},
          {"d", scores.dim()},
          {"scores", scores.scores.storage()},
          {"num_samples", scores.num_samples}};
}

ImpactScores impact_from_json(const json& doc) {
  try {
    ImpactScores out;
    out.domain_id = doc.at("domain_id").get<int>();
    out.method = impact_method_from_string(doc.at("method").get<std::string>());
    out.scores = Tensor::vector(doc.at("scores").get<std::vector<double>>());
    out.num_samples = doc.at("num_samples").get<std::size_t>();
    if (doc.at("d").get<std::size_t>() != out.scores.size()) {
      throw ConfigError("impact report 'd' does not match its scores");
    }
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed impact report: {}", e.what()));
  }
}

void write_json(const std::filesystem::path& path, const json& doc, int indent) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << doc.dump(indent) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace dgd
