#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

#include "nwhead/model.hpp"
#include "nwhead/trainer.hpp"

namespace nwhead {

// A trained model with the configuration that produced it.
//
// On disk this is one JSON manifest; the parameters sit in its "parameters"
// field as base64 of little-endian IEEE-754 doubles, in Model::flatten()
// order (row-major weights, then bias, layer by layer).
struct Checkpoint {
  Model model;
  TrainConfig config;
  int class_count = 0;
};

std::string encode_parameters(std::span<const double> values);
Vector decode_parameters(const std::string& base64);

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nwhead
