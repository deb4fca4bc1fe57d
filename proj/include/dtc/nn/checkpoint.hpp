#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/nn/tensor.hpp"

namespace dtc::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Layout: magic line, JSON manifest line {meta, tensors:[{name, shape}]},
// then every tensor's values as little-endian doubles in manifest order.
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors,
                     const nlohmann::json& meta = nlohmann::json::object());

// Reads the manifest only.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

// Loads values into `tensors`, which must match the stored names and shapes
// exactly (SchemaError otherwise). Returns the stored meta block.
nlohmann::json load_checkpoint(const std::filesystem::path& path, NamedTensors& tensors);

}  // namespace dtc::nn
