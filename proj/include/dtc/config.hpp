#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/classical.hpp"
#include "dtc/features.hpp"

namespace dtc {

// Per-run adjustments to a transformer preset; unset fields keep the preset.
struct TransformerOverrides {
  std::optional<std::size_t> mlm_steps;
  std::optional<std::size_t> finetune_steps;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<bool> pretrain;
  std::optional<double> distill_alpha;
  std::optional<double> distill_temperature;
  std::optional<std::size_t> vocab_size;
};

struct RunConfig {
  std::filesystem::path dataset;
  double split_ratio = 0.8;
  std::optional<std::uint64_t> seed;  // mandatory at validation

  TfIdfOptions tfidf;
  std::size_t tree_max_features = 2000;

  LogisticConfig lr;
  SvmConfig svm;
  double nb_alpha = 1.0;
  ForestConfig rf;
  BoostingConfig gb;
  XgbConfig xgb;
  TransformerOverrides transformer;

  std::vector<std::string> compare_models = {"lr", "svm", "nb", "rf", "gb", "xgb"};
  std::filesystem::path out_dir = "runs/default";

  // Sections [data] [features] [lr] [svm] [nb] [rf] [gb] [xgb] [transformer]
  // [compare] [output]. Unknown sections or keys are errors.
  static RunConfig from_ini(const std::filesystem::path& path);
  static RunConfig from_ini_string(const std::string& text);

  // Seed present, ratio in (0, 1), dataset file exists, hyperparameters sane.
  void validate() const;

  // Echo of every effective value, for reports and manifests.
  nlohmann::json to_json() const;
};

const std::vector<std::string>& classical_model_names();
const std::vector<std::string>& all_model_names();
bool is_classical(const std::string& model);

}  // namespace dtc
