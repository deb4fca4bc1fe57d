#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/audit.hpp"
#include "dtc/classical.hpp"
#include "dtc/config.hpp"
#include "dtc/corpus.hpp"
#include "dtc/eval.hpp"
#include "dtc/features.hpp"
#include "dtc/transformer.hpp"

namespace dtc {

std::string sha256_hex(std::string_view bytes);

// Writes files under one output directory and remembers their hashes for the
// run manifest. Paths passed in are relative to the root.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path path(const std::string& rel) const { return root_ / rel; }

  void write(const std::string& rel, const std::string& content);
  // Records a file some other routine already wrote under the root.
  void record(const std::string& rel);

  // Merges into <root>/manifest.json: config echo, the commands run and a
  // sha256 for every file recorded so far (plus those already listed).
  void write_manifest(const std::string& command, const nlohmann::json& config);

  const std::map<std::string, std::string>& hashes() const noexcept { return hashes_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> hashes_;
};

struct PreparedData {
  std::size_t raw_rows = 0;
  Dataset full;
  SplitPair split;
};

// Loads, cleans, deduplicates and splits the configured dataset.
PreparedData prepare_data(const RunConfig& config);

// dataset.csv, train_ids.txt, test_ids.txt, summary.json.
nlohmann::json write_prepare_artifacts(const PreparedData& data, const RunConfig& config, ArtifactWriter& out);

enum class SplitName { train, test };
std::string to_string(SplitName s);

// Everything needed to score text with a trained model.
class ScoringModel {
 public:
  virtual ~ScoringModel() = default;
  virtual std::string name() const = 0;
  virtual double threshold() const = 0;
  virtual std::vector<double> score(const std::vector<std::string>& texts) const = 0;
  virtual nlohmann::json config() const = 0;
};

// Stage names recorded in a ReadAudit during training.
inline constexpr const char* kStageTfidfFit = "tfidf-fit";
inline constexpr const char* kStageClassicalFit = "classical-fit";
inline constexpr const char* kStageTokenizer = "tokenizer-train";
inline constexpr const char* kStagePretrain = "mlm-pretrain";
inline constexpr const char* kStageFinetune = "finetune";
inline constexpr const char* kStageEvaluate = "evaluate";

struct TrainResult {
  std::unique_ptr<ScoringModel> model;
  std::vector<std::string> files;  // relative artifact paths written
};

// Trains `model` on split.train only and writes its artifacts under
// models/. distil-toy requires models/bert-toy.ckpt from an earlier run.
TrainResult train_model(const RunConfig& config, const std::string& model, const SplitPair& split,
                        ArtifactWriter& out, ReadAudit* audit = nullptr);

// Reads a model written by train_model.
std::unique_ptr<ScoringModel> load_model(const std::filesystem::path& root, const std::string& model);

// Scores one split; writes reports/<model>.<split>.json and .roc.csv.
EvalReport evaluate_model(const ScoringModel& model, const SplitPair& split, SplitName which,
                          ArtifactWriter& out, ReadAudit* audit = nullptr);

// Trains and evaluates each model on the test split, then writes
// compare/comparison.csv, compare/comparison.md and compare/accuracy.csv.
std::vector<EvalReport> compare_models(const RunConfig& config, const std::vector<std::string>& models,
                                       const SplitPair& split, ArtifactWriter& out, ReadAudit* audit = nullptr);

// Effective transformer preset after config overrides.
tfm::Preset resolve_preset(const RunConfig& config, const std::string& model);

}  // namespace dtc
