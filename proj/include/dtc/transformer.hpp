#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/nn/checkpoint.hpp"
#include "dtc/nn/optim.hpp"
#include "dtc/nn/tensor.hpp"

namespace dtc::tfm {

// Word-level vocabulary over cleaned text. Ids 0..3 are the specials.
class Tokenizer {
 public:
  static constexpr int kPad = 0, kUnk = 1, kCls = 2, kMask = 3;
  static constexpr std::size_t kSpecials = 4;

  struct Encoding {
    std::vector<int> ids;            // starts with [CLS], never padded
    std::vector<std::uint8_t> mask;  // all ones, same length as ids
  };

  Tokenizer() = default;
  // tokens[i] is the token with id i; the first four must be the specials.
  Tokenizer(std::vector<std::string> tokens, std::size_t max_len);

  // Keeps the vocab_size - 4 most frequent tokens, ties lexicographic.
  static Tokenizer train(std::span<const std::string> texts, std::size_t vocab_size,
                         std::size_t max_len);

  Encoding encode(std::string_view text) const;
  // Fraction of word tokens (excluding [CLS]) mapped to [UNK].
  double unk_rate(std::span<const std::string> texts) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t max_len() const noexcept { return max_len_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  int id_of(std::string_view token) const;  // kUnk when absent

  // token<TAB>id per line, in id order.
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path, std::size_t max_len);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::size_t max_len_ = 64;
};

enum class AttentionKind { absolute, disentangled };

std::string to_string(AttentionKind kind);
AttentionKind attention_kind_from_string(std::string_view s);

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ff_dim = 256;
  std::size_t max_len = 64;
  std::size_t vocab = 8000;
  double dropout = 0.1;
  AttentionKind kind = AttentionKind::absolute;
  std::size_t rel_window = 8;  // k, disentangled only

  void validate() const;  // ConfigError on violation
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

// Per-forward switches. Dropout is active only when `train` is set; each
// dropout site draws its mask from a seed derived from `dropout_seed`.
struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;
};

// Pre-softmax logits and post-softmax weights, one (seq x seq) row-major
// matrix per layer and head, in [layer][head] order.
struct AttentionProbe {
  std::vector<std::vector<std::vector<double>>> logits;
  std::vector<std::vector<std::vector<double>>> weights;
};

struct LayerParams {
  nn::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  nn::Tensor wq_rel, wk_rel;  // disentangled only, no bias
  nn::Tensor ln1_gain, ln1_bias;
  nn::Tensor w1, b1, w2, b2;
  nn::Tensor ln2_gain, ln2_bias;
};

// Post-LN encoder with an MLM head and a two-way classification head on the
// [CLS] position.
class EncoderModel {
 public:
  // Weights ~ N(0, 0.02) from substream "init" of `seed`; biases 0, gains 1.
  EncoderModel(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }

  nn::NamedTensors named_parameters() const;
  std::vector<nn::Tensor> parameters() const;
  std::size_t parameter_count() const;

  // Multi-head attention of one layer, output projection included.
  // hidden is (seq, d); mask has one entry per position (1 real, 0 pad).
  nn::Tensor attention(std::size_t layer, const nn::Tensor& hidden, std::span<const std::uint8_t> mask,
                       const ForwardOptions& opts = {}, AttentionProbe* probe = nullptr) const;

  // Final hidden states (seq, d).
  nn::Tensor encode(std::span<const int> ids, std::span<const std::uint8_t> mask,
                    const ForwardOptions& opts = {}, AttentionProbe* probe = nullptr) const;

  // (positions.size(), V) logits for the given hidden rows.
  nn::Tensor mlm_logits(const nn::Tensor& hidden, std::span<const std::size_t> positions) const;
  // (1, 2) logits from the first row.
  nn::Tensor cls_logits(const nn::Tensor& hidden) const;

  // Copies every parameter value from `other`, which must share the config.
  void copy_from(const EncoderModel& other);

  void save(const std::filesystem::path& path, const nlohmann::json& meta = nlohmann::json::object()) const;
  // Returns the model; `meta` receives the stored meta block when given.
  static EncoderModel load(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

  // Student of `layers.size()` layers whose embeddings and heads are copied
  // from the teacher and whose layer i starts as teacher layer layers[i].
  static EncoderModel student_of(const EncoderModel& teacher, std::span<const std::size_t> layers);

 private:
  nn::Tensor layer_forward(std::size_t layer, const nn::Tensor& x, std::span<const std::uint8_t> mask,
                           const ForwardOptions& opts, std::uint64_t& site, AttentionProbe* probe) const;
  nn::Tensor maybe_dropout(const nn::Tensor& x, const ForwardOptions& opts, std::uint64_t& site) const;

  EncoderConfig config_;
  nn::Tensor tok_emb_, pos_emb_, rel_emb_;
  nn::Tensor emb_ln_gain_, emb_ln_bias_;
  std::vector<LayerParams> layers_;
  nn::Tensor mlm_w_, mlm_b_;
  nn::Tensor cls_w_, cls_b_;
};

struct MlmBatch {
  std::vector<std::vector<int>> input_ids;        // padded to the batch max length
  std::vector<std::vector<std::uint8_t>> attention_mask;
  std::vector<std::vector<int>> targets;          // original id at selected positions, -1 elsewhere
};

// Per sequence: floor(mask_rate * maskable) positions (at least one when any
// position is maskable), [CLS] and [PAD] excluded. Selected positions become
// [MASK] with probability 0.8, a random non-special id with 0.1, and stay
// unchanged otherwise.
MlmBatch make_mlm_batch(const Tokenizer& tokenizer, std::span<const std::string> texts, double mask_rate,
                        std::uint64_t seed);

struct LogEntry {
  std::size_t step = 0;
  double loss = 0.0;
};
using TrainingLog = std::vector<LogEntry>;
void write_log_csv(std::ostream& out, const TrainingLog& log);

struct MlmConfig {
  std::size_t steps = 600;
  std::size_t batch_size = 32;
  double mask_rate = 0.15;
  nn::AdamConfig adam{};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

// MLM cross-entropy on selected positions only; one log entry per step.
void pretrain_mlm(EncoderModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts,
                  const MlmConfig& config, TrainingLog* log = nullptr);

struct FinetuneConfig {
  std::size_t steps = 600;
  std::size_t batch_size = 32;
  nn::AdamConfig adam{};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

struct DistillConfig {
  double temperature = 2.0;
  double alpha = 0.5;
};

void finetune_classifier(EncoderModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts,
                         std::span<const int> labels, const FinetuneConfig& config, TrainingLog* log = nullptr);

// loss = alpha * CE + (1 - alpha) * T^2 * KL(softmax(teacher/T) || softmax(student/T)).
// With alpha == 1 this is exactly finetune_classifier.
void distill(const EncoderModel& teacher, EncoderModel& student, const Tokenizer& tokenizer,
             std::span<const std::string> texts, std::span<const int> labels, const FinetuneConfig& config,
             const DistillConfig& distill_config, TrainingLog* log = nullptr);

// Positive-class probability (dropout off).
double predict_proba(const EncoderModel& model, const Tokenizer& tokenizer, std::string_view text);
// Batch version fanned out over `threads` workers (0 = hardware concurrency).
std::vector<double> predict_proba(const EncoderModel& model, const Tokenizer& tokenizer,
                                  std::span<const std::string> texts, std::size_t threads = 0);

struct Preset {
  std::string name;
  EncoderConfig encoder;
  std::size_t vocab_size = 8000;  // tokenizer budget, specials included
  bool pretrain = true;
  MlmConfig mlm;
  FinetuneConfig finetune;
  std::optional<std::string> teacher;  // preset the student distills from
  std::vector<std::size_t> student_layers;
  DistillConfig distill;
};

std::vector<std::string> preset_names();
Preset preset(std::string_view name);  // ConfigError on unknown name

}  // namespace dtc::tfm
