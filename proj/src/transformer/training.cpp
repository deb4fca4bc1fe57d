#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <thread>

#include "dtc/error.hpp"
#include "dtc/nn/ops.hpp"
#include "dtc/rng.hpp"
#include "dtc/transformer.hpp"

namespace dtc::tfm {

using nn::Tensor;

namespace {

// Walks a fresh permutation of [0, n) per epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, const Rng& root) : n_(n), root_(root) {}

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    while (out.size() < std::min(batch, n_)) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    Rng rng = root_.substream("order", epoch_++);
    rng.shuffle(order_);
    pos_ = 0;
  }

  std::size_t n_;
  Rng root_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

struct MaskedSeq {
  std::vector<int> ids;
  std::vector<int> targets;
};

MaskedSeq mask_sequence(const std::vector<int>& ids, std::size_t vocab, double rate, Rng& rng) {
  MaskedSeq out{ids, std::vector<int>(ids.size(), -1)};
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != Tokenizer::kCls && ids[i] != Tokenizer::kPad) maskable.push_back(i);
  }
  if (maskable.empty()) return out;
  const auto want = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(rate * static_cast<double>(maskable.size()))));
  // Partial Fisher-Yates picks `want` distinct positions.
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(maskable[i], maskable[i + rng.below(maskable.size() - i)]);
  }
  const std::uint64_t n_regular = vocab - Tokenizer::kSpecials;
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t p = maskable[i];
    out.targets[p] = ids[p];
    const double u = rng.uniform();
    if (u < 0.8) {
      out.ids[p] = Tokenizer::kMask;
    } else if (u < 0.9 && n_regular > 0) {
      out.ids[p] = static_cast<int>(Tokenizer::kSpecials + rng.below(n_regular));
    }
  }
  return out;
}

std::uint64_t dropout_seed(const Rng& root, std::size_t step, std::size_t row) {
  return root.substream("dropout", step).substream("row", row).next_u64();
}

void check_finite(double loss, const char* what, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string(what) + " loss is not finite at step " + std::to_string(step));
  }
}

void optimizer_step(std::vector<Tensor>& params, nn::AdamState& adam, double clip_norm) {
  if (clip_norm > 0.0) nn::clip_grad_norm(params, clip_norm);
  nn::adam_step(params, adam);
  nn::zero_grads(params);
}

void train_classifier(const EncoderModel* teacher, EncoderModel& model, const Tokenizer& tokenizer,
                      std::span<const std::string> texts, std::span<const int> labels,
                      const FinetuneConfig& config, const DistillConfig& dc, TrainingLog* log) {
  if (texts.size() != labels.size()) {
    throw DimensionError(std::to_string(texts.size()) + " texts vs " + std::to_string(labels.size()) + " labels");
  }
  if (texts.empty()) throw DataError("fine-tuning needs a non-empty training set");
  bool seen[2] = {false, false};
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    seen[y] = true;
  }
  if (!seen[0] || !seen[1]) throw DataError("fine-tuning needs both classes in the training data");
  if (config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(dc.temperature > 0.0)) throw ConfigError("distillation temperature must be positive");
  if (!(dc.alpha >= 0.0 && dc.alpha <= 1.0)) throw ConfigError("distillation alpha must lie in [0, 1]");

  std::vector<Tokenizer::Encoding> enc;
  enc.reserve(texts.size());
  for (const auto& t : texts) enc.push_back(tokenizer.encode(t));

  const bool use_kl = teacher != nullptr && dc.alpha < 1.0;
  std::vector<std::vector<double>> soft;  // teacher softmax(logits / T) per example
  if (use_kl) {
    nn::NoGradGuard guard;
    soft.resize(enc.size());
    for (std::size_t i = 0; i < enc.size(); ++i) {
      const Tensor z = nn::scale(teacher->cls_logits(teacher->encode(enc[i].ids, enc[i].mask)),
                                 1.0 / dc.temperature);
      const Tensor p = nn::softmax(z);
      soft[i].assign(p.data().begin(), p.data().end());
    }
  }

  const Rng root = Rng(config.seed).substream("finetune");
  BatchSampler sampler(enc.size(), root);
  auto params = model.parameters();
  nn::AdamState adam{config.adam, {}, {}, 0};
  const double t2 = dc.temperature * dc.temperature;

  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = sampler.next(config.batch_size);
    const double w = 1.0 / static_cast<double>(batch.size());
    Tensor loss;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& e = enc[batch[b]];
      const ForwardOptions opts{true, dropout_seed(root, step, b)};
      const Tensor logits = model.cls_logits(model.encode(e.ids, e.mask, opts));
      const int y = labels[batch[b]];
      Tensor li = nn::cross_entropy(logits, std::span(&y, 1));
      if (use_kl) {
        const Tensor q = Tensor::from({1, 2}, soft[batch[b]]);
        const Tensor kl = nn::kl_divergence(nn::scale(logits, 1.0 / dc.temperature), q);
        li = nn::add(nn::scale(li, dc.alpha), nn::scale(kl, (1.0 - dc.alpha) * t2));
      }
      li = nn::scale(li, w);
      loss = loss.defined() ? nn::add(loss, li) : li;
    }
    check_finite(loss.item(), "classification", step);
    if (log) log->push_back({step, loss.item()});
    loss.backward();
    optimizer_step(params, adam, config.clip_norm);
  }
}

}  // namespace

MlmBatch make_mlm_batch(const Tokenizer& tokenizer, std::span<const std::string> texts, double mask_rate,
                        std::uint64_t seed) {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  Rng rng(seed);
  MlmBatch batch;
  std::size_t width = 0;
  for (const auto& t : texts) {
    auto e = tokenizer.encode(t);
    auto m = mask_sequence(e.ids, tokenizer.size(), mask_rate, rng);
    width = std::max(width, m.ids.size());
    batch.input_ids.push_back(std::move(m.ids));
    batch.targets.push_back(std::move(m.targets));
    batch.attention_mask.push_back(std::move(e.mask));
  }
  for (std::size_t i = 0; i < batch.input_ids.size(); ++i) {
    batch.input_ids[i].resize(width, Tokenizer::kPad);
    batch.targets[i].resize(width, -1);
    batch.attention_mask[i].resize(width, 0);
  }
  return batch;
}

void write_log_csv(std::ostream& out, const TrainingLog& log) {
  out << "step,loss\n";
  char buf[64];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.17g", e.loss);
    out << e.step << ',' << buf << '\n';
  }
}

void pretrain_mlm(EncoderModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts,
                  const MlmConfig& config, TrainingLog* log) {
  if (texts.empty()) throw DataError("MLM pretraining needs a non-empty corpus");
  if (!(config.mask_rate > 0.0 && config.mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  if (config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (tokenizer.size() != model.config().vocab) {
    throw ConfigError("tokenizer has " + std::to_string(tokenizer.size()) + " tokens, model vocab is " +
                      std::to_string(model.config().vocab));
  }

  std::vector<std::vector<int>> enc;
  for (const auto& t : texts) {
    auto e = tokenizer.encode(t);
    if (e.ids.size() > 1) enc.push_back(std::move(e.ids));
  }
  if (enc.empty()) throw DataError("MLM corpus has no maskable tokens");

  const Rng root = Rng(config.seed).substream("pretrain");
  BatchSampler sampler(enc.size(), root);
  auto params = model.parameters();
  nn::AdamState adam{config.adam, {}, {}, 0};

  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = sampler.next(config.batch_size);
    Rng mask_rng = root.substream("masking", step);
    std::vector<MaskedSeq> seqs;
    std::size_t total = 0;
    for (auto i : batch) {
      seqs.push_back(mask_sequence(enc[i], tokenizer.size(), config.mask_rate, mask_rng));
      for (int t : seqs.back().targets) total += t >= 0;
    }
    Tensor loss;
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      std::vector<std::size_t> pos;
      std::vector<int> tgt;
      for (std::size_t p = 0; p < seqs[b].targets.size(); ++p) {
        if (seqs[b].targets[p] >= 0) {
          pos.push_back(p);
          tgt.push_back(seqs[b].targets[p]);
        }
      }
      const std::vector<std::uint8_t> mask(seqs[b].ids.size(), 1);
      const ForwardOptions opts{true, dropout_seed(root, step, b)};
      const Tensor hidden = model.encode(seqs[b].ids, mask, opts);
      Tensor li = nn::scale(nn::cross_entropy(model.mlm_logits(hidden, pos), tgt),
                            static_cast<double>(pos.size()) / static_cast<double>(total));
      loss = loss.defined() ? nn::add(loss, li) : li;
    }
    check_finite(loss.item(), "MLM", step);
    if (log) log->push_back({step, loss.item()});
    loss.backward();
    optimizer_step(params, adam, config.clip_norm);
  }
}

void finetune_classifier(EncoderModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts,
                         std::span<const int> labels, const FinetuneConfig& config, TrainingLog* log) {
  train_classifier(nullptr, model, tokenizer, texts, labels, config, DistillConfig{1.0, 1.0}, log);
}

void distill(const EncoderModel& teacher, EncoderModel& student, const Tokenizer& tokenizer,
             std::span<const std::string> texts, std::span<const int> labels, const FinetuneConfig& config,
             const DistillConfig& distill_config, TrainingLog* log) {
  // Equal depth is allowed so a copied student can be checked against its teacher.
  if (student.config().layers > teacher.config().layers) {
    throw ConfigError("student must not be deeper than its teacher");
  }
  train_classifier(&teacher, student, tokenizer, texts, labels, config, distill_config, log);
}

double predict_proba(const EncoderModel& model, const Tokenizer& tokenizer, std::string_view text) {
  nn::NoGradGuard guard;
  const auto e = tokenizer.encode(text);
  const Tensor p = nn::softmax(model.cls_logits(model.encode(e.ids, e.mask)));
  return p[1];
}

std::vector<double> predict_proba(const EncoderModel& model, const Tokenizer& tokenizer,
                                  std::span<const std::string> texts, std::size_t threads) {
  std::vector<double> out(texts.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, texts.size()));
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < texts.size(); i += threads) out[i] = predict_proba(model, tokenizer, texts[i]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace dtc::tfm
