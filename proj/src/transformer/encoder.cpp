#include <cmath>

#include "dtc/error.hpp"
#include "dtc/nn/ops.hpp"
#include "dtc/rng.hpp"
#include "dtc/transformer.hpp"

namespace dtc::tfm {

using nn::Tensor;

std::string to_string(AttentionKind kind) {
  return kind == AttentionKind::absolute ? "absolute" : "disentangled";
}

AttentionKind attention_kind_from_string(std::string_view s) {
  if (s == "absolute") return AttentionKind::absolute;
  if (s == "disentangled") return AttentionKind::disentangled;
  throw ConfigError("unknown attention kind '" + std::string(s) + "' (absolute | disentangled)");
}

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (ff_dim < 1 || max_len < 1) throw ConfigError("ff_dim and max_len must be positive");
  if (vocab <= Tokenizer::kSpecials) throw ConfigError("vocab must exceed the special tokens");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (kind == AttentionKind::disentangled && rel_window < 1) {
    throw ConfigError("relative window must be at least 1");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"layers", layers},   {"heads", heads}, {"dim", dim},
          {"ff_dim", ff_dim},   {"max_len", max_len}, {"vocab", vocab},
          {"dropout", dropout}, {"attention", tfm::to_string(kind)}, {"rel_window", rel_window}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.kind = attention_kind_from_string(j.at("attention").get<std::string>());
  c.rel_window = j.at("rel_window").get<std::size_t>();
  c.validate();
  return c;
}

namespace {

Tensor normal_param(nn::Shape shape, Rng& rng) {
  std::vector<double> v(nn::numel(shape));
  for (double& x : v) x = rng.normal(0.0, 0.02);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(nn::Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(nn::Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return nn::add_bias(nn::matmul(x, w), b); }

void record(std::vector<std::vector<std::vector<double>>>& dst, std::size_t layer, const Tensor& t) {
  if (dst.size() <= layer) dst.resize(layer + 1);
  dst[layer].emplace_back(t.data().begin(), t.data().end());
}

}  // namespace

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = Rng(seed).substream("init");
  const std::size_t d = config_.dim, ff = config_.ff_dim;
  tok_emb_ = normal_param({config_.vocab, d}, rng);
  if (config_.kind == AttentionKind::absolute) {
    pos_emb_ = normal_param({config_.max_len, d}, rng);
  } else {
    rel_emb_ = normal_param({2 * config_.rel_window + 1, d}, rng);
  }
  emb_ln_gain_ = ones_param({d});
  emb_ln_bias_ = zeros_param({d});
  layers_.resize(config_.layers);
  for (auto& p : layers_) {
    p.wq = normal_param({d, d}, rng);
    p.bq = zeros_param({d});
    p.wk = normal_param({d, d}, rng);
    p.bk = zeros_param({d});
    p.wv = normal_param({d, d}, rng);
    p.bv = zeros_param({d});
    p.wo = normal_param({d, d}, rng);
    p.bo = zeros_param({d});
    if (config_.kind == AttentionKind::disentangled) {
      p.wq_rel = normal_param({d, d}, rng);
      p.wk_rel = normal_param({d, d}, rng);
    }
    p.ln1_gain = ones_param({d});
    p.ln1_bias = zeros_param({d});
    p.w1 = normal_param({d, ff}, rng);
    p.b1 = zeros_param({ff});
    p.w2 = normal_param({ff, d}, rng);
    p.b2 = zeros_param({d});
    p.ln2_gain = ones_param({d});
    p.ln2_bias = zeros_param({d});
  }
  mlm_w_ = normal_param({d, config_.vocab}, rng);
  mlm_b_ = zeros_param({config_.vocab});
  cls_w_ = normal_param({d, 2}, rng);
  cls_b_ = zeros_param({2});
}

nn::NamedTensors EncoderModel::named_parameters() const {
  nn::NamedTensors out;
  out.emplace_back("embeddings.token", tok_emb_);
  if (config_.kind == AttentionKind::absolute) {
    out.emplace_back("embeddings.position", pos_emb_);
  } else {
    out.emplace_back("embeddings.relative", rel_emb_);
  }
  out.emplace_back("embeddings.ln.gain", emb_ln_gain_);
  out.emplace_back("embeddings.ln.bias", emb_ln_bias_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& p = layers_[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.emplace_back(pre + "attn.wq", p.wq);
    out.emplace_back(pre + "attn.bq", p.bq);
    out.emplace_back(pre + "attn.wk", p.wk);
    out.emplace_back(pre + "attn.bk", p.bk);
    out.emplace_back(pre + "attn.wv", p.wv);
    out.emplace_back(pre + "attn.bv", p.bv);
    out.emplace_back(pre + "attn.wo", p.wo);
    out.emplace_back(pre + "attn.bo", p.bo);
    if (config_.kind == AttentionKind::disentangled) {
      out.emplace_back(pre + "attn.wq_rel", p.wq_rel);
      out.emplace_back(pre + "attn.wk_rel", p.wk_rel);
    }
    out.emplace_back(pre + "ln1.gain", p.ln1_gain);
    out.emplace_back(pre + "ln1.bias", p.ln1_bias);
    out.emplace_back(pre + "ff.w1", p.w1);
    out.emplace_back(pre + "ff.b1", p.b1);
    out.emplace_back(pre + "ff.w2", p.w2);
    out.emplace_back(pre + "ff.b2", p.b2);
    out.emplace_back(pre + "ln2.gain", p.ln2_gain);
    out.emplace_back(pre + "ln2.bias", p.ln2_bias);
  }
  out.emplace_back("mlm.weight", mlm_w_);
  out.emplace_back("mlm.bias", mlm_b_);
  out.emplace_back("cls.weight", cls_w_);
  out.emplace_back("cls.bias", cls_b_);
  return out;
}

std::vector<Tensor> EncoderModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

Tensor EncoderModel::maybe_dropout(const Tensor& x, const ForwardOptions& opts, std::uint64_t& site) const {
  if (!opts.train || config_.dropout == 0.0) return x;
  return nn::dropout(x, config_.dropout, splitmix64(opts.dropout_seed + 0x9e3779b97f4a7c15ULL * ++site));
}

Tensor EncoderModel::attention(std::size_t layer, const Tensor& hidden, std::span<const std::uint8_t> mask,
                               const ForwardOptions& opts, AttentionProbe* probe) const {
  (void)opts;
  if (layer >= layers_.size()) throw DimensionError("attention: no layer " + std::to_string(layer));
  if (hidden.rank() != 2 || hidden.cols() != config_.dim) {
    throw DimensionError("attention: hidden shape " + nn::shape_str(hidden.shape()) + " vs model dim " +
                         std::to_string(config_.dim));
  }
  const std::size_t seq = hidden.rows();
  if (mask.size() != seq) {
    throw DimensionError("attention: mask length " + std::to_string(mask.size()) + " vs hidden shape " +
                         nn::shape_str(hidden.shape()));
  }
  const auto& p = layers_[layer];
  const std::size_t dh = config_.dim / config_.heads;
  const bool dis = config_.kind == AttentionKind::disentangled;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dis ? 3 * dh : dh));

  const Tensor q = linear(hidden, p.wq, p.bq);
  const Tensor k = linear(hidden, p.wk, p.bk);
  const Tensor v = linear(hidden, p.wv, p.bv);
  Tensor qr, kr;
  if (dis) {
    qr = nn::matmul(rel_emb_, p.wq_rel);
    kr = nn::matmul(rel_emb_, p.wk_rel);
  }

  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor qh = nn::slice_cols(q, h * dh, dh);
    const Tensor kh = nn::slice_cols(k, h * dh, dh);
    Tensor logits = nn::matmul(qh, nn::transpose(kh));
    if (dis) {
      const std::size_t kw = config_.rel_window;
      const Tensor c2p = nn::gather_relative(nn::matmul(qh, nn::transpose(nn::slice_cols(kr, h * dh, dh))), seq,
                                             kw, false);
      const Tensor p2c = nn::gather_relative(nn::matmul(kh, nn::transpose(nn::slice_cols(qr, h * dh, dh))), seq,
                                             kw, true);
      logits = nn::add(nn::add(logits, c2p), p2c);
    }
    logits = nn::scale(logits, inv_scale);
    const Tensor weights = nn::masked_softmax(logits, mask);
    if (probe) {
      record(probe->logits, layer, logits);
      record(probe->weights, layer, weights);
    }
    heads.push_back(nn::matmul(weights, nn::slice_cols(v, h * dh, dh)));
  }
  const Tensor ctx = heads.size() == 1 ? heads.front() : nn::concat_cols(heads);
  return linear(ctx, p.wo, p.bo);
}

Tensor EncoderModel::layer_forward(std::size_t layer, const Tensor& x, std::span<const std::uint8_t> mask,
                                   const ForwardOptions& opts, std::uint64_t& site, AttentionProbe* probe) const {
  const auto& p = layers_[layer];
  const Tensor a = maybe_dropout(attention(layer, x, mask, opts, probe), opts, site);
  const Tensor h = nn::layer_norm(nn::add(x, a), p.ln1_gain, p.ln1_bias);
  const Tensor f = maybe_dropout(linear(nn::gelu(linear(h, p.w1, p.b1)), p.w2, p.b2), opts, site);
  return nn::layer_norm(nn::add(h, f), p.ln2_gain, p.ln2_bias);
}

Tensor EncoderModel::encode(std::span<const int> ids, std::span<const std::uint8_t> mask,
                            const ForwardOptions& opts, AttentionProbe* probe) const {
  if (ids.empty()) throw DimensionError("encode: empty sequence");
  if (ids.size() != mask.size()) {
    throw DimensionError("encode: " + std::to_string(ids.size()) + " ids vs mask length " +
                         std::to_string(mask.size()));
  }
  if (ids.size() > config_.max_len) {
    throw DimensionError("encode: sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                         std::to_string(config_.max_len));
  }
  Tensor x = nn::embedding(tok_emb_, ids);
  if (config_.kind == AttentionKind::absolute) {
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    x = nn::add(x, nn::embedding(pos_emb_, pos));
  }
  x = nn::layer_norm(x, emb_ln_gain_, emb_ln_bias_);
  std::uint64_t site = 0;
  x = maybe_dropout(x, opts, site);
  for (std::size_t l = 0; l < layers_.size(); ++l) x = layer_forward(l, x, mask, opts, site, probe);
  return x;
}

Tensor EncoderModel::mlm_logits(const Tensor& hidden, std::span<const std::size_t> positions) const {
  return linear(nn::select_rows(hidden, positions), mlm_w_, mlm_b_);
}

Tensor EncoderModel::cls_logits(const Tensor& hidden) const {
  const std::size_t first = 0;
  return linear(nn::select_rows(hidden, std::span(&first, 1)), cls_w_, cls_b_);
}

void EncoderModel::copy_from(const EncoderModel& other) {
  if (!(other.config_ == config_)) throw ConfigError("copy_from: encoder configs differ");
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
  }
}

void EncoderModel::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  nlohmann::json m = meta;
  m["encoder"] = config_.to_json();
  nn::save_checkpoint(path, named_parameters(), m);
}

EncoderModel EncoderModel::load(const std::filesystem::path& path, nlohmann::json* meta) {
  const auto manifest = nn::read_checkpoint_manifest(path);
  const auto& stored = manifest.at("meta");
  if (!stored.contains("encoder")) throw SchemaError(path.string() + ": checkpoint has no encoder config");
  EncoderModel model(EncoderConfig::from_json(stored.at("encoder")), 0);
  auto params = model.named_parameters();
  auto m = nn::load_checkpoint(path, params);
  if (meta) *meta = std::move(m);
  return model;
}

EncoderModel EncoderModel::student_of(const EncoderModel& teacher, std::span<const std::size_t> layers) {
  if (layers.empty() || layers.size() >= teacher.config_.layers) {
    throw ConfigError("student must have fewer layers than its teacher, and at least one");
  }
  EncoderConfig cfg = teacher.config_;
  cfg.layers = layers.size();
  EncoderModel student(cfg, 0);
  auto copy = [](const Tensor& src, Tensor& dst) {
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  };
  copy(teacher.tok_emb_, student.tok_emb_);
  if (cfg.kind == AttentionKind::absolute) {
    copy(teacher.pos_emb_, student.pos_emb_);
  } else {
    copy(teacher.rel_emb_, student.rel_emb_);
  }
  copy(teacher.emb_ln_gain_, student.emb_ln_gain_);
  copy(teacher.emb_ln_bias_, student.emb_ln_bias_);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] >= teacher.layers_.size()) {
      throw ConfigError("teacher has no layer " + std::to_string(layers[i]));
    }
    const auto& s = teacher.layers_[layers[i]];
    auto& d = student.layers_[i];
    for (auto [src, dst] : {std::pair{&s.wq, &d.wq}, {&s.bq, &d.bq}, {&s.wk, &d.wk}, {&s.bk, &d.bk},
                            {&s.wv, &d.wv}, {&s.bv, &d.bv}, {&s.wo, &d.wo}, {&s.bo, &d.bo},
                            {&s.ln1_gain, &d.ln1_gain}, {&s.ln1_bias, &d.ln1_bias}, {&s.w1, &d.w1},
                            {&s.b1, &d.b1}, {&s.w2, &d.w2}, {&s.b2, &d.b2}, {&s.ln2_gain, &d.ln2_gain},
                            {&s.ln2_bias, &d.ln2_bias}}) {
      copy(*src, *dst);
    }
    if (cfg.kind == AttentionKind::disentangled) {
      copy(s.wq_rel, d.wq_rel);
      copy(s.wk_rel, d.wk_rel);
    }
  }
  copy(teacher.mlm_w_, student.mlm_w_);
  copy(teacher.mlm_b_, student.mlm_b_);
  copy(teacher.cls_w_, student.cls_w_);
  copy(teacher.cls_b_, student.cls_b_);
  return student;
}

}  // namespace dtc::tfm
