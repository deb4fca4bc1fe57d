#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "dtc/corpus.hpp"
#include "dtc/error.hpp"
#include "dtc/nn/ops.hpp"
#include "dtc/synthetic.hpp"
#include "dtc/transformer.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace dtc;
using namespace dtc::tfm;
using dtc::nn::Tensor;

namespace {

EncoderConfig tiny(AttentionKind kind = AttentionKind::absolute) {
  EncoderConfig c;
  c.layers = 1;
  c.heads = 2;
  c.dim = 8;
  c.ff_dim = 16;
  c.max_len = 16;
  c.vocab = 20;
  c.dropout = 0.0;
  c.kind = kind;
  c.rel_window = 2;
  return c;
}

Tensor param(const EncoderModel& m, const std::string& name) {
  for (const auto& [n, t] : m.named_parameters()) {
    if (n == name) return t;
  }
  FAIL("no parameter " << name);
  return {};
}

std::vector<double> row_times(const std::vector<double>& x, const Tensor& w, const Tensor& b) {
  std::vector<double> out(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double s = b[j];
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w.at(i, j);
    out[j] = s;
  }
  return out;
}

const Dataset& synthetic_tweets() {
  static const Dataset d = [] {
    SyntheticOptions o;
    o.rows = 700;
    o.seed = 5;
    return build_dataset(parse_csv(synthetic_corpus_csv(o)));
  }();
  return d;
}

bool same_parameters(const EncoderModel& a, const EncoderModel& b) {
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto x = pa[i].second.data(), y = pb[i].second.data();
    if (pa[i].first != pb[i].first || x.size() != y.size()) return false;
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------- tokenizer

TEST_CASE("tokenizer examples") {
  const std::vector<std::string> one = {"fire fire", "fire"};
  const auto t = Tokenizer::train(one, 5, 64);
  CHECK(t.tokens() == std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[MASK]", "fire"});

  const std::vector<std::string> corpus = {"fire help now", "help fire", "zeta"};
  const auto tok = Tokenizer::train(corpus, 100, 64);
  const auto e = tok.encode("fire help");
  CHECK(e.ids == std::vector<int>{Tokenizer::kCls, tok.id_of("fire"), tok.id_of("help")});
  CHECK(e.mask == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(tok.encode("").ids == std::vector<int>{Tokenizer::kCls});
  CHECK(tok.encode("unseen").ids == std::vector<int>{Tokenizer::kCls, Tokenizer::kUnk});

  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "fire ";
  CHECK(tok.encode(long_text).ids.size() == 64);

  CHECK_THROWS_AS(Tokenizer::train(corpus, 4, 64), ConfigError);
}

TEST_CASE("tokenizer order is frequency then lexicographic") {
  const std::vector<std::string> corpus = {"bb aa cc", "cc bb", "cc dd"};
  const auto tok = Tokenizer::train(corpus, 7, 64);
  // cc x3, bb x2, then aa and dd tie at 1 and aa wins the last slot.
  CHECK(tok.tokens() == std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[MASK]", "cc", "bb", "aa"});
  const std::vector<std::string> probe = {"aa dd", "cc"};
  CHECK(tok.unk_rate(probe) == doctest::Approx(1.0 / 3));
}

TEST_CASE("tokenizer save and load round-trip") {
  testing::TempDir dir("tok");
  const std::vector<std::string> corpus = {"fire help now", "help fire", "zeta"};
  const auto tok = Tokenizer::train(corpus, 100, 32);
  tok.save(dir / "v.txt");
  CHECK(testing::read_file(dir / "v.txt").rfind("[PAD]\t0\n[UNK]\t1\n", 0) == 0);
  const auto back = Tokenizer::load(dir / "v.txt", 32);
  CHECK(back.tokens() == tok.tokens());
  testing::write_file(dir / "bad.txt", "[PAD]\t0\n[UNK]\t2\n");
  CHECK_THROWS_AS(Tokenizer::load(dir / "bad.txt", 32), ParseError);
}

// ------------------------------------------------------------------ masking

TEST_CASE("mlm masking selects floor(rate * maskable) positions") {
  std::vector<std::string> words;
  std::string text;
  for (int i = 0; i < 20; ++i) text += "w" + std::to_string(i) + " ";
  const std::vector<std::string> corpus = {text};
  const auto tok = Tokenizer::train(corpus, 100, 64);
  const std::vector<std::string> one = {text};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto b = make_mlm_batch(tok, one, 0.15, seed);
    std::size_t selected = 0;
    for (int t : b.targets[0]) selected += t >= 0;
    CHECK(selected == 3);
  }
  const std::vector<std::string> short_text = {"w1"};
  const auto b = make_mlm_batch(tok, short_text, 0.15, 1);
  CHECK(b.targets[0][1] >= 0);  // at least one when anything is maskable
  CHECK_THROWS_AS(make_mlm_batch(tok, one, 0.0, 1), ConfigError);
}

TEST_CASE("mlm masking never selects [CLS] or padding") {
  const std::vector<std::string> corpus = {"aa bb cc dd ee ff", "aa bb"};
  const auto tok = Tokenizer::train(corpus, 100, 64);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto b = make_mlm_batch(tok, corpus, 0.4, seed);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(b.targets[i][0] == -1);
      CHECK(b.input_ids[i][0] == Tokenizer::kCls);
      for (std::size_t j = 0; j < b.targets[i].size(); ++j) {
        if (b.attention_mask[i][j] == 0) {
          CHECK(b.targets[i][j] == -1);
          CHECK(b.input_ids[i][j] == Tokenizer::kPad);
        }
      }
    }
    CHECK(b.input_ids[1].size() == 7);
  }
}

TEST_CASE("mlm replacement fractions are 80/10/10") {
  std::string text;
  for (int i = 0; i < 40; ++i) text += "t" + std::to_string(i) + " ";
  // A large vocabulary keeps random replacements from hitting the original.
  std::vector<std::string> corpus = {text};
  std::string extra;
  for (int i = 0; i < 3000; ++i) extra += "x" + std::to_string(i) + " ";
  corpus.push_back(extra);
  const auto tok = Tokenizer::train(corpus, 4000, 64);
  const std::vector<std::string> one = {text};
  std::size_t masked = 0, kept = 0, random = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto b = make_mlm_batch(tok, one, 0.15, seed);
    for (std::size_t j = 0; j < b.targets[0].size(); ++j) {
      const int t = b.targets[0][j];
      if (t < 0) continue;
      const int in = b.input_ids[0][j];
      if (in == Tokenizer::kMask) {
        ++masked;
      } else if (in == t) {
        ++kept;
      } else {
        CHECK(in >= static_cast<int>(Tokenizer::kSpecials));
        ++random;
      }
    }
  }
  const double n = static_cast<double>(masked + kept + random);
  CHECK(std::abs(masked / n - 0.8) < 0.02);
  CHECK(std::abs(kept / n - 0.1) < 0.02);
  CHECK(std::abs(random / n - 0.1) < 0.02);
}

// ---------------------------------------------------------------- encoder

TEST_CASE("encoder config validation and json") {
  auto c = tiny();
  CHECK_NOTHROW(c.validate());
  CHECK(EncoderConfig::from_json(c.to_json()) == c);
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(attention_kind_from_string("disentangled") == AttentionKind::disentangled);
  CHECK_THROWS_AS(attention_kind_from_string("rotary"), ConfigError);
}

TEST_CASE("attention over one token is the value projection") {
  for (auto kind : {AttentionKind::absolute, AttentionKind::disentangled}) {
    const EncoderModel m(tiny(kind), 3);
    const std::vector<double> x = {0.3, -1.2, 0.5, 0.9, -0.1, 0.0, 2.0, -0.7};
    const Tensor hidden = Tensor::from({1, 8}, x);
    const std::vector<std::uint8_t> mask = {1};
    const Tensor out = m.attention(0, hidden, mask);
    const auto v = row_times(x, param(m, "layer0.attn.wv"), param(m, "layer0.attn.bv"));
    const auto want = row_times(v, param(m, "layer0.attn.wo"), param(m, "layer0.attn.bo"));
    for (std::size_t j = 0; j < 8; ++j) CHECK(out[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
}

TEST_CASE("attention weights are normalized and exactly zero on padding") {
  for (auto kind : {AttentionKind::absolute, AttentionKind::disentangled}) {
    auto cfg = tiny(kind);
    cfg.layers = 2;
    const EncoderModel m(cfg, 4);
    const std::vector<int> ids = {2, 7, 9, 0, 0};
    const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
    AttentionProbe probe;
    m.encode(ids, mask, {}, &probe);
    REQUIRE(probe.weights.size() == 2);
    for (const auto& layer : probe.weights) {
      REQUIRE(layer.size() == 2);
      for (const auto& w : layer) {
        for (std::size_t i = 0; i < 5; ++i) {
          double total = 0;
          for (std::size_t j = 0; j < 5; ++j) total += w[i * 5 + j];
          CHECK(std::abs(total - 1.0) < 1e-9);
          CHECK(w[i * 5 + 3] == 0.0);
          CHECK(w[i * 5 + 4] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("disentangled attention with a zero relative table keeps only content-to-content logits") {
  const EncoderModel dis(tiny(AttentionKind::disentangled), 8);
  auto rel = param(dis, "embeddings.relative");
  for (double& v : rel.mutable_data()) v = 0.0;

  Rng rng(1);
  std::vector<double> x(4 * 8);
  for (double& v : x) v = rng.normal();
  const Tensor hidden = Tensor::from({4, 8}, x);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1};
  AttentionProbe dp;
  dis.attention(0, hidden, mask, {}, &dp);

  // Hand-computed content logits, scaled by 1/sqrt(3 dh).
  const auto wq = param(dis, "layer0.attn.wq"), bq = param(dis, "layer0.attn.bq");
  const auto wk = param(dis, "layer0.attn.wk"), bk = param(dis, "layer0.attn.bk");
  std::vector<std::vector<double>> q, k;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::vector<double> xi(x.begin() + i * 8, x.begin() + (i + 1) * 8);
    q.push_back(row_times(xi, wq, bq));
    k.push_back(row_times(xi, wk, bk));
  }
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += q[i][h * 4 + c] * k[j][h * 4 + c];
        CHECK(dp.logits[0][h][i * 4 + j] == doctest::Approx(s / std::sqrt(12.0)).epsilon(1e-12));
      }
    }
  }

  // Same attention weights in an absolute-kind layer differ only by the scale.
  EncoderModel abs_model(tiny(AttentionKind::absolute), 9);
  for (const char* name : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"}) {
    const std::string full = std::string("layer0.attn.") + name;
    auto dst = param(abs_model, full);
    const auto src = param(dis, full).data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
  AttentionProbe ap;
  abs_model.attention(0, hidden, mask, {}, &ap);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t e = 0; e < 16; ++e) {
      CHECK(ap.logits[0][h][e] / std::sqrt(3.0) == doctest::Approx(dp.logits[0][h][e]).epsilon(1e-12));
    }
  }
}

TEST_CASE("full model gradients match finite differences") {
  for (auto kind : {AttentionKind::absolute, AttentionKind::disentangled}) {
    CAPTURE(to_string(kind));
    auto cfg = tiny(kind);
    cfg.dropout = 0.1;
    const EncoderModel m(cfg, 11);
    const std::vector<int> ids = {2, 5, 17, 3, 9, 12};
    const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 1};
    const std::vector<std::size_t> positions = {1, 3, 4};
    const std::vector<int> mlm_targets = {6, 19, 4};
    const int label = 1;
    auto loss = [&] {
      const Tensor h = m.encode(ids, mask, {true, 1234});
      return nn::add(nn::cross_entropy(m.cls_logits(h), std::span(&label, 1)),
                     nn::cross_entropy(m.mlm_logits(h, positions), mlm_targets));
    };
    const auto r = testing::grad_check(loss, m.named_parameters());
    INFO("worst " << r.worst);
    CHECK(r.max_rel_error < 1e-3);
    CHECK(r.checked == m.parameter_count());
  }
}

TEST_CASE("forward is deterministic and dropout only acts in training") {
  auto cfg = tiny();
  cfg.dropout = 0.3;
  const EncoderModel m(cfg, 2);
  const std::vector<int> ids = {2, 5, 6};
  const std::vector<std::uint8_t> mask = {1, 1, 1};
  const auto a = m.encode(ids, mask), b = m.encode(ids, mask);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  const auto t1 = m.encode(ids, mask, {true, 5}), t2 = m.encode(ids, mask, {true, 5});
  CHECK(std::equal(t1.data().begin(), t1.data().end(), t2.data().begin()));
  CHECK_FALSE(std::equal(t1.data().begin(), t1.data().end(), a.data().begin()));
}

TEST_CASE("checkpoint save and load keep predictions bit-identical") {
  testing::TempDir dir("enc");
  for (auto kind : {AttentionKind::absolute, AttentionKind::disentangled}) {
    const EncoderModel m(tiny(kind), 21);
    const std::vector<std::string> corpus = {"aa bb cc", "dd ee"};
    const auto tok = Tokenizer::train(corpus, 20, 16);
    m.save(dir / "m.ckpt", {{"tag", "x"}});
    nlohmann::json meta;
    const auto back = EncoderModel::load(dir / "m.ckpt", &meta);
    CHECK(meta.at("tag") == "x");
    CHECK(back.config() == m.config());
    CHECK(same_parameters(m, back));
    for (const auto& t : {"aa bb", "ee dd cc", ""}) CHECK(predict_proba(back, tok, t) == predict_proba(m, tok, t));
  }
}

TEST_CASE("student_of copies embeddings, heads and the chosen layers") {
  auto cfg = tiny();
  cfg.layers = 4;
  const EncoderModel teacher(cfg, 5);
  const std::vector<std::size_t> layers = {0, 2};
  const auto student = EncoderModel::student_of(teacher, layers);
  CHECK(student.config().layers == 2);
  const auto a = param(student, "layer1.attn.wq").data();
  const auto b = param(teacher, "layer2.attn.wq").data();
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
  const auto c = param(student, "cls.weight").data();
  const auto d = param(teacher, "cls.weight").data();
  CHECK(std::equal(c.begin(), c.end(), d.begin()));
  const std::vector<std::size_t> bad = {0, 7};
  CHECK_THROWS_AS(EncoderModel::student_of(teacher, bad), ConfigError);
}

// ---------------------------------------------------------------- training

TEST_CASE("mlm pretraining starts near ln V and improves") {
  const auto texts = texts_of(synthetic_tweets());
  const std::vector<std::string> sample(texts.begin(), texts.begin() + 500);
  const auto tok = Tokenizer::train(sample, 400, 32);
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.dim = 32;
  cfg.ff_dim = 64;
  cfg.max_len = 32;
  cfg.vocab = tok.size();
  EncoderModel m(cfg, 1);
  TrainingLog log;
  MlmConfig mc;
  mc.steps = 200;
  mc.batch_size = 16;
  mc.adam.lr = 1e-3;
  mc.seed = 3;
  pretrain_mlm(m, tok, sample, mc, &log);
  REQUIRE(log.size() == 200);
  const double ln_v = std::log(static_cast<double>(tok.size()));
  CHECK(std::abs(log.front().loss - ln_v) < 0.1 * ln_v);
  double tail = 0;
  for (std::size_t i = 180; i < 200; ++i) tail += log[i].loss / 20;
  CHECK(tail < log.front().loss);

  // Same seed, same checkpoint.
  EncoderModel again(cfg, 1);
  pretrain_mlm(again, tok, sample, mc);
  CHECK(same_parameters(m, again));

  CHECK_THROWS_AS(pretrain_mlm(m, tok, std::vector<std::string>{}, mc), DataError);
}

TEST_CASE("fine-tuning starts near ln 2 and fits a separable toy set") {
  const std::vector<std::string> texts = {"fire flood smoke", "flood evacuate fire", "smoke fire help",
                                          "quake fire rescue", "flood rescue now", "happy sunny song",
                                          "song lunch happy", "sunny beach lunch", "lunch happy beach",
                                          "beach song sunny"};
  const std::vector<int> labels = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  const auto tok = Tokenizer::train(texts, 50, 16);
  auto cfg = tiny();
  cfg.dim = 16;
  cfg.vocab = tok.size();
  EncoderModel m(cfg, 7);
  TrainingLog log;
  FinetuneConfig fc;
  fc.steps = 200;
  fc.batch_size = 10;
  fc.adam.lr = 1e-3;
  fc.seed = 1;
  finetune_classifier(m, tok, texts, labels, fc, &log);
  CHECK(std::abs(log.front().loss - std::log(2.0)) < 0.1 * std::log(2.0));
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK((predict_proba(m, tok, texts[i]) >= 0.5) == (labels[i] == 1));

  // The probability pair sums to one.
  const auto e = tok.encode(texts[0]);
  const auto p = nn::softmax(m.cls_logits(m.encode(e.ids, e.mask)));
  CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-9);
  CHECK(predict_proba(m, tok, "") >= 0.0);
  CHECK(predict_proba(m, tok, texts[3]) == predict_proba(m, tok, texts[3]));
  const auto batch = predict_proba(m, tok, texts, 3);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(batch[i] == predict_proba(m, tok, texts[i]));

  const std::vector<int> one_class(10, 1);
  CHECK_THROWS_AS(finetune_classifier(m, tok, texts, one_class, fc), DataError);
}

TEST_CASE("distillation limits") {
  const std::vector<std::string> texts = {"fire flood", "flood help", "sunny song", "song lunch"};
  const std::vector<int> labels = {1, 1, 0, 0};
  const auto tok = Tokenizer::train(texts, 20, 16);
  auto cfg = tiny();
  cfg.dropout = 0.1;
  cfg.layers = 2;
  FinetuneConfig fc;
  fc.steps = 15;
  fc.batch_size = 2;
  fc.seed = 9;
  EncoderModel teacher(cfg, 1);
  finetune_classifier(teacher, tok, texts, labels, fc);

  SUBCASE("alpha = 1 reproduces fine-tuning step for step") {
    const std::vector<std::size_t> layers = {0};
    auto a = EncoderModel::student_of(teacher, layers);
    auto b = EncoderModel::student_of(teacher, layers);
    TrainingLog la, lb;
    finetune_classifier(a, tok, texts, labels, fc, &la);
    distill(teacher, b, tok, texts, labels, fc, {.temperature = 2.0, .alpha = 1.0}, &lb);
    CHECK(same_parameters(a, b));
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].loss == lb[i].loss);
  }
  SUBCASE("a copied student has zero KL at step 0") {
    auto plain = cfg;
    plain.dropout = 0.0;
    EncoderModel t2(plain, 4);
    finetune_classifier(t2, tok, texts, labels, fc);
    EncoderModel copy(plain, 99);
    copy.copy_from(t2);
    TrainingLog log;
    distill(t2, copy, tok, texts, labels, fc, {.temperature = 2.0, .alpha = 0.0}, &log);
    CHECK(std::abs(log.front().loss) < 1e-12);
  }
  SUBCASE("temperature must be positive") {
    const std::vector<std::size_t> layers = {1};
    auto s = EncoderModel::student_of(teacher, layers);
    CHECK_THROWS_AS(distill(teacher, s, tok, texts, labels, fc, {.temperature = 0.0}), ConfigError);
    CHECK_THROWS_AS(distill(teacher, s, tok, texts, labels, fc, {.temperature = -1.0}), ConfigError);
  }
}

TEST_CASE("log csv format") {
  std::ostringstream os;
  write_log_csv(os, {{0, 0.5}, {1, 0.1}});
  CHECK(os.str() == "step,loss\n0,0.5\n1,0.10000000000000001\n");
}

TEST_CASE("presets") {
  CHECK(preset_names() == std::vector<std::string>{"bert-toy", "roberta-toy", "distil-toy", "deberta-toy"});
  const auto bert = preset("bert-toy");
  CHECK(bert.encoder.layers == 4);
  CHECK(bert.encoder.dim == 64);
  CHECK(bert.encoder.heads == 4);
  CHECK(bert.encoder.kind == AttentionKind::absolute);
  CHECK(bert.pretrain);
  CHECK(preset("roberta-toy").mlm.steps > bert.mlm.steps);
  const auto distil = preset("distil-toy");
  CHECK(distil.encoder.layers == 2);
  CHECK(distil.teacher == "bert-toy");
  const auto deberta = preset("deberta-toy");
  CHECK(deberta.encoder.kind == AttentionKind::disentangled);
  CHECK(deberta.encoder.rel_window == 8);
  try {
    preset("gpt-toy");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("deberta-toy") != std::string::npos);
  }
}
