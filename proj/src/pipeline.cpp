#include "dtc/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "dtc/error.hpp"

namespace dtc {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ArtifactWriter::ArtifactWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

void ArtifactWriter::write(const std::string& rel, const std::string& content) {
  const fs::path p = root_ / rel;
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  out.close();
  if (!out) throw Error("write failed for " + p.string());
  hashes_[rel] = sha256_hex(content);
}

void ArtifactWriter::record(const std::string& rel) { hashes_[rel] = sha256_hex(read_bytes(root_ / rel)); }

void ArtifactWriter::write_manifest(const std::string& command, const nlohmann::json& config) {
  const fs::path p = root_ / "manifest.json";
  nlohmann::json m = {{"format", "dtc-run-manifest"}, {"version", 1}};
  std::set<std::string> commands;
  std::map<std::string, std::string> files;
  if (fs::exists(p)) {
    try {
      const auto old = nlohmann::json::parse(read_bytes(p));
      const auto old_commands = old.value("commands", nlohmann::json::array());
      const auto old_files = old.value("files", nlohmann::json::object());
      for (const auto& c : old_commands) commands.insert(c.get<std::string>());
      for (const auto& [k, v] : old_files.items()) {
        if (fs::exists(root_ / k)) files[k] = v.get<std::string>();
      }
    } catch (const nlohmann::json::exception&) {
      // An unreadable manifest is replaced.
    }
  }
  commands.insert(command);
  for (const auto& [k, v] : hashes_) files[k] = v;
  m["config"] = config;
  m["commands"] = commands;
  m["files"] = files;
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << m.dump(2) << '\n';
  if (!out) throw Error("cannot write " + p.string());
}

std::string to_string(SplitName s) { return s == SplitName::train ? "train" : "test"; }

PreparedData prepare_data(const RunConfig& config) {
  config.validate();
  PreparedData d;
  const auto raw = load_csv(config.dataset.string());
  d.raw_rows = raw.size();
  d.full = build_dataset(raw);
  d.split = stratified_split(d.full, config.split_ratio, *config.seed);
  return d;
}

nlohmann::json write_prepare_artifacts(const PreparedData& data, const RunConfig& config, ArtifactWriter& out) {
  std::ostringstream ds;
  write_dataset_csv(ds, data.full);
  out.write("data/dataset.csv", ds.str());
  auto ids = [](const Dataset& d) {
    std::string s;
    for (const auto& r : d.records) s += std::to_string(r.id) + '\n';
    return s;
  };
  out.write("data/train_ids.txt", ids(data.split.train));
  out.write("data/test_ids.txt", ids(data.split.test));
  auto counts = [](const Dataset& d) {
    return nlohmann::json{{"rows", d.size()},
                          {"class0", d.negative_count},
                          {"class1", d.positive_count},
                          {"class0_fraction", d.empty() ? 0.0 : static_cast<double>(d.negative_count) /
                                                                    static_cast<double>(d.size())}};
  };
  nlohmann::json summary = {
      {"source", config.dataset.string()},
      {"raw_rows", data.raw_rows},
      {"dropped_empty", data.full.dropped_empty},
      {"dropped_duplicates", data.full.dropped_duplicates},
      {"conflicting_duplicates", data.full.conflicting_duplicates},
      {"dataset", counts(data.full)},
      {"train", counts(data.split.train)},
      {"test", counts(data.split.test)},
      {"split_ratio", config.split_ratio},
      {"seed", *config.seed},
  };
  out.write("data/summary.json", summary.dump(2) + "\n");
  return summary;
}

namespace {

std::string log_csv(const std::vector<double>& trace) {
  tfm::TrainingLog log;
  for (std::size_t i = 0; i < trace.size(); ++i) log.push_back({i, trace[i]});
  std::ostringstream os;
  tfm::write_log_csv(os, log);
  return os.str();
}

std::string log_csv(const tfm::TrainingLog& log) {
  std::ostringstream os;
  tfm::write_log_csv(os, log);
  return os.str();
}

class ClassicalScorer final : public ScoringModel {
 public:
  ClassicalScorer(std::string name, TfIdfModel features, bool counts, std::unique_ptr<Classifier> clf,
                  nlohmann::json config)
      : name_(std::move(name)),
        features_(std::move(features)),
        counts_(counts),
        clf_(std::move(clf)),
        config_(std::move(config)) {}

  std::string name() const override { return name_; }
  double threshold() const override { return clf_->threshold(); }
  nlohmann::json config() const override { return config_; }

  std::vector<double> score(const std::vector<std::string>& texts) const override {
    std::vector<double> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      const auto tokens = tokenize(t);
      out.push_back(clf_->score(counts_ ? features_.count_vector(tokens) : features_.transform(tokens)));
    }
    return out;
  }

 private:
  std::string name_;
  TfIdfModel features_;
  bool counts_;
  std::unique_ptr<Classifier> clf_;
  nlohmann::json config_;
};

class TransformerScorer final : public ScoringModel {
 public:
  TransformerScorer(std::string name, tfm::EncoderModel model, tfm::Tokenizer tokenizer, nlohmann::json config)
      : name_(std::move(name)), model_(std::move(model)), tok_(std::move(tokenizer)), config_(std::move(config)) {}

  std::string name() const override { return name_; }
  double threshold() const override { return 0.5; }
  nlohmann::json config() const override { return config_; }
  std::vector<double> score(const std::vector<std::string>& texts) const override {
    return tfm::predict_proba(model_, tok_, texts);
  }

 private:
  std::string name_;
  tfm::EncoderModel model_;
  tfm::Tokenizer tok_;
  nlohmann::json config_;
};

nlohmann::json model_config_echo(const RunConfig& config, const std::string& model) {
  const auto all = config.to_json();
  nlohmann::json echo = {{"model", model}, {"seed", *config.seed}, {"split_ratio", config.split_ratio}};
  if (is_classical(model)) {
    echo["features"] = all.at("features");
    echo["hyperparameters"] = all.at(model);
  }
  return echo;
}

TrainResult train_classical(const RunConfig& config, const std::string& model, const SplitPair& split,
                            ArtifactWriter& out, ReadAudit* audit) {
  const bool trees = model == "rf" || model == "gb" || model == "xgb";
  const bool counts = model == "nb";
  TfIdfOptions opts = config.tfidf;
  if (trees) opts.max_features = std::min(opts.max_features, config.tree_max_features);

  std::vector<TokenSeq> docs;
  TfIdfModel features;
  {
    AuditScope scope(audit, kStageTfidfFit);
    for (const auto& t : texts_of(split.train)) docs.push_back(tokenize(t));
    features = fit_tfidf(docs, opts);
  }

  std::unique_ptr<Classifier> clf;
  std::vector<double> trace;
  {
    AuditScope scope(audit, kStageClassicalFit);
    const auto labels = labels_of(split.train);
    std::vector<SparseVector> x;
    x.reserve(docs.size());
    for (const auto& d : docs) x.push_back(counts ? features.count_vector(d) : features.transform(d));
    const TrainingSet data{x, labels, features.dim()};
    const std::uint64_t seed = *config.seed;
    if (model == "lr") {
      auto m = fit_logistic(data, config.lr);
      trace = m.loss_trace();
      clf = std::make_unique<LinearModel>(std::move(m));
    } else if (model == "svm") {
      SvmConfig c = config.svm;
      c.seed = seed;
      auto m = fit_linear_svm(data, c);
      trace = m.loss_trace();
      clf = std::make_unique<LinearModel>(std::move(m));
    } else if (model == "nb") {
      clf = std::make_unique<NaiveBayesModel>(fit_naive_bayes(data, config.nb_alpha));
    } else if (model == "rf") {
      ForestConfig c = config.rf;
      c.seed = seed;
      clf = std::make_unique<TreeEnsemble>(fit_random_forest(data, c));
    } else if (model == "gb") {
      auto m = fit_gradient_boosting(data, config.gb);
      trace = m.loss_trace();
      clf = std::make_unique<TreeEnsemble>(std::move(m));
    } else {
      auto m = fit_xgboost_like(data, config.xgb);
      trace = m.loss_trace();
      clf = std::make_unique<TreeEnsemble>(std::move(m));
    }
  }

  const auto echo = model_config_echo(config, model);
  const nlohmann::json artifact = {
      {"format", "dtc-model"},
      {"version", 1},
      {"name", model},
      {"family", "classical"},
      {"config", echo},
      {"features", {{"kind", counts ? "counts" : "tfidf"}, {"model", features.to_json()}}},
      {"classifier", clf->to_json()},
  };
  TrainResult result;
  const std::string base = "models/" + model;
  out.write(base + ".json", artifact.dump() + "\n");
  out.write(base + ".describe.txt", clf->describe());
  result.files = {base + ".json", base + ".describe.txt"};
  if (!trace.empty()) {
    out.write(base + ".train_log.csv", log_csv(trace));
    result.files.push_back(base + ".train_log.csv");
  }
  result.model = std::make_unique<ClassicalScorer>(model, std::move(features), counts, std::move(clf), echo);
  return result;
}

TrainResult train_transformer(const RunConfig& config, const std::string& model, const SplitPair& split,
                              ArtifactWriter& out, ReadAudit* audit) {
  const tfm::Preset p = resolve_preset(config, model);
  const std::uint64_t seed = *config.seed;
  tfm::FinetuneConfig ft = p.finetune;
  ft.seed = seed;
  tfm::TrainingLog mlm_log, ft_log;
  nlohmann::json meta = {{"name", model}, {"preset", p.name}, {"seed", seed}};
  std::optional<tfm::EncoderModel> trained;
  tfm::Tokenizer tokenizer;

  if (p.teacher) {
    const auto teacher_ckpt = out.path("models/" + *p.teacher + ".ckpt");
    const auto teacher_vocab = out.path("models/" + *p.teacher + ".vocab");
    if (!fs::exists(teacher_ckpt) || !fs::exists(teacher_vocab)) {
      throw ConfigError(model + " needs a trained " + *p.teacher + " teacher: " + teacher_ckpt.string() +
                        " not found (run `train " + *p.teacher + "` first)");
    }
    nlohmann::json teacher_meta;
    const auto teacher = tfm::EncoderModel::load(teacher_ckpt, &teacher_meta);
    tokenizer = tfm::Tokenizer::load(teacher_vocab, teacher.config().max_len);
    auto student = tfm::EncoderModel::student_of(teacher, p.student_layers);
    std::vector<std::string> texts;
    std::vector<int> labels;
    {
      AuditScope scope(audit, kStageFinetune);
      texts = texts_of(split.train);
      labels = labels_of(split.train);
    }
    tfm::distill(teacher, student, tokenizer, texts, labels, ft, p.distill, &ft_log);
    meta["pretrained"] = teacher_meta.value("pretrained", false);
    meta["teacher"] = *p.teacher;
    meta["teacher_sha256"] = sha256_hex(read_bytes(teacher_ckpt));
    meta["student_layers"] = p.student_layers;
    meta["distill"] = {{"alpha", p.distill.alpha}, {"temperature", p.distill.temperature}};
    trained.emplace(std::move(student));
  } else {
    {
      AuditScope scope(audit, kStageTokenizer);
      const auto texts = texts_of(split.train);
      tokenizer = tfm::Tokenizer::train(texts, p.vocab_size, p.encoder.max_len);
    }
    tfm::EncoderConfig enc = p.encoder;
    enc.vocab = tokenizer.size();
    tfm::EncoderModel m(enc, seed);
    if (p.pretrain) {
      tfm::MlmConfig mlm = p.mlm;
      mlm.seed = seed;
      std::vector<std::string> texts;
      {
        AuditScope scope(audit, kStagePretrain);
        texts = texts_of(split.train);
      }
      tfm::pretrain_mlm(m, tokenizer, texts, mlm, &mlm_log);
      meta["mlm_steps"] = mlm.steps;
    }
    std::vector<std::string> texts;
    std::vector<int> labels;
    {
      AuditScope scope(audit, kStageFinetune);
      texts = texts_of(split.train);
      labels = labels_of(split.train);
    }
    meta["unk_rate_train"] = tokenizer.unk_rate(texts);
    tfm::finetune_classifier(m, tokenizer, texts, labels, ft, &ft_log);
    meta["pretrained"] = p.pretrain;
    trained.emplace(std::move(m));
  }
  meta["finetune_steps"] = ft.steps;
  meta["batch_size"] = ft.batch_size;
  meta["lr"] = ft.adam.lr;

  TrainResult result;
  const std::string base = "models/" + model;
  fs::create_directories(out.path("models"));
  trained->save(out.path(base + ".ckpt"), meta);
  out.record(base + ".ckpt");
  tokenizer.save(out.path(base + ".vocab"));
  out.record(base + ".vocab");
  out.write(base + ".train_log.csv", log_csv(ft_log));
  result.files = {base + ".ckpt", base + ".vocab", base + ".train_log.csv"};
  if (!mlm_log.empty()) {
    out.write(base + ".mlm_log.csv", log_csv(mlm_log));
    result.files.push_back(base + ".mlm_log.csv");
  }
  meta["encoder"] = trained->config().to_json();
  result.model = std::make_unique<TransformerScorer>(model, std::move(*trained), std::move(tokenizer), meta);
  return result;
}

void require_known(const std::string& model) {
  const auto& all = all_model_names();
  if (std::find(all.begin(), all.end(), model) == all.end()) {
    std::string valid;
    for (const auto& n : all) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown model '" + model + "' (valid: " + valid + ")");
  }
}

}  // namespace

tfm::Preset resolve_preset(const RunConfig& config, const std::string& model) {
  tfm::Preset p = tfm::preset(model);
  const auto& o = config.transformer;
  if (o.mlm_steps) p.mlm.steps = *o.mlm_steps;
  if (o.finetune_steps) p.finetune.steps = *o.finetune_steps;
  if (o.batch_size) p.mlm.batch_size = p.finetune.batch_size = *o.batch_size;
  if (o.lr) p.mlm.adam.lr = p.finetune.adam.lr = *o.lr;
  if (o.pretrain && !p.teacher) p.pretrain = *o.pretrain;
  if (o.distill_alpha) p.distill.alpha = *o.distill_alpha;
  if (o.distill_temperature) p.distill.temperature = *o.distill_temperature;
  if (o.vocab_size) p.vocab_size = *o.vocab_size;
  return p;
}

TrainResult train_model(const RunConfig& config, const std::string& model, const SplitPair& split,
                        ArtifactWriter& out, ReadAudit* audit) {
  require_known(model);
  if (!config.seed) throw ConfigError("a seed is required");
  return is_classical(model) ? train_classical(config, model, split, out, audit)
                             : train_transformer(config, model, split, out, audit);
}

std::unique_ptr<ScoringModel> load_model(const fs::path& root, const std::string& model) {
  require_known(model);
  const fs::path base = root / "models" / model;
  if (is_classical(model)) {
    const fs::path p = base.string() + ".json";
    if (!fs::exists(p)) throw ConfigError("no trained model at " + p.string() + " (run `train " + model + "`)");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_bytes(p));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(p.string() + ": " + e.what());
    }
    if (j.value("format", "") != "dtc-model") throw SchemaError(p.string() + ": not a model artifact");
    auto features = TfIdfModel::from_json(j.at("features").at("model"));
    const bool counts = j.at("features").at("kind") == "counts";
    return std::make_unique<ClassicalScorer>(model, std::move(features), counts,
                                             classifier_from_json(j.at("classifier")), j.at("config"));
  }
  const fs::path ckpt = base.string() + ".ckpt";
  const fs::path vocab = base.string() + ".vocab";
  if (!fs::exists(ckpt) || !fs::exists(vocab)) {
    throw ConfigError("no trained model at " + ckpt.string() + " (run `train " + model + "`)");
  }
  nlohmann::json meta;
  auto enc = tfm::EncoderModel::load(ckpt, &meta);
  auto tok = tfm::Tokenizer::load(vocab, enc.config().max_len);
  if (tok.size() != enc.config().vocab) throw SchemaError(vocab.string() + ": size does not match the checkpoint");
  return std::make_unique<TransformerScorer>(model, std::move(enc), std::move(tok), meta);
}

EvalReport evaluate_model(const ScoringModel& model, const SplitPair& split, SplitName which, ArtifactWriter& out,
                          ReadAudit* audit) {
  const Dataset& d = which == SplitName::train ? split.train : split.test;
  std::vector<std::string> texts;
  std::vector<int> labels;
  {
    AuditScope scope(audit, kStageEvaluate);
    texts = texts_of(d);
    labels = labels_of(d);
  }
  const auto scores = model.score(texts);
  EvalReport r = evaluate_scores(model.name(), labels, scores, model.threshold(), model.config());
  r.split = to_string(which);
  const auto j = to_json(r);
  const auto problems = validate_report_json(j);
  if (!problems.empty()) throw SchemaError("report for " + model.name() + " fails validation: " + problems.front());
  const std::string base = "reports/" + model.name() + "." + r.split;
  out.write(base + ".json", j.dump(2) + "\n");
  std::ostringstream roc;
  write_roc_csv(roc, r.roc);
  out.write(base + ".roc.csv", roc.str());
  return r;
}

std::vector<EvalReport> compare_models(const RunConfig& config, const std::vector<std::string>& models,
                                       const SplitPair& split, ArtifactWriter& out, ReadAudit* audit) {
  for (const auto& m : models) require_known(m);
  std::vector<EvalReport> reports;
  for (const auto& m : models) {
    auto trained = train_model(config, m, split, out, audit);
    reports.push_back(evaluate_model(*trained.model, split, SplitName::test, out, audit));
  }
  const auto rows = compare_reports(reports);

  std::ostringstream header;
  header << "# seed: " << *config.seed << '\n'
         << "# split: " << split.train.size() << " train / " << split.test.size() << " test (ratio "
         << config.split_ratio << ")\n"
         << "# config: " << config.to_json().dump() << '\n';
  std::ostringstream table;
  write_comparison_csv(table, rows);
  out.write("compare/comparison.csv", header.str() + table.str());

  std::ostringstream acc;
  acc << "model,accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.accuracy);
    acc << r.model << ',' << buf << '\n';
  }
  out.write("compare/accuracy.csv", acc.str());

  std::ostringstream md;
  md << "Seed: " << *config.seed << "\n\n" << render_comparison(rows) << "\nConfig:\n\n```json\n"
     << config.to_json().dump(2) << "\n```\n";
  out.write("compare/comparison.md", md.str());
  return reports;
}

}  // namespace dtc
