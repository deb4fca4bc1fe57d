#include <doctest.h>

#include <array>
#include <map>
#include <cstdio>
#include <set>
#include <sys/wait.h>

#include "dtc/config.hpp"
#include "dtc/error.hpp"
#include "dtc/pipeline.hpp"
#include "dtc/synthetic.hpp"
#include "support.hpp"

using namespace dtc;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  testing::TempDir dir;
  fs::path data;

  explicit Workspace(const std::string& tag, std::size_t rows = 400) : dir(tag) {
    SyntheticOptions o;
    o.rows = rows;
    o.seed = 13;
    data = dir / "train.csv";
    testing::write_file(data, synthetic_corpus_csv(o));
  }

  RunConfig config(const std::string& out = "run") const {
    RunConfig c;
    c.dataset = data;
    c.seed = 42;
    c.out_dir = dir / out;
    c.rf.n_trees = 10;
    c.gb.n_stages = 20;
    c.xgb.n_stages = 20;
    c.transformer.mlm_steps = 3;
    c.transformer.finetune_steps = 3;
    c.transformer.batch_size = 4;
    c.transformer.vocab_size = 300;
    return c;
  }
};

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(DTC_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = testing::read_file(e.path());
  }
  return files;
}

}  // namespace

// ------------------------------------------------------------------- config

TEST_CASE("ini config parses every section") {
  const auto c = RunConfig::from_ini_string(R"(
[data]
path = tweets.csv
split_ratio = 0.75
seed = 7
[features]
min_df = 3
max_features = 500
normalize = false
tree_max_features = 100
[lr]
optimizer = gd
lr = 0.5
[rf]
n_trees = 9
bootstrap = false
[xgb]
lambda = 2.5
[transformer]
mlm_steps = 10
pretrain = false
[compare]
models = lr, nb
[output]
dir = out/x
)");
  CHECK(c.dataset == "tweets.csv");
  CHECK(c.split_ratio == 0.75);
  CHECK(c.seed == 7u);
  CHECK(c.tfidf.min_df == 3);
  CHECK_FALSE(c.tfidf.normalize);
  CHECK(c.tree_max_features == 100);
  CHECK(c.lr.optimizer == LinearOptimizer::gradient_descent);
  CHECK(c.lr.lr == 0.5);
  CHECK(c.rf.n_trees == 9);
  CHECK_FALSE(c.rf.bootstrap);
  CHECK(c.xgb.lambda == 2.5);
  CHECK(c.transformer.mlm_steps == 10u);
  CHECK(c.transformer.pretrain == false);
  CHECK(c.compare_models == std::vector<std::string>{"lr", "nb"});
  CHECK(c.out_dir == "out/x");
  CHECK(c.to_json().at("data").at("seed") == 7);
}

TEST_CASE("ini config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(RunConfig::from_ini_string("[data]\nsed = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_ini_string("[dat]\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_ini_string("[data]\nseed = many\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_ini_string("[data]\nsplit_ratio = 0.8x\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_ini_string("[lr]\noptimizer = adam\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_ini_string("[features]\nnormalize = maybe\n"), ConfigError);
}

TEST_CASE("validation runs before any work") {
  Workspace ws("cfg");
  auto c = ws.config();
  CHECK_NOTHROW(c.validate());
  c.split_ratio = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ws.config();
  c.seed.reset();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ws.config();
  c.dataset = ws.dir / "missing.csv";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ws.config();
  c.compare_models = {"lr", "cnn"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ws.config();
  c.compare_models = {"lr", "lr"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("model names") {
  CHECK(classical_model_names().size() == 6);
  CHECK(all_model_names().size() == 10);
  CHECK(is_classical("xgb"));
  CHECK_FALSE(is_classical("bert-toy"));
}

TEST_CASE("preset overrides") {
  Workspace ws("preset");
  auto c = ws.config();
  c.transformer.lr = 1e-3;
  c.transformer.pretrain = false;
  const auto p = resolve_preset(c, "bert-toy");
  CHECK(p.mlm.steps == 3);
  CHECK(p.finetune.steps == 3);
  CHECK(p.finetune.batch_size == 4);
  CHECK(p.finetune.adam.lr == 1e-3);
  CHECK_FALSE(p.pretrain);
  CHECK(p.vocab_size == 300);
}

// ---------------------------------------------------------------- artifacts

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("prepare writes the dataset, split ids and summary deterministically") {
  Workspace ws("prep");
  const auto c = ws.config();
  const auto data = prepare_data(c);
  ArtifactWriter out(c.out_dir);
  const auto summary = write_prepare_artifacts(data, c, out);
  out.write_manifest("prepare", c.to_json());
  CHECK(summary.at("raw_rows") == 400);
  CHECK(summary.at("train").at("rows").get<std::size_t>() + summary.at("test").at("rows").get<std::size_t>() ==
        data.full.size());
  const auto manifest = nlohmann::json::parse(testing::read_file(c.out_dir / "manifest.json"));
  CHECK(manifest.at("files").contains("data/train_ids.txt"));
  CHECK(manifest.at("files").at("data/test_ids.txt") ==
        sha256_hex(testing::read_file(c.out_dir / "data/test_ids.txt")));

  const auto c2 = ws.config("run2");
  ArtifactWriter out2(c2.out_dir);
  write_prepare_artifacts(prepare_data(c2), c2, out2);
  for (const char* f : {"data/train_ids.txt", "data/test_ids.txt", "data/dataset.csv"}) {
    CHECK(testing::read_file(c.out_dir / f) == testing::read_file(c2.out_dir / f));
  }
}

TEST_CASE("train, load and evaluate a classical model") {
  Workspace ws("lr");
  const auto c = ws.config();
  const auto data = prepare_data(c);
  ArtifactWriter out(c.out_dir);
  const auto trained = train_model(c, "lr", data.split, out);
  CHECK(fs::exists(c.out_dir / "models/lr.json"));
  CHECK(testing::read_file(c.out_dir / "models/lr.train_log.csv").rfind("step,loss\n", 0) == 0);

  const auto loaded = load_model(c.out_dir, "lr");
  const auto texts = texts_of(data.split.test);
  CHECK(loaded->score(texts) == trained.model->score(texts));

  const auto report = evaluate_model(*loaded, data.split, SplitName::test, out);
  const auto j = nlohmann::json::parse(testing::read_file(c.out_dir / "reports/lr.test.json"));
  CHECK(validate_report_json(j).empty());
  CHECK(j.at("n") == data.split.test.size());
  CHECK(report.config.at("hyperparameters").at("optimizer") == "lbfgs");

  testing::write_file(c.out_dir / "models/nb.json", "{\"format\": \"something-else\"}");
  CHECK_THROWS_AS(load_model(c.out_dir, "nb"), SchemaError);
  CHECK_THROWS_AS(load_model(c.out_dir, "svm"), ConfigError);
  CHECK_THROWS_AS(load_model(c.out_dir, "cnn"), ConfigError);
}

TEST_CASE("distil-toy needs its teacher") {
  Workspace ws("distil");
  const auto c = ws.config();
  const auto data = prepare_data(c);
  ArtifactWriter out(c.out_dir);
  try {
    train_model(c, "distil-toy", data.split, out);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bert-toy") != std::string::npos);
  }
}

TEST_CASE("fit stages never read test ids") {
  Workspace ws("audit");
  const auto c = ws.config();
  const auto data = prepare_data(c);
  ArtifactWriter out(c.out_dir);
  ReadAudit audit;
  for (const char* m : {"lr", "nb", "rf", "bert-toy", "distil-toy"}) {
    const auto trained = train_model(c, m, data.split, out, &audit);
    evaluate_model(*trained.model, data.split, SplitName::test, out, &audit);
  }
  std::set<std::int64_t> train_ids, test_ids;
  for (const auto& r : data.split.train.records) train_ids.insert(r.id);
  for (const auto& r : data.split.test.records) test_ids.insert(r.id);

  for (const char* stage : {kStageTfidfFit, kStageClassicalFit, kStageTokenizer, kStagePretrain, kStageFinetune}) {
    INFO("stage " << stage);
    const auto texts = audit.ids(stage, ReadAudit::Field::text);
    const auto labels = audit.ids(stage, ReadAudit::Field::label);
    CHECK(texts.size() + labels.size() > 0);
    for (auto id : texts) CHECK(train_ids.count(id) == 1);
    for (auto id : labels) CHECK(train_ids.count(id) == 1);
  }
  CHECK(audit.ids(kStagePretrain, ReadAudit::Field::label).empty());
  CHECK(audit.ids(kStageEvaluate, ReadAudit::Field::text) == test_ids);
}

TEST_CASE("repeated training produces byte-identical artifacts") {
  Workspace ws("det");
  for (const char* dir : {"a", "b"}) {
    const auto c = ws.config(dir);
    const auto data = prepare_data(c);
    ArtifactWriter out(c.out_dir);
    write_prepare_artifacts(data, c, out);
    compare_models(c, {"lr", "svm", "nb", "rf", "gb", "xgb", "bert-toy", "deberta-toy"}, data.split, out);
    out.write_manifest("compare", c.to_json());
  }
  auto a = tree_bytes(ws.dir / "a"), b = tree_bytes(ws.dir / "b");
  // The config echo holds the output directory; everything else must match.
  CHECK(a.size() == b.size());
  std::size_t compared = 0;
  for (const auto& [rel, bytes] : a) {
    CAPTURE(rel);
    REQUIRE(b.count(rel) == 1);
    const bool holds_dir = bytes.find((ws.dir / "a").string()) != std::string::npos;
    if (holds_dir) continue;
    CHECK(bytes == b.at(rel));
    ++compared;
  }
  CHECK(compared > 30);
}

// ---------------------------------------------------------------------- cli

TEST_CASE("cli errors") {
  Workspace ws("cli-err");
  const std::string base = " --data " + ws.data.string() + " --out " + (ws.dir / "run").string();

  testing::write_file(ws.dir / "bad.ini", "[data]\nsplit_ratio = 1.0\nseed = 1\n");
  auto r = run_cli("prepare --config " + (ws.dir / "bad.ini").string() + base);
  CHECK(r.code == 1);
  CHECK(r.output.find("ratio") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.dir / "run" / "data"));

  r = run_cli("prepare" + base);
  CHECK(r.code == 1);
  CHECK(r.output.find("seed") != std::string::npos);

  r = run_cli("train --model cnn --seed 1" + base);
  CHECK(r.code == 1);
  for (const char* name : {"lr", "svm", "nb", "rf", "gb", "xgb", "bert-toy", "roberta-toy", "distil-toy", "deberta-toy"}) {
    CHECK(r.output.find(name) != std::string::npos);
  }

  r = run_cli("train --model distil-toy --seed 1" + base);
  CHECK(r.code == 1);
  CHECK(r.output.find("bert-toy") != std::string::npos);

  r = run_cli("prepare --seed 1 --data " + (ws.dir / "nope.csv").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("nope.csv") != std::string::npos);

  r = run_cli("evaluate --model lr --split validation --seed 1" + base);
  CHECK(r.code != 0);
}

TEST_CASE("cli train, evaluate, roc and compare") {
  Workspace ws("cli");
  const std::string base = " --seed 42 --data " + ws.data.string() + " --out " + (ws.dir / "run").string();
  auto r = run_cli("prepare" + base);
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.output).at("seed") == 42);

  CHECK(run_cli("train --model nb" + base).code == 0);
  r = run_cli("evaluate --model nb" + base);
  CHECK(r.code == 0);
  CHECK(fs::exists(ws.dir / "run/reports/nb.test.json"));
  CHECK_FALSE(fs::exists(ws.dir / "run/reports/nb.train.json"));
  r = run_cli("evaluate --model nb --split train" + base);
  CHECK(r.code == 0);
  CHECK(fs::exists(ws.dir / "run/reports/nb.train.json"));

  r = run_cli("roc --model nb" + base);
  CHECK(r.code == 0);
  CHECK(r.output.find("auc=") != std::string::npos);

  r = run_cli("compare --model lr,nb" + base);
  CHECK(r.code == 0);
  CHECK(r.output.rfind("seed 42", 0) == 0);
  const auto csv = testing::read_file(ws.dir / "run/compare/comparison.csv");
  CHECK(csv.rfind("# seed: 42\n", 0) == 0);
  CHECK(csv.find("# config: ") != std::string::npos);
  CHECK(csv.find("\nlr,") != std::string::npos);
  CHECK(csv.find("\nnb,") != std::string::npos);
  const auto first = testing::read_file(ws.dir / "run/compare/comparison.csv");
  CHECK(run_cli("compare --model lr,nb" + base).code == 0);
  CHECK(testing::read_file(ws.dir / "run/compare/comparison.csv") == first);

  const auto manifest = nlohmann::json::parse(testing::read_file(ws.dir / "run/manifest.json"));
  const auto commands = manifest.at("commands").get<std::vector<std::string>>();
  CHECK(commands == std::vector<std::string>{"compare", "evaluate", "prepare", "roc", "train"});
}
