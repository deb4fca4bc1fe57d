#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dtc/config.hpp"
#include "dtc/error.hpp"
#include "dtc/pipeline.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string model;
  std::string split = "test";
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
};

dtc::RunConfig load_config(const Flags& f) {
  dtc::RunConfig c = f.config_path.empty() ? dtc::RunConfig{} : dtc::RunConfig::from_ini(f.config_path);
  if (f.seed) c.seed = f.seed;
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.data.empty()) c.dataset = f.data;
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_report(const dtc::EvalReport& r) {
  std::printf("%-12s %-5s n=%zu acc=%.4f prec=%.4f rec=%.4f f1=%.4f auc=%.4f\n", r.model.c_str(),
              r.split.c_str(), r.n, r.accuracy, r.macro.precision, r.macro.recall, r.macro.f1, r.roc.auc);
}

std::string require_model(const Flags& f) {
  if (f.model.empty()) {
    std::string valid;
    for (const auto& n : dtc::all_model_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw dtc::ConfigError("--model is required (valid: " + valid + ")");
  }
  return f.model;
}

int cmd_prepare(const Flags& f) {
  const auto config = load_config(f);
  dtc::ArtifactWriter out(config.out_dir);
  const auto data = dtc::prepare_data(config);
  const auto summary = dtc::write_prepare_artifacts(data, config, out);
  out.write_manifest("prepare", config.to_json());
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_train(const Flags& f) {
  const auto model = require_model(f);
  const auto config = load_config(f);
  dtc::ArtifactWriter out(config.out_dir);
  const auto data = dtc::prepare_data(config);
  const auto result = dtc::train_model(config, model, data.split, out);
  out.write_manifest("train", config.to_json());
  for (const auto& file : result.files) std::cout << out.path(file).string() << '\n';
  return 0;
}

dtc::SplitName parse_split(const std::string& s) {
  if (s == "test") return dtc::SplitName::test;
  if (s == "train") return dtc::SplitName::train;
  throw dtc::ConfigError("--split must be train or test");
}

int cmd_evaluate(const Flags& f, bool roc_only) {
  const auto model_name = require_model(f);
  const auto config = load_config(f);
  dtc::ArtifactWriter out(config.out_dir);
  const auto data = dtc::prepare_data(config);
  const auto model = dtc::load_model(config.out_dir, model_name);
  const auto report = dtc::evaluate_model(*model, data.split, parse_split(f.split), out);
  out.write_manifest(roc_only ? "roc" : "evaluate", config.to_json());
  if (roc_only) {
    std::cout << out.path("reports/" + report.model + "." + report.split + ".roc.csv").string() << '\n';
    std::printf("auc=%.6f points=%zu\n", report.roc.auc, report.roc.points.size());
  } else {
    print_report(report);
  }
  return 0;
}

int cmd_compare(const Flags& f) {
  const auto config = load_config(f);
  const auto models = f.model.empty() ? config.compare_models : split_list(f.model);
  dtc::ArtifactWriter out(config.out_dir);
  const auto data = dtc::prepare_data(config);
  const auto reports = dtc::compare_models(config, models, data.split, out);
  out.write_manifest("compare", config.to_json());
  const auto rows = dtc::compare_reports(reports);
  std::cout << "seed " << *config.seed << ", split " << data.split.train.size() << " train / "
            << data.split.test.size() << " test, artifacts in " << config.out_dir.string() << "\n\n"
            << dtc::render_comparison(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disaster-tweet classification benchmark"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "INI run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "root seed (overrides [data] seed)");
    sub->add_option("--out", f.out, "output directory (overrides [output] dir)");
    sub->add_option("--data", f.data, "dataset CSV (overrides [data] path)");
  };
  auto* prepare = app.add_subcommand("prepare", "clean, deduplicate and split the dataset");
  common(prepare);
  auto* train = app.add_subcommand("train", "train one model on the train split");
  common(train);
  train->add_option("--model", f.model, "model name");
  auto* evaluate = app.add_subcommand("evaluate", "score a trained model and write its report");
  common(evaluate);
  evaluate->add_option("--model", f.model, "model name");
  evaluate->add_option("--split", f.split, "split to score (train needs to be asked for explicitly)")
      ->check(CLI::IsMember({"train", "test"}));
  auto* compare = app.add_subcommand("compare", "train and evaluate several models under one split");
  common(compare);
  compare->add_option("--model", f.model, "comma-separated models (default: [compare] models)");
  auto* roc = app.add_subcommand("roc", "write ROC points for a trained model");
  common(roc);
  roc->add_option("--model", f.model, "model name");
  roc->add_option("--split", f.split, "split to score")->check(CLI::IsMember({"train", "test"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*prepare) return cmd_prepare(f);
    if (*train) return cmd_train(f);
    if (*evaluate) return cmd_evaluate(f, false);
    if (*compare) return cmd_compare(f);
    if (*roc) return cmd_evaluate(f, true);
  } catch (const dtc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
