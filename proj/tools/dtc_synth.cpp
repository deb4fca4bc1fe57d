#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dtc/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic corpus in the disaster-tweets training layout"};
  dtc::SyntheticOptions opts;
  std::string out;
  app.add_option("--out", out, "output CSV")->required();
  app.add_option("--rows", opts.rows, "number of rows");
  app.add_option("--seed", opts.seed, "generator seed");
  app.add_option("--noise", opts.label_noise, "fraction of flipped labels");
  CLI11_PARSE(app, argc, argv);
  std::ofstream f(out, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot write " << out << '\n';
    return 1;
  }
  f << dtc::synthetic_corpus_csv(opts);
  return f ? 0 : 1;
}
