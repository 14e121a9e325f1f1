// Command-line front end for the matching pipeline. Each stage is also
// exposed as its own subcommand so artifacts can be rebuilt selectively;
// `pipeline` runs everything in order with cached-stage reuse.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ctxmatch/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<std::string> output_dir;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the configured seed");
  cmd->add_option("--ablation", args.ablation,
                  "override ablation mode (none|share_off|cs_random|cs_topk|rs_off)");
  cmd->add_option("--out", args.output_dir, "override the output directory");
  cmd->add_flag("--force", args.force, "recompute stages even when cached");
}

ctxmatch::Pipeline make_pipeline(const CommonArgs& args) {
  auto cfg = ctxmatch::load_run_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.ablation) cfg.ablation = ctxmatch::ablation_from_string(*args.ablation);
  if (args.output_dir) cfg.output_dir = *args.output_dir;
  return ctxmatch::Pipeline(std::move(cfg), args.force);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-enhanced short text matching pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string predictions_file;
  std::vector<std::string> run_dirs;

  auto* ingest = app.add_subcommand("ingest", "validate and normalize the pair datasets");
  add_common(ingest, args);
  auto* index = app.add_subcommand("index", "clean the context corpus and build the index");
  add_common(index, args);
  auto* retrieve = app.add_subcommand("retrieve", "retrieve candidate contexts per sentence");
  add_common(retrieve, args);
  auto* train_baseline =
      app.add_subcommand("train-baseline", "train the no-context baseline matcher");
  add_common(train_baseline, args);
  auto* pseudo = app.add_subcommand("pseudo-label",
                                    "derive selector pseudo-labels from baseline similarity");
  add_common(pseudo, args);
  auto* train_selector = app.add_subcommand("train-selector", "train the context selector");
  add_common(train_selector, args);
  auto* train_matcher =
      app.add_subcommand("train-matcher", "train the context-enhanced matcher");
  add_common(train_matcher, args);
  auto* evaluate = app.add_subcommand("evaluate", "predict, combine and report metrics");
  add_common(evaluate, args);
  evaluate->add_option("--predictions", predictions_file,
                       "re-score an existing predictions.tsv instead of running models");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  add_common(pipeline, args);
  auto* ablate =
      app.add_subcommand("ablate", "compare completed runs against the 'none' run");
  ablate->add_option("--runs", run_dirs, "run output directories")
      ->required()
      ->expected(-2);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ablate->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      std::cout << ctxmatch::report_ablation(dirs);
      return 0;
    }
    auto p = make_pipeline(args);
    if (ingest->parsed()) {
      p.ingest();
    } else if (index->parsed()) {
      p.index();
    } else if (retrieve->parsed()) {
      p.retrieve_contexts();
    } else if (train_baseline->parsed()) {
      p.train_baseline();
    } else if (pseudo->parsed()) {
      p.pseudo_label();
    } else if (train_selector->parsed()) {
      p.train_selector_stage();
    } else if (train_matcher->parsed()) {
      p.train_matcher_stage();
    } else if (evaluate->parsed()) {
      if (!predictions_file.empty())
        p.evaluate_predictions_file(predictions_file);
      else
        p.evaluate_stage();
    } else if (pipeline->parsed()) {
      p.run_all();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
