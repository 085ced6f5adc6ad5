// Command-line front end. Every subcommand reads the prior stage's file
// outputs from --out-dir and writes its own artifact plus a manifest line, so
// a run can be resumed, audited, or repeated stage by stage.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "labelaudit/labelaudit.hpp"

namespace {

std::vector<double> parse_eps_list(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) values.push_back(std::stod(item));
  }
  return values;
}

// Coarse density sweep: cluster counts and noise share per eps, to stand in
// for a variable-density clusterer when picking the radius.
void sweep_eps(const labelaudit::PipelineConfig& cfg, const labelaudit::StagePaths& paths,
               const std::vector<double>& eps_values) {
  const auto reduced = labelaudit::load_reduced(paths.reduced());
  std::cout << "eps\tclusters\tnoise\n";
  for (const double eps : eps_values) {
    labelaudit::ClusterConfig ccfg = cfg.cluster;
    ccfg.eps = eps;
    const auto assignment = labelaudit::dbscan(reduced, ccfg);
    std::size_t noise = 0;
    for (const int l : assignment.labels)
      if (l < 0) ++noise;
    std::cout << eps << '\t' << assignment.num_clusters << '\t' << noise << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelaudit: audit human labels of a text corpus and train on curated sets"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::int64_t> seed_override;
  app.add_option("--config", config_path, "pipeline config file (JSON)")->required();
  app.add_option("--out-dir", out_dir, "artifact directory (default: out)");
  std::int64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");

  std::string sweep_csv;
  auto* cmd_ingest = app.add_subcommand("ingest", "validate and canonicalize the corpus");
  auto* cmd_reduce = app.add_subcommand("reduce", "embed documents and reduce dimensionality");
  auto* cmd_cluster = app.add_subcommand("cluster", "density-cluster the reduced vectors");
  cmd_cluster->add_option("--sweep-eps", sweep_csv,
                          "comma-separated eps values to probe (prints a table, writes nothing)");
  auto* cmd_topics = app.add_subcommand("topics", "extract top terms per cluster");
  auto* cmd_similarity =
      app.add_subcommand("similarity", "machine-vs-human cluster centroid similarity");
  auto* cmd_fewshot = app.add_subcommand("fewshot", "obtain LLM second-opinion labels");
  auto* cmd_agree = app.add_subcommand("agree", "human-vs-LLM agreement matrix");
  auto* cmd_curate = app.add_subcommand("curate", "build the curated training sets");
  auto* cmd_train = app.add_subcommand("train", "train classifiers on both curated sets");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "evaluate checkpoints on the test split");
  auto* cmd_report = app.add_subcommand("report", "aggregate all artifacts into report tables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (seed_opt->count() > 0) seed_override = seed_value;
    const auto cfg = labelaudit::load_pipeline_config(config_path, seed_override);
    labelaudit::StagePaths paths;
    paths.out_dir = out_dir;

    if (cmd_ingest->parsed()) {
      labelaudit::run_ingest(cfg, paths);
    } else if (cmd_reduce->parsed()) {
      labelaudit::run_reduce(cfg, paths);
    } else if (cmd_cluster->parsed()) {
      if (!sweep_csv.empty()) {
        sweep_eps(cfg, paths, parse_eps_list(sweep_csv));
        return 0;
      }
      labelaudit::run_cluster(cfg, paths);
    } else if (cmd_topics->parsed()) {
      labelaudit::run_topics(cfg, paths);
    } else if (cmd_similarity->parsed()) {
      labelaudit::run_similarity(cfg, paths);
    } else if (cmd_fewshot->parsed()) {
      labelaudit::run_fewshot(cfg, paths);
    } else if (cmd_agree->parsed()) {
      labelaudit::run_agree(cfg, paths);
    } else if (cmd_curate->parsed()) {
      labelaudit::run_curate(cfg, paths);
    } else if (cmd_train->parsed()) {
      labelaudit::run_train(cfg, paths);
    } else if (cmd_evaluate->parsed()) {
      labelaudit::run_evaluate(cfg, paths);
    } else if (cmd_report->parsed()) {
      labelaudit::run_report(cfg, paths);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
