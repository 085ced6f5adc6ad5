#include <catch2/catch.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "labelaudit/pipeline.hpp"

using namespace labelaudit;

namespace {

const char* kMiniSchema = R"({"features":[
  {"name":"hour","kind":"numeric"},
  {"name":"road","kind":"categorical","categories":["junction","straight","parking_lot","crossing"]}
]})";

// Small deterministic corpus covering all labels, stub-labeler keyword overlap,
// one empty text, and a test split.
std::string mini_corpus() {
  struct Row {
    const char* label;
    const char* text;
    const char* road;
  };
  const std::vector<Row> rows = {
      {"A1", "driver lost control on the icy curve and hit the barrier", "straight"},
      {"A1", "car skidded off the wet bend at speed", "straight"},
      {"A1", "vehicle swerved and struck the guardrail", "straight"},
      {"A1", "lost control during heavy rain near the bend", "straight"},
      {"A2", "while turning left the car collided with oncoming traffic", "junction"},
      {"A2", "left turn across the lane ended in a collision", "junction"},
      {"A2", "turning vehicle hit a parallel moving car", "junction"},
      {"A3", "turning right into the side street hit a crossing van", "junction"},
      {"A3", "the lorry turned into the junction and blocked the path", "junction"},
      {"A3", "turning conflict at the corner with perpendicular traffic", "junction"},
      {"A4", "a pedestrian stepped onto the crosswalk and was hit", "crossing"},
      {"A4", "pedestrian crossing at the lights was overlooked", "crossing"},
      {"A4", "child stepped from the curb onto the zebra crossing", "crossing"},
      {"A4", "pedestrian walked across and the car braked too late", "crossing"},
      {"A4", "collision with a pedestrian at the crosswalk island", "crossing"},
      {"A5", "a parked car was scraped while maneuvering", "parking_lot"},
      {"A5", "reversing out of the parking space hit a parked van", "parking_lot"},
      {"A5", "parked vehicle lost its mirror in the garage", "parking_lot"},
      {"A5", "the parking garage ramp scrape damaged the bumper", "parking_lot"},
      {"A5", "stationary car was hit in the parking lot", "parking_lot"},
      {"A5", "parked truck was dented overnight", "parking_lot"},
      {"A5", "car door hit the parked vehicle beside it", "parking_lot"},
      {"A5", "", "parking_lot"},
      {"A6", "rear ended the car ahead in the queue", "straight"},
      {"A6", "tailgating led to a shunt in slow traffic", "straight"},
      {"A6", "braked late and drove into the vehicle ahead", "straight"},
      {"A7", "unknown driver damaged a parked car and fled", "parking_lot"},
      {"A7", "dent discovered on the parked vehicle in the garage", "parking_lot"},
      {"A7", "parked car scratched by an unknown party", "parking_lot"},
      {"A7", "parking damage reported after returning to the car", "parking_lot"},
      {"A7", "garage wall scrape on the parked van", "parking_lot"},
      {"A7", "mirror of a parked car broken overnight", "parking_lot"},
      {"A7", "parked trailer shifted and damaged a parking barrier", "parking_lot"},
      {"A7", "scratch along the parked car in the parking lot", "parking_lot"},
      {"A7", "a deer jumped onto the road and caused evasive braking", "straight"},
      {"A7", "debris on the carriageway damaged the underbody", "straight"},
      {"A7", "circumstances remain unclear and no witness came forward", "straight"},
      {"A7", "an obstacle on the roadway led to a report", "straight"},
      {"A7", "wildlife on the road at dusk", "straight"},
      {"A7", "object fell from a vehicle and hit the windshield", "straight"}};

  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    nlohmann::json j;
    j["id"] = "m" + std::to_string(i);
    j["text"] = rows[i].text;
    j["human_label"] = rows[i].label;
    j["tabular"] = {{"hour", static_cast<std::int64_t>((i * 5) % 24)}, {"road", rows[i].road}};
    if (i % 6 == 5 && rows[i].text[0] != '\0') j["split"] = "test";
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string mini_config_json(const testutil::TempDir& tmp, std::int64_t seed) {
  nlohmann::json j;
  j["paths"] = {{"corpus", tmp.file("corpus.jsonl")},
                {"schema", tmp.file("schema.json")},
                {"prompt_spec", testutil::data_file("prompt_spec.json")}};
  j["embeddings"] = {{"source", "hash"}, {"dim", 16}};
  j["reducer"] = {{"method", "pca"}, {"n_components", 4}, {"n_neighbors", 10}, {"min_dist", 0.05}};
  j["cluster"] = {{"eps", 0.9}, {"min_pts", 2}, {"min_cluster_size", 2}};
  j["topics"] = {{"top_k", 5}};
  j["llm"] = {{"mode", "stub"}};
  j["train"] = {
      {"val_fraction", 0.25},
      {"tabular",
       {{"hidden", {8, 8}}, {"use_skip", true}, {"use_layer_norm", true}, {"dropout_p", 0.1},
        {"epochs", 4}, {"batch_size", 8}}},
      {"text",
       {{"hidden", {8}}, {"use_layer_norm", true}, {"dropout_p", 0.1}, {"epochs", 4},
        {"batch_size", 8}}},
      {"fusion",
       {{"branch_hidden", {6}}, {"branch_out", 4}, {"head_hidden", {8}}, {"dropout_p", 0.2},
        {"lr0", 0.001}, {"epochs", 3}, {"batch_size", 8}}}};
  j["seed"] = seed;
  return j.dump(2);
}

struct MiniPipeline {
  testutil::TempDir tmp;
  PipelineConfig cfg;
  StagePaths paths;

  explicit MiniPipeline(std::int64_t seed = 42, const char* out_name = "out") {
    testutil::write(tmp.file("schema.json"), kMiniSchema);
    testutil::write(tmp.file("corpus.jsonl"), mini_corpus());
    testutil::write(tmp.file("config.json"), mini_config_json(tmp, seed));
    cfg = load_pipeline_config(tmp.file("config.json"));
    paths.out_dir = tmp.file(out_name);
  }

  void run_all() {
    run_ingest(cfg, paths);
    run_reduce(cfg, paths);
    run_cluster(cfg, paths);
    run_topics(cfg, paths);
    run_similarity(cfg, paths);
    run_fewshot(cfg, paths);
    run_agree(cfg, paths);
    run_curate(cfg, paths);
    run_train(cfg, paths);
    run_evaluate(cfg, paths);
    run_report(cfg, paths);
  }
};

}  // namespace

TEST_CASE("stages report which producer is missing", "[pipeline]") {
  MiniPipeline p;
  CHECK_THROWS_WITH(run_train(p.cfg, p.paths), Catch::Contains("fewshot"));
  run_ingest(p.cfg, p.paths);
  run_reduce(p.cfg, p.paths);
  run_fewshot(p.cfg, p.paths);
  CHECK_THROWS_WITH(run_train(p.cfg, p.paths), Catch::Contains("curate"));
  CHECK_THROWS_WITH(run_topics(p.cfg, p.paths), Catch::Contains("cluster"));
}

TEST_CASE("the full stage chain produces every artifact", "[pipeline]") {
  MiniPipeline p;
  p.run_all();

  for (const std::string path :
       {p.paths.corpus(), p.paths.embeddings(), p.paths.reduced(), p.paths.clusters(),
        p.paths.topics(), p.paths.similarity(), p.paths.llm_results(), p.paths.corpus_labeled(),
        p.paths.agreement(), p.paths.curated(CurationStrategy::low_quality),
        p.paths.curated(CurationStrategy::high_quality), p.paths.curation_summary(),
        p.paths.metrics(), p.paths.report_topics(), p.paths.report_similarity(),
        p.paths.report_agreement(), p.paths.report_curation(), p.paths.report_metrics(),
        p.paths.report_summary(), p.paths.manifest()})
    CHECK(file_exists(path));

  // Stage outputs carry the config hash that produced them.
  const auto header = slurp_file(p.paths.corpus());
  CHECK(header.rfind("# config_hash=" + p.cfg.config_hash, 0) == 0);
  const auto metrics = nlohmann::json::parse(slurp_file(p.paths.metrics()));
  CHECK(metrics["config_hash"] == p.cfg.config_hash);
  CHECK(metrics["entries"].size() >= 6);

  // The curated sets follow the strategy rules on this corpus.
  const auto low =
      load_curated(p.paths.curated(CurationStrategy::low_quality), CurationStrategy::low_quality);
  const auto high = load_curated(p.paths.curated(CurationStrategy::high_quality),
                                 CurationStrategy::high_quality);
  CHECK(low.ids.size() > high.ids.size());

  // Manifest lines cover all eleven stages with one config hash.
  const auto manifest_lines = read_lines(p.paths.manifest());
  CHECK(manifest_lines.size() == 11);
  for (const auto& line : manifest_lines) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["config_hash"] == p.cfg.config_hash);
  }
}

TEST_CASE("same config and seed reproduce identical reports", "[pipeline]") {
  MiniPipeline a(42, "out_a");
  a.run_all();
  StagePaths second;
  second.out_dir = a.tmp.file("out_b");
  auto cfg = a.cfg;
  {
    StagePaths saved = a.paths;
    a.paths = second;
    a.run_all();
    a.paths = saved;
  }
  for (const auto& name :
       {"report_topics.tsv", "report_similarity.tsv", "report_agreement.tsv",
        "report_curation.tsv", "report_metrics.tsv", "metrics.json", "corpus_labeled.jsonl"}) {
    const auto left = slurp_file(a.paths.out_dir + "/" + name);
    const auto right = slurp_file(second.out_dir + "/" + name);
    CHECK(left == right);
  }
}

TEST_CASE("report refuses to mix artifacts from different configs", "[pipeline]") {
  MiniPipeline p(42);
  p.run_all();
  // Re-ingest under a different seed: corpus.jsonl now carries another hash.
  const auto other = load_pipeline_config(p.tmp.file("config.json"), std::int64_t{43});
  run_ingest(other, p.paths);
  CHECK_THROWS_WITH(run_report(p.cfg, p.paths), Catch::Contains("refusing to mix"));
}

TEST_CASE("overriding the seed changes the config hash", "[pipeline]") {
  MiniPipeline p(42);
  const auto overridden = load_pipeline_config(p.tmp.file("config.json"), std::int64_t{7});
  CHECK(overridden.seed == 7);
  CHECK(overridden.config_hash != p.cfg.config_hash);
}

TEST_CASE("evaluate requires a test split", "[pipeline]") {
  MiniPipeline p;
  // Rewrite the corpus without any split markers.
  auto lines = read_lines(p.tmp.file("corpus.jsonl"));
  std::string stripped;
  for (const auto& line : lines) {
    auto j = nlohmann::json::parse(line);
    j.erase("split");
    stripped += j.dump() + "\n";
  }
  testutil::write(p.tmp.file("corpus.jsonl"), stripped);
  run_ingest(p.cfg, p.paths);
  run_reduce(p.cfg, p.paths);
  run_fewshot(p.cfg, p.paths);
  run_curate(p.cfg, p.paths);
  run_train(p.cfg, p.paths);
  CHECK_THROWS_WITH(run_evaluate(p.cfg, p.paths), Catch::Contains("test"));
}
