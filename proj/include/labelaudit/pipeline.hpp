#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/classify.hpp"
#include "labelaudit/cluster.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/curation.hpp"
#include "labelaudit/embed.hpp"
#include "labelaudit/eval.hpp"
#include "labelaudit/fewshot.hpp"
#include "labelaudit/io.hpp"
#include "labelaudit/reduce.hpp"
#include "labelaudit/topics.hpp"

namespace labelaudit {

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

enum class EmbeddingSource { hash, file };
enum class LlmMode { stub, http };

struct ModelSpec {
  std::vector<std::size_t> hidden;
  bool use_skip = false;
  bool use_layer_norm = true;
  double dropout_p = 0.1;
  TrainConfig train;
};

struct FusionSpec {
  std::vector<std::size_t> branch_hidden;
  std::size_t branch_out = 8;
  std::vector<std::size_t> head_hidden;
  bool use_layer_norm = true;
  double dropout_p = 0.2;
  TrainConfig train;
};

struct PipelineConfig {
  std::string corpus_path;
  std::string schema_path;
  std::string prompt_spec_path;

  EmbeddingSource embedding_source = EmbeddingSource::hash;
  std::string embeddings_path;  // source=file
  std::size_t hash_dim = 48;

  ReducerConfig reducer;
  std::string reduced_path;  // method=external

  ClusterConfig cluster;
  std::size_t top_k = 8;

  LlmMode llm_mode = LlmMode::stub;
  LlmClientConfig llm;

  double val_fraction = 0.2;
  ModelSpec tabular_model;
  ModelSpec text_model;
  FusionSpec fusion_model;

  std::int64_t seed = 0;
  std::string config_hash;  // of the canonical config document

  std::int64_t stage_seed(std::string_view purpose) const {
    return static_cast<std::int64_t>(
        hash_combine(static_cast<std::uint64_t>(seed), fnv1a64(purpose)));
  }
};

namespace detail {

inline TrainConfig train_config_from_spec(const nlohmann::json& j, TrainConfig base) {
  if (j.contains("lr0")) base.lr0 = j["lr0"].get<double>();
  if (j.contains("decay_factor")) base.decay_factor = j["decay_factor"].get<double>();
  if (j.contains("decay_every_epochs")) base.decay_every_epochs = j["decay_every_epochs"].get<int>();
  if (j.contains("weight_decay")) base.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<int>();
  return base;
}

}  // namespace detail

inline PipelineConfig load_pipeline_config(const std::string& path,
                                           std::optional<std::int64_t> seed_override = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed config: " + e.what());
  }

  PipelineConfig cfg;
  const auto& paths = j.at("paths");
  cfg.corpus_path = paths.at("corpus").get<std::string>();
  cfg.schema_path = paths.at("schema").get<std::string>();
  cfg.prompt_spec_path = paths.value("prompt_spec", std::string{});

  if (j.contains("embeddings")) {
    const auto& ej = j["embeddings"];
    const std::string source = ej.value("source", std::string{"hash"});
    if (source == "hash") {
      cfg.embedding_source = EmbeddingSource::hash;
      cfg.hash_dim = ej.value("dim", cfg.hash_dim);
    } else if (source == "file") {
      cfg.embedding_source = EmbeddingSource::file;
      cfg.embeddings_path = ej.at("path").get<std::string>();
    } else {
      throw std::runtime_error(path + ": unknown embeddings source '" + source + "'");
    }
  }

  if (j.contains("reducer")) {
    const auto& rj = j["reducer"];
    const std::string method = rj.value("method", std::string{"pca"});
    if (method == "pca") {
      cfg.reducer.method = ReduceMethod::pca;
    } else if (method == "external") {
      cfg.reducer.method = ReduceMethod::external;
      cfg.reduced_path = rj.at("reduced_path").get<std::string>();
    } else {
      throw std::runtime_error(path + ": unknown reducer method '" + method + "'");
    }
    cfg.reducer.n_components = rj.value("n_components", cfg.reducer.n_components);
    cfg.reducer.n_neighbors = rj.value("n_neighbors", cfg.reducer.n_neighbors);
    cfg.reducer.min_dist = rj.value("min_dist", cfg.reducer.min_dist);
  }

  if (j.contains("cluster")) {
    const auto& cj = j["cluster"];
    cfg.cluster.eps = cj.value("eps", cfg.cluster.eps);
    cfg.cluster.min_pts = cj.value("min_pts", cfg.cluster.min_pts);
    cfg.cluster.min_cluster_size = cj.value("min_cluster_size", cfg.cluster.min_cluster_size);
  }

  if (j.contains("topics")) cfg.top_k = j["topics"].value("top_k", cfg.top_k);

  if (j.contains("llm")) {
    const auto& lj = j["llm"];
    const std::string mode = lj.value("mode", std::string{"stub"});
    if (mode == "stub") {
      cfg.llm_mode = LlmMode::stub;
    } else if (mode == "http") {
      cfg.llm_mode = LlmMode::http;
    } else {
      throw std::runtime_error(path + ": unknown llm mode '" + mode + "'");
    }
    cfg.llm.base_url = lj.value("base_url", std::string{});
    cfg.llm.model = lj.value("model", std::string{});
    cfg.llm.temperature = lj.value("temperature", 0.0);
    cfg.llm.max_retries = lj.value("max_retries", cfg.llm.max_retries);
    cfg.llm.timeout = std::chrono::milliseconds(lj.value("timeout_ms", 30000));
    cfg.llm.initial_backoff = std::chrono::milliseconds(lj.value("initial_backoff_ms", 200));
  }

  if (j.contains("train")) {
    const auto& tj = j["train"];
    cfg.val_fraction = tj.value("val_fraction", cfg.val_fraction);
    if (tj.contains("tabular")) {
      const auto& mj = tj["tabular"];
      cfg.tabular_model.hidden = mj.value("hidden", std::vector<std::size_t>{64, 64});
      cfg.tabular_model.use_skip = mj.value("use_skip", true);
      cfg.tabular_model.use_layer_norm = mj.value("use_layer_norm", true);
      cfg.tabular_model.dropout_p = mj.value("dropout_p", 0.1);
      cfg.tabular_model.train = detail::train_config_from_spec(mj, tabular_train_defaults());
    }
    if (tj.contains("text")) {
      const auto& mj = tj["text"];
      cfg.text_model.hidden = mj.value("hidden", std::vector<std::size_t>{32});
      cfg.text_model.use_skip = mj.value("use_skip", false);
      cfg.text_model.use_layer_norm = mj.value("use_layer_norm", true);
      cfg.text_model.dropout_p = mj.value("dropout_p", 0.1);
      cfg.text_model.train = detail::train_config_from_spec(mj, tabular_train_defaults());
    }
    if (tj.contains("fusion")) {
      const auto& mj = tj["fusion"];
      cfg.fusion_model.branch_hidden = mj.value("branch_hidden", std::vector<std::size_t>{16});
      cfg.fusion_model.branch_out = mj.value("branch_out", cfg.fusion_model.branch_out);
      cfg.fusion_model.head_hidden = mj.value("head_hidden", std::vector<std::size_t>{32});
      cfg.fusion_model.use_layer_norm = mj.value("use_layer_norm", true);
      cfg.fusion_model.dropout_p = mj.value("dropout_p", 0.2);
      cfg.fusion_model.train = detail::train_config_from_spec(mj, multimodal_train_defaults());
    }
  } else {
    cfg.tabular_model.hidden = {64, 64};
    cfg.tabular_model.use_skip = true;
    cfg.text_model.hidden = {32};
    cfg.text_model.train = tabular_train_defaults();
    cfg.fusion_model.branch_hidden = {16};
    cfg.fusion_model.head_hidden = {32};
    cfg.fusion_model.train = multimodal_train_defaults();
  }

  cfg.seed = j.value("seed", std::int64_t{0});
  if (seed_override) {
    cfg.seed = *seed_override;
    j["seed"] = *seed_override;
  }
  apply_llm_env(cfg.llm);
  cfg.config_hash = to_hex(fnv1a64(j.dump()));
  return cfg;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping
// ---------------------------------------------------------------------------

struct StagePaths {
  std::string out_dir;

  std::string manifest() const { return out_dir + "/manifest.jsonl"; }
  std::string corpus() const { return out_dir + "/corpus.jsonl"; }
  std::string embeddings() const { return out_dir + "/embeddings.jsonl"; }
  std::string reduced() const { return out_dir + "/reduced.jsonl"; }
  std::string clusters() const { return out_dir + "/clusters.tsv"; }
  std::string topics() const { return out_dir + "/topics.json"; }
  std::string similarity() const { return out_dir + "/similarity.json"; }
  std::string llm_results() const { return out_dir + "/llm_results.jsonl"; }
  std::string corpus_labeled() const { return out_dir + "/corpus_labeled.jsonl"; }
  std::string agreement() const { return out_dir + "/agreement.json"; }
  std::string curated(CurationStrategy s) const {
    return out_dir + (s == CurationStrategy::low_quality ? "/curated_low.tsv" : "/curated_high.tsv");
  }
  std::string curation_summary() const { return out_dir + "/curation.json"; }
  std::string checkpoint(const std::string& model, CurationStrategy s) const {
    return out_dir + "/ckpt_" + model + "_" +
           (s == CurationStrategy::low_quality ? "low" : "high") + ".json";
  }
  std::string train_log(const std::string& model, CurationStrategy s) const {
    return out_dir + "/train_log_" + model + "_" +
           (s == CurationStrategy::low_quality ? "low" : "high") + ".tsv";
  }
  std::string metrics() const { return out_dir + "/metrics.json"; }
  std::string report_topics() const { return out_dir + "/report_topics.tsv"; }
  std::string report_similarity() const { return out_dir + "/report_similarity.tsv"; }
  std::string report_agreement() const { return out_dir + "/report_agreement.tsv"; }
  std::string report_curation() const { return out_dir + "/report_curation.tsv"; }
  std::string report_metrics() const { return out_dir + "/report_metrics.tsv"; }
  std::string report_summary() const { return out_dir + "/report.md"; }
};

namespace detail {

inline void require_stage_input(const std::string& path, const std::string& producer) {
  if (!file_exists(path))
    throw std::runtime_error("missing stage input " + path + "; run `labelaudit " + producer +
                             "` first");
}

inline void write_with_hash_header(const std::string& path, const std::string& content,
                                   const std::string& config_hash) {
  write_file(path, "# config_hash=" + config_hash + "\n" + content);
}

inline std::optional<std::string> header_config_hash(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  const std::string prefix = "# config_hash=";
  if (line.rfind(prefix, 0) != 0) return std::nullopt;
  return line.substr(prefix.size());
}

inline std::optional<std::string> json_config_hash(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(slurp_file(path));
    if (j.contains("config_hash")) return j["config_hash"].get<std::string>();
  } catch (...) {
  }
  return std::nullopt;
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  std::int64_t elapsed_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline void append_manifest(const StagePaths& paths, const std::string& stage,
                            const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                            const std::vector<std::string>& outputs, std::int64_t duration_ms,
                            nlohmann::json details = nlohmann::json::object()) {
  nlohmann::json j;
  j["stage"] = stage;
  j["config_hash"] = cfg.config_hash;
  nlohmann::json input_hashes = nlohmann::json::object();
  for (const auto& path : inputs)
    input_hashes[path] = file_exists(path) ? file_content_hash(path) : "missing";
  j["inputs"] = input_hashes;
  j["outputs"] = outputs;
  j["duration_ms"] = duration_ms;
  j["details"] = details;
  std::ofstream out(paths.manifest(), std::ios::app);
  if (!out) throw std::runtime_error("cannot append manifest " + paths.manifest());
  out << j.dump() << '\n';
}

inline void ensure_out_dir(const StagePaths& paths) {
  std::filesystem::create_directories(paths.out_dir);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void run_ingest(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  const Corpus corpus = load_corpus(cfg.corpus_path, cfg.schema_path);
  detail::write_with_hash_header(paths.corpus(), corpus_to_string(corpus), cfg.config_hash);

  const auto histogram = label_histogram(corpus);
  nlohmann::json hist = nlohmann::json::object();
  std::size_t empty_text = 0;
  for (const auto& doc : corpus.documents)
    if (doc.text.empty()) ++empty_text;
  for (int i = 0; i < kNumLabels; ++i)
    hist[label_code(label_from_index(i))] = histogram[static_cast<std::size_t>(i)];
  nlohmann::json details;
  details["documents"] = corpus.size();
  details["label_histogram"] = hist;
  details["empty_text_documents"] = empty_text;
  detail::append_manifest(paths, "ingest", cfg, {cfg.corpus_path, cfg.schema_path},
                          {paths.corpus()}, timer.elapsed_ms(), details);
}

inline void run_reduce(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus(), "ingest");
  const Corpus corpus = load_corpus(paths.corpus(), cfg.schema_path);

  EmbeddingMatrix embeddings;
  std::size_t skipped_empty = 0;
  std::vector<std::string> inputs{paths.corpus()};
  if (cfg.embedding_source == EmbeddingSource::hash) {
    // Hermetic embedder: deterministic token hashing, no semantics. Empty-text
    // documents are skipped and counted.
    const auto seed = static_cast<std::uint64_t>(cfg.stage_seed("embed"));
    embeddings.dim = cfg.hash_dim;
    for (const auto& doc : corpus.documents) {
      if (doc.text.empty()) {
        ++skipped_empty;
        continue;
      }
      const auto vec = hash_embed(doc.text, cfg.hash_dim, seed);
      embeddings.ids.push_back(doc.id);
      embeddings.data.insert(embeddings.data.end(), vec.begin(), vec.end());
    }
  } else {
    inputs.push_back(cfg.embeddings_path);
    embeddings = load_embeddings(cfg.embeddings_path);
  }
  detail::write_with_hash_header(paths.embeddings(), embeddings_to_string(embeddings),
                                 cfg.config_hash);

  EmbeddingMatrix reduced;
  nlohmann::json details;
  if (cfg.reducer.method == ReduceMethod::pca) {
    const auto pca = pca_fit_transform(embeddings, cfg.reducer);
    reduced = pca.scores;
    details["explained_variance"] = pca.explained_variance;
    details["total_variance"] = pca.total_variance;
  } else {
    inputs.push_back(cfg.reduced_path);
    reduced = load_reduced(cfg.reduced_path);
  }
  detail::write_with_hash_header(paths.reduced(), embeddings_to_string(reduced), cfg.config_hash);

  details["method"] = reduce_method_name(cfg.reducer.method);
  details["n_components"] = cfg.reducer.n_components;
  details["n_neighbors"] = cfg.reducer.n_neighbors;  // provenance, PCA ignores them
  details["min_dist"] = cfg.reducer.min_dist;
  details["skipped_empty_text"] = skipped_empty;
  detail::append_manifest(paths, "reduce", cfg, inputs, {paths.embeddings(), paths.reduced()},
                          timer.elapsed_ms(), details);
}

inline void run_cluster(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.reduced(), "reduce");
  const EmbeddingMatrix reduced = load_reduced(paths.reduced());
  const ClusterAssignment assignment = dbscan(reduced, cfg.cluster);
  detail::write_with_hash_header(paths.clusters(), assignment_to_string(assignment),
                                 cfg.config_hash);

  nlohmann::json details;
  details["num_clusters"] = assignment.num_clusters;
  std::size_t noise = 0;
  for (const int l : assignment.labels)
    if (l < 0) ++noise;
  details["noise_points"] = noise;
  details["eps"] = cfg.cluster.eps;
  details["min_pts"] = cfg.cluster.min_pts;
  details["min_cluster_size"] = cfg.cluster.min_cluster_size;
  detail::append_manifest(paths, "cluster", cfg, {paths.reduced()}, {paths.clusters()},
                          timer.elapsed_ms(), details);
}

inline void run_topics(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus(), "ingest");
  detail::require_stage_input(paths.clusters(), "cluster");
  const Corpus corpus = load_corpus(paths.corpus(), cfg.schema_path);
  const ClusterAssignment assignment = load_assignment(paths.clusters(), ClusterSource::machine);

  // The assignment covers the embedded documents only; join texts by id.
  std::map<std::string, const Document*> by_id;
  for (const auto& doc : corpus.documents) by_id[doc.id] = &doc;
  std::vector<std::string> texts;
  texts.reserve(assignment.ids.size());
  for (const auto& id : assignment.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::runtime_error("topics: cluster id '" + id + "' not present in the corpus");
    texts.push_back(it->second->text);
  }
  const TermStats stats =
      build_term_stats(texts, assignment.labels, static_cast<std::size_t>(assignment.num_clusters));
  const auto weights = ctfidf(stats);
  const auto topics =
      top_terms(stats.vocabulary, weights, stats.num_clusters, cfg.top_k);
  const auto sizes = assignment.cluster_sizes();

  nlohmann::json j;
  j["config_hash"] = cfg.config_hash;
  j["num_clusters"] = stats.num_clusters;
  j["skipped_empty_docs"] = stats.skipped_empty_docs;
  j["skipped_noise_docs"] = stats.skipped_noise_docs;
  nlohmann::json topics_json = nlohmann::json::array();
  for (const auto& topic : topics) {
    nlohmann::json tj;
    tj["cluster"] = topic.cluster;
    tj["name"] = assignment.cluster_names[static_cast<std::size_t>(topic.cluster)];
    tj["count"] = sizes[static_cast<std::size_t>(topic.cluster)];
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [term, weight] : topic.terms) terms.push_back({{"term", term}, {"weight", weight}});
    tj["terms"] = terms;
    topics_json.push_back(tj);
  }
  j["topics"] = topics_json;
  write_file(paths.topics(), j.dump(2) + "\n");

  detail::append_manifest(paths, "topics", cfg, {paths.corpus(), paths.clusters()},
                          {paths.topics()}, timer.elapsed_ms());
}

inline void run_similarity(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus(), "ingest");
  detail::require_stage_input(paths.clusters(), "cluster");
  detail::require_stage_input(paths.embeddings(), "reduce");
  const Corpus corpus = load_corpus(paths.corpus(), cfg.schema_path);
  const ClusterAssignment machine = load_assignment(paths.clusters(), ClusterSource::machine);
  const EmbeddingMatrix embeddings = load_embeddings(paths.embeddings());

  // Both clusterings are compared in the original embedding space. Documents
  // without embeddings (empty text) are dropped from the human clustering.
  ClusterAssignment human_all = clusters_from_labels(corpus);
  const auto index = build_id_index(embeddings);
  ClusterAssignment human;
  human.source = ClusterSource::human;
  human.num_clusters = human_all.num_clusters;
  human.cluster_names = human_all.cluster_names;
  for (std::size_t i = 0; i < human_all.ids.size(); ++i) {
    if (index.find(human_all.ids[i]) == index.end()) continue;
    human.ids.push_back(human_all.ids[i]);
    human.labels.push_back(human_all.labels[i]);
  }
  ClusterAssignment machine_known;
  machine_known.source = ClusterSource::machine;
  machine_known.num_clusters = machine.num_clusters;
  machine_known.cluster_names = machine.cluster_names;
  for (std::size_t i = 0; i < machine.ids.size(); ++i) {
    if (index.find(machine.ids[i]) == index.end()) continue;
    machine_known.ids.push_back(machine.ids[i]);
    machine_known.labels.push_back(machine.labels[i]);
  }

  const SimilarityMatrix sim = cross_similarity(machine_known, human, embeddings);
  nlohmann::json j;
  j["config_hash"] = cfg.config_hash;
  j["row_clusters"] = sim.row_clusters;
  j["col_clusters"] = sim.col_clusters;
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t i = 0; i < sim.values.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < sim.values[i].size(); ++k) {
      if (sim.present[i][k])
        row.push_back(sim.values[i][k]);
      else
        row.push_back(nullptr);  // missing entries stay explicit, never zero
    }
    values.push_back(row);
  }
  j["values"] = values;
  write_file(paths.similarity(), j.dump(2) + "\n");

  detail::append_manifest(paths, "similarity", cfg,
                          {paths.corpus(), paths.clusters(), paths.embeddings()},
                          {paths.similarity()}, timer.elapsed_ms());
}

inline void run_fewshot(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus(), "ingest");
  const Corpus corpus = load_corpus(paths.corpus(), cfg.schema_path);

  std::size_t skipped_empty = 0;
  std::vector<FewShotResult> results;
  std::vector<std::string> inputs{paths.corpus()};
  if (cfg.llm_mode == LlmMode::stub) {
    results = label_corpus_stub(corpus, paths.llm_results(), &skipped_empty);
  } else {
    if (cfg.prompt_spec_path.empty())
      throw std::runtime_error("fewshot: llm mode 'http' needs paths.prompt_spec");
    inputs.push_back(cfg.prompt_spec_path);
    const PromptSpec spec = load_prompt_spec(cfg.prompt_spec_path);
    results = label_corpus(corpus, spec, cfg.llm, paths.llm_results(), &skipped_empty);
  }

  const Corpus labeled = attach_llm_labels(corpus, results);
  detail::write_with_hash_header(paths.corpus_labeled(), corpus_to_string(labeled),
                                 cfg.config_hash);

  std::size_t ok = 0, unparseable = 0, failed = 0;
  for (const auto& r : results) {
    if (r.status == FewShotStatus::ok) ++ok;
    else if (r.status == FewShotStatus::unparseable) ++unparseable;
    else ++failed;
  }
  nlohmann::json details;
  details["mode"] = cfg.llm_mode == LlmMode::stub ? "stub" : "http";
  details["ok"] = ok;
  details["unparseable"] = unparseable;
  details["transport_error"] = failed;
  details["skipped_empty_text"] = skipped_empty;
  detail::append_manifest(paths, "fewshot", cfg, inputs,
                          {paths.llm_results(), paths.corpus_labeled()}, timer.elapsed_ms(),
                          details);
}

inline void run_agree(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus_labeled(), "fewshot");
  const Corpus corpus = load_corpus(paths.corpus_labeled(), cfg.schema_path);
  const AgreementMatrix m = agreement_matrix(corpus);

  nlohmann::json j;
  j["config_hash"] = cfg.config_hash;
  nlohmann::json counts = nlohmann::json::array();
  nlohmann::json normalized = nlohmann::json::array();
  for (int i = 0; i < kNumLabels; ++i) {
    nlohmann::json crow = nlohmann::json::array();
    nlohmann::json nrow = nlohmann::json::array();
    for (int k = 0; k < kNumLabels; ++k) {
      crow.push_back(m.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
      nrow.push_back(m.normalized[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
    }
    counts.push_back(crow);
    normalized.push_back(nrow);
  }
  j["rows"] = "llm";
  j["cols"] = "human";
  j["counts"] = counts;
  j["normalized"] = normalized;
  j["agreement"] = m.agreement;
  j["total"] = m.total;
  j["skipped"] = m.skipped;
  write_file(paths.agreement(), j.dump(2) + "\n");

  nlohmann::json details;
  details["agreement"] = m.agreement;
  details["skipped"] = m.skipped;
  detail::append_manifest(paths, "agree", cfg, {paths.corpus_labeled()}, {paths.agreement()},
                          timer.elapsed_ms(), details);
}

inline void run_curate(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus_labeled(), "fewshot");
  const Corpus corpus = load_corpus(paths.corpus_labeled(), cfg.schema_path);

  const CuratedSet low = curate_low_quality(corpus);
  const CuratedSet high = curate_high_quality(corpus);
  detail::write_with_hash_header(paths.curated(CurationStrategy::low_quality),
                                 curated_to_string(low), cfg.config_hash);
  detail::write_with_hash_header(paths.curated(CurationStrategy::high_quality),
                                 curated_to_string(high), cfg.config_hash);

  nlohmann::json j;
  j["config_hash"] = cfg.config_hash;
  j["corpus_size"] = corpus.size();
  for (const CuratedSet* set : {&low, &high}) {
    nlohmann::json sj;
    sj["selected"] = set->ids.size();
    sj["excluded_missing_llm"] = set->excluded_missing_llm;
    sj["dropped_disagreement"] = set->dropped_disagreement;
    j[curation_strategy_name(set->strategy)] = sj;
  }
  write_file(paths.curation_summary(), j.dump(2) + "\n");

  detail::append_manifest(paths, "curate", cfg, {paths.corpus_labeled()},
                          {paths.curated(CurationStrategy::low_quality),
                           paths.curated(CurationStrategy::high_quality),
                           paths.curation_summary()},
                          timer.elapsed_ms());
}

namespace detail {

struct PreparedSets {
  Dataset tab_train, tab_val;
  Dataset text_train, text_val;
  FusionDataset fusion_train, fusion_val;
  TabularStats stats;
  std::size_t missing_embedding = 0;
};

inline PreparedSets prepare_training_sets(const PipelineConfig& cfg, const Corpus& corpus,
                                          const CuratedSet& curated,
                                          const EmbeddingMatrix& embeddings,
                                          CurationStrategy strategy) {
  std::map<std::string, const Document*> by_id;
  for (const auto& doc : corpus.documents) by_id[doc.id] = &doc;

  // Test documents never enter training; remaining curated documents are
  // split train/val with a strategy-scoped seed.
  Corpus pool;
  pool.schema = corpus.schema;
  for (const auto& id : curated.ids) {
    const Document* doc = by_id.at(id);
    if (doc->split == Split::test) continue;
    Document copy = *doc;
    copy.human_label = curated.assigned_label.at(id);  // curated label trains the model
    copy.split = Split::none;
    pool.documents.push_back(std::move(copy));
  }
  const std::string scope = std::string("train_split/") + curation_strategy_name(strategy);
  const Corpus split = split_corpus(pool, cfg.val_fraction, cfg.stage_seed(scope));

  PreparedSets sets;
  std::vector<const Document*> train_docs;
  for (const auto& doc : split.documents)
    if (doc.split == Split::train) train_docs.push_back(&doc);
  sets.stats = compute_tabular_stats(corpus.schema, train_docs);

  const auto index = build_id_index(embeddings);
  for (const auto& doc : split.documents) {
    const bool is_val = doc.split == Split::val;
    const int target = label_index(doc.human_label);
    const auto tab = encode_tabular(doc, corpus.schema, sets.stats);

    Dataset& tab_set = is_val ? sets.tab_val : sets.tab_train;
    tab_set.inputs.push_back(tab);
    tab_set.targets.push_back(target);

    const auto it = index.find(doc.id);
    if (it == index.end()) {
      ++sets.missing_embedding;
      continue;
    }
    const auto row = embeddings.row(it->second);
    std::vector<double> text(row.begin(), row.end());

    Dataset& text_set = is_val ? sets.text_val : sets.text_train;
    text_set.inputs.push_back(text);
    text_set.targets.push_back(target);

    FusionDataset& fusion_set = is_val ? sets.fusion_val : sets.fusion_train;
    fusion_set.text.push_back(std::move(text));
    fusion_set.tabular.push_back(tab);
    fusion_set.targets.push_back(target);
  }
  return sets;
}

inline std::string train_log_to_string(const ModelCheckpoint& ckpt) {
  std::ostringstream out;
  out << "epoch\tlr\ttrain_loss\tval_loss\n";
  out.precision(12);
  for (const auto& r : ckpt.history)
    out << r.epoch << '\t' << r.lr << '\t' << r.train_loss << '\t' << r.val_loss << '\n';
  return out.str();
}

inline void write_checkpoint_artifact(const ModelCheckpoint& ckpt, const PipelineConfig& cfg,
                                      const std::string& path) {
  nlohmann::json j = checkpoint_to_json(ckpt);
  j["config_hash"] = cfg.config_hash;
  write_file(path, j.dump() + "\n");
}

}  // namespace detail

inline void run_train(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus_labeled(), "fewshot");
  detail::require_stage_input(paths.curated(CurationStrategy::low_quality), "curate");
  detail::require_stage_input(paths.curated(CurationStrategy::high_quality), "curate");
  detail::require_stage_input(paths.embeddings(), "reduce");

  const Corpus corpus = load_corpus(paths.corpus_labeled(), cfg.schema_path);
  const EmbeddingMatrix embeddings = load_embeddings(paths.embeddings());

  std::vector<std::string> outputs;
  nlohmann::json details;
  for (const CurationStrategy strategy :
       {CurationStrategy::low_quality, CurationStrategy::high_quality}) {
    const CuratedSet curated = load_curated(paths.curated(strategy), strategy);
    const auto sets = detail::prepare_training_sets(cfg, corpus, curated, embeddings, strategy);
    const std::string tag = curation_strategy_name(strategy);

    // Tabular MLP.
    {
      MlpConfig mcfg;
      mcfg.input_dim = corpus.schema.encoded_width();
      mcfg.hidden_dims = cfg.tabular_model.hidden;
      mcfg.use_skip = cfg.tabular_model.use_skip;
      mcfg.use_layer_norm = cfg.tabular_model.use_layer_norm;
      mcfg.dropout_p = cfg.tabular_model.dropout_p;
      TrainConfig tcfg = cfg.tabular_model.train;
      tcfg.seed = cfg.stage_seed("train/tabular/" + tag);
      ModelCheckpoint ckpt = train_mlp(mcfg, sets.tab_train, sets.tab_val, tcfg);
      ckpt.tabular_stats = sets.stats;
      detail::write_checkpoint_artifact(ckpt, cfg, paths.checkpoint("tabular", strategy));
      detail::write_with_hash_header(paths.train_log("tabular", strategy),
                                     detail::train_log_to_string(ckpt), cfg.config_hash);
      outputs.push_back(paths.checkpoint("tabular", strategy));
      details["tabular_" + tag + "_val_loss"] = ckpt.val_loss;
    }

    // Classifier over precomputed text embeddings.
    {
      MlpConfig mcfg;
      mcfg.input_dim = embeddings.dim;
      mcfg.hidden_dims = cfg.text_model.hidden;
      mcfg.use_skip = cfg.text_model.use_skip;
      mcfg.use_layer_norm = cfg.text_model.use_layer_norm;
      mcfg.dropout_p = cfg.text_model.dropout_p;
      TrainConfig tcfg = cfg.text_model.train;
      tcfg.seed = cfg.stage_seed("train/text/" + tag);
      ModelCheckpoint ckpt = train_mlp(mcfg, sets.text_train, sets.text_val, tcfg);
      detail::write_checkpoint_artifact(ckpt, cfg, paths.checkpoint("text", strategy));
      detail::write_with_hash_header(paths.train_log("text", strategy),
                                     detail::train_log_to_string(ckpt), cfg.config_hash);
      outputs.push_back(paths.checkpoint("text", strategy));
      details["text_" + tag + "_val_loss"] = ckpt.val_loss;
    }

    // Two-branch fusion.
    {
      FusionConfig fcfg;
      fcfg.text_dim = embeddings.dim;
      fcfg.tabular_branch.input_dim = corpus.schema.encoded_width();
      fcfg.tabular_branch.hidden_dims = cfg.fusion_model.branch_hidden;
      fcfg.tabular_branch.use_layer_norm = cfg.fusion_model.use_layer_norm;
      fcfg.tabular_branch.dropout_p = cfg.fusion_model.dropout_p;
      fcfg.tabular_branch.output_dim = cfg.fusion_model.branch_out;
      fcfg.classifier_head.input_dim = embeddings.dim + cfg.fusion_model.branch_out;
      fcfg.classifier_head.hidden_dims = cfg.fusion_model.head_hidden;
      fcfg.classifier_head.use_layer_norm = cfg.fusion_model.use_layer_norm;
      fcfg.classifier_head.dropout_p = cfg.fusion_model.dropout_p;
      TrainConfig tcfg = cfg.fusion_model.train;
      tcfg.seed = cfg.stage_seed("train/fusion/" + tag);
      ModelCheckpoint ckpt = train_fusion(fcfg, sets.fusion_train, sets.fusion_val, tcfg);
      ckpt.tabular_stats = sets.stats;
      detail::write_checkpoint_artifact(ckpt, cfg, paths.checkpoint("fusion", strategy));
      detail::write_with_hash_header(paths.train_log("fusion", strategy),
                                     detail::train_log_to_string(ckpt), cfg.config_hash);
      outputs.push_back(paths.checkpoint("fusion", strategy));
      details["fusion_" + tag + "_val_loss"] = ckpt.val_loss;
    }
    details[std::string("missing_embedding_") + tag] = sets.missing_embedding;
  }

  detail::append_manifest(paths, "train", cfg,
                          {paths.corpus_labeled(), paths.curated(CurationStrategy::low_quality),
                           paths.curated(CurationStrategy::high_quality), paths.embeddings()},
                          outputs, timer.elapsed_ms(), details);
}

inline void run_evaluate(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.corpus_labeled(), "fewshot");
  detail::require_stage_input(paths.embeddings(), "reduce");
  detail::require_stage_input(paths.checkpoint("tabular", CurationStrategy::low_quality),
                              "train");

  const Corpus corpus = load_corpus(paths.corpus_labeled(), cfg.schema_path);
  const EmbeddingMatrix embeddings = load_embeddings(paths.embeddings());
  const auto index = build_id_index(embeddings);

  std::vector<const Document*> test_docs;
  for (const auto& doc : corpus.documents)
    if (doc.split == Split::test) test_docs.push_back(&doc);
  if (test_docs.empty())
    throw std::runtime_error("evaluate: corpus has no documents with split=test");

  nlohmann::json entries = nlohmann::json::array();
  const auto add_entry = [&](const std::string& model, const std::string& modality,
                             const std::string& strategy, const std::vector<Label>& truth,
                             const std::vector<Label>& predicted, std::size_t skipped) {
    const auto confusion = confusion_matrix(truth, predicted);
    const EvalReport report = weighted_f1(confusion);
    nlohmann::json e;
    e["model"] = model;
    e["modality"] = modality;
    e["strategy"] = strategy;
    e["accuracy"] = report.accuracy;
    e["weighted_f1"] = report.weighted_f1;
    e["test_documents"] = truth.size();
    e["skipped_documents"] = skipped;
    nlohmann::json cm = nlohmann::json::array();
    for (int i = 0; i < kNumLabels; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < kNumLabels; ++k)
        row.push_back(report.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
      cm.push_back(row);
    }
    e["confusion"] = cm;
    entries.push_back(e);
  };

  for (const CurationStrategy strategy :
       {CurationStrategy::low_quality, CurationStrategy::high_quality}) {
    const std::string tag = curation_strategy_name(strategy);

    {
      const ModelCheckpoint ckpt = load_checkpoint(paths.checkpoint("tabular", strategy));
      const Mlp model = mlp_from_checkpoint(ckpt);
      std::vector<Label> truth, predicted;
      for (const Document* doc : test_docs) {
        truth.push_back(doc->human_label);
        const auto x = encode_tabular(*doc, corpus.schema, ckpt.tabular_stats);
        predicted.push_back(argmax_label(mlp_forward(model, x, RunMode::eval)));
      }
      add_entry("mlp_tabular", "tabular", tag, truth, predicted, 0);
    }

    {
      const ModelCheckpoint ckpt = load_checkpoint(paths.checkpoint("text", strategy));
      const Mlp model = mlp_from_checkpoint(ckpt);
      std::vector<Label> truth, predicted;
      std::size_t skipped = 0;
      for (const Document* doc : test_docs) {
        const auto it = index.find(doc->id);
        if (it == index.end()) {
          ++skipped;  // no embedding (empty text)
          continue;
        }
        truth.push_back(doc->human_label);
        const auto row = embeddings.row(it->second);
        predicted.push_back(
            argmax_label(mlp_forward(model, std::vector<double>(row.begin(), row.end()),
                                     RunMode::eval)));
      }
      add_entry("embedding_text", "text", tag, truth, predicted, skipped);
    }

    {
      const ModelCheckpoint ckpt = load_checkpoint(paths.checkpoint("fusion", strategy));
      const FusionModel model = fusion_from_checkpoint(ckpt);
      std::vector<Label> truth, predicted;
      std::size_t skipped = 0;
      for (const Document* doc : test_docs) {
        const auto it = index.find(doc->id);
        if (it == index.end()) {
          ++skipped;
          continue;
        }
        truth.push_back(doc->human_label);
        const auto row = embeddings.row(it->second);
        const auto tab = encode_tabular(*doc, corpus.schema, ckpt.tabular_stats);
        predicted.push_back(argmax_label(
            fusion_forward(model, std::vector<double>(row.begin(), row.end()), tab,
                           RunMode::eval)));
      }
      add_entry("fusion_multimodal", "text+tabular", tag, truth, predicted, skipped);
    }
  }

  // The few-shot labels themselves, evaluated directly on the test documents.
  {
    std::vector<Label> truth, predicted;
    std::size_t skipped = 0;
    for (const Document* doc : test_docs) {
      if (!doc->llm_label) {
        ++skipped;
        continue;
      }
      truth.push_back(doc->human_label);
      predicted.push_back(*doc->llm_label);
    }
    if (!truth.empty()) add_entry("llm_fewshot", "text", "-", truth, predicted, skipped);
  }

  nlohmann::json j;
  j["config_hash"] = cfg.config_hash;
  j["test_documents"] = test_docs.size();
  j["entries"] = entries;
  write_file(paths.metrics(), j.dump(2) + "\n");

  detail::append_manifest(paths, "evaluate", cfg,
                          {paths.corpus_labeled(), paths.embeddings()}, {paths.metrics()},
                          timer.elapsed_ms());
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << std::fixed << v;
  return out.str();
}

inline void check_artifact_hash(const std::string& path, const std::optional<std::string>& found,
                                const std::string& expected) {
  if (!found)
    throw std::runtime_error("report: artifact " + path + " does not record a config hash");
  if (*found != expected)
    throw std::runtime_error("report: artifact " + path + " was produced by config " + *found +
                             " but the current config is " + expected +
                             "; refusing to mix runs");
}

}  // namespace detail

inline void run_report(const PipelineConfig& cfg, const StagePaths& paths) {
  detail::StageTimer timer;
  detail::ensure_out_dir(paths);
  detail::require_stage_input(paths.topics(), "topics");
  detail::require_stage_input(paths.similarity(), "similarity");
  detail::require_stage_input(paths.agreement(), "agree");
  detail::require_stage_input(paths.curation_summary(), "curate");
  detail::require_stage_input(paths.metrics(), "evaluate");
  detail::require_stage_input(paths.corpus(), "ingest");

  for (const auto& path : {paths.topics(), paths.similarity(), paths.agreement(),
                           paths.curation_summary(), paths.metrics()})
    detail::check_artifact_hash(path, detail::json_config_hash(path), cfg.config_hash);
  detail::check_artifact_hash(paths.corpus(), detail::header_config_hash(paths.corpus()),
                              cfg.config_hash);

  const auto topics = nlohmann::json::parse(slurp_file(paths.topics()));
  const auto similarity = nlohmann::json::parse(slurp_file(paths.similarity()));
  const auto agreement = nlohmann::json::parse(slurp_file(paths.agreement()));
  const auto curation = nlohmann::json::parse(slurp_file(paths.curation_summary()));
  const auto metrics = nlohmann::json::parse(slurp_file(paths.metrics()));

  // Topic table: cluster, size, top terms.
  {
    std::ostringstream out;
    out << "topic\tcount\tterms\n";
    for (const auto& t : topics["topics"]) {
      out << t["name"].get<std::string>() << '\t' << t["count"].get<std::size_t>() << '\t';
      bool first = true;
      for (const auto& term : t["terms"]) {
        if (!first) out << ", ";
        out << term["term"].get<std::string>() << " ("
            << detail::format_double(term["weight"].get<double>(), 4) << ")";
        first = false;
      }
      out << '\n';
    }
    detail::write_with_hash_header(paths.report_topics(), out.str(), cfg.config_hash);
  }

  // Machine-vs-human centroid similarity table.
  {
    std::ostringstream out;
    out << "cluster";
    for (const auto& name : similarity["col_clusters"]) out << '\t' << name.get<std::string>();
    out << '\n';
    const auto& rows = similarity["row_clusters"];
    const auto& values = similarity["values"];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << rows[static_cast<int>(i)].get<std::string>();
      for (const auto& v : values[static_cast<int>(i)]) {
        if (v.is_null())
          out << "\tNA";
        else
          out << '\t' << detail::format_double(v.get<double>());
      }
      out << '\n';
    }
    detail::write_with_hash_header(paths.report_similarity(), out.str(), cfg.config_hash);
  }

  // Agreement matrix, counts and column-normalized.
  {
    AgreementMatrix m;
    for (int i = 0; i < kNumLabels; ++i)
      for (int k = 0; k < kNumLabels; ++k) {
        m.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
            agreement["counts"][i][k].get<std::int64_t>();
        m.normalized[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
            agreement["normalized"][i][k].get<double>();
      }
    m.agreement = agreement["agreement"].get<double>();
    m.total = agreement["total"].get<std::int64_t>();
    m.skipped = agreement["skipped"].get<std::size_t>();
    detail::write_with_hash_header(paths.report_agreement(), agreement_to_string(m),
                                   cfg.config_hash);
  }

  // Curated-set sizes.
  {
    std::ostringstream out;
    out << "strategy\tselected\texcluded_missing_llm\tdropped_disagreement\tcorpus_size\n";
    for (const char* tag : {"low_quality", "high_quality"}) {
      const auto& s = curation[tag];
      out << tag << '\t' << s["selected"].get<std::size_t>() << '\t'
          << s["excluded_missing_llm"].get<std::size_t>() << '\t'
          << s["dropped_disagreement"].get<std::size_t>() << '\t'
          << curation["corpus_size"].get<std::size_t>() << '\n';
    }
    detail::write_with_hash_header(paths.report_curation(), out.str(), cfg.config_hash);
  }

  // Metric table: model x modality with low/high columns.
  {
    std::map<std::pair<std::string, std::string>, std::map<std::string, nlohmann::json>> table;
    for (const auto& e : metrics["entries"])
      table[{e["model"].get<std::string>(), e["modality"].get<std::string>()}]
           [e["strategy"].get<std::string>()] = e;
    std::ostringstream out;
    out << "model\tmodality\taccuracy_low\taccuracy_high\twf1_low\twf1_high\n";
    const auto cell = [&](const std::map<std::string, nlohmann::json>& row,
                          const std::string& strategy, const char* key) -> std::string {
      auto it = row.find(strategy);
      if (it == row.end()) it = row.find("-");  // untrained models span both columns
      if (it == row.end()) return "NA";
      return detail::format_double(it->second[key].get<double>(), 4);
    };
    for (const auto& [key, row] : table) {
      out << key.first << '\t' << key.second << '\t' << cell(row, "low_quality", "accuracy")
          << '\t' << cell(row, "high_quality", "accuracy") << '\t'
          << cell(row, "low_quality", "weighted_f1") << '\t'
          << cell(row, "high_quality", "weighted_f1") << '\n';
    }
    detail::write_with_hash_header(paths.report_metrics(), out.str(), cfg.config_hash);
  }

  // Human-readable summary.
  {
    const Corpus corpus = load_corpus(paths.corpus(), cfg.schema_path);
    const auto histogram = label_histogram(corpus);
    std::size_t empty_text = 0;
    for (const auto& doc : corpus.documents)
      if (doc.text.empty()) ++empty_text;

    std::ostringstream out;
    out << "# Label audit report\n\n";
    out << "Config hash: `" << cfg.config_hash << "`\n\n";
    out << "## Corpus\n\n";
    out << "- documents: " << corpus.size() << "\n";
    out << "- empty-text documents (skipped by text stages): " << empty_text << "\n";
    out << "- label histogram:";
    for (int i = 0; i < kNumLabels; ++i) {
      const double share = corpus.size() > 0
                               ? static_cast<double>(histogram[static_cast<std::size_t>(i)]) /
                                     static_cast<double>(corpus.size())
                               : 0.0;
      out << " " << label_code(label_from_index(i)) << "="
          << histogram[static_cast<std::size_t>(i)] << " ("
          << detail::format_double(share, 3) << ")";
    }
    out << "\n\n";
    out << "## Reduction provenance\n\n";
    out << "- method: " << reduce_method_name(cfg.reducer.method) << "\n";
    out << "- n_components: " << cfg.reducer.n_components << "\n";
    out << "- n_neighbors (external-reducer knob, recorded for provenance): "
        << cfg.reducer.n_neighbors << "\n";
    out << "- min_dist (external-reducer knob, recorded for provenance): "
        << detail::format_double(cfg.reducer.min_dist, 3) << "\n\n";
    out << "## Agreement\n\n";
    out << "- human/LLM agreement ratio: "
        << detail::format_double(agreement["agreement"].get<double>(), 4) << "\n";
    out << "- documents without an LLM label: " << agreement["skipped"].get<std::size_t>()
        << "\n\n";
    out << "## Artifacts\n\n";
    out << "- topics: report_topics.tsv\n";
    out << "- cluster similarity: report_similarity.tsv\n";
    out << "- agreement matrix: report_agreement.tsv\n";
    out << "- curated sets: report_curation.tsv\n";
    out << "- metrics: report_metrics.tsv\n";
    write_file(paths.report_summary(), out.str());
  }

  detail::append_manifest(paths, "report", cfg,
                          {paths.topics(), paths.similarity(), paths.agreement(),
                           paths.curation_summary(), paths.metrics()},
                          {paths.report_topics(), paths.report_similarity(),
                           paths.report_agreement(), paths.report_curation(),
                           paths.report_metrics(), paths.report_summary()},
                          timer.elapsed_ms());
}

}  // namespace labelaudit
