#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "labelaudit/cluster.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/embed.hpp"
#include "labelaudit/text.hpp"

namespace labelaudit {

// Lowercase, split on non-word codepoints, drop tokens shorter than 2
// codepoints. No stemming, no stop-wording.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  for (auto& w : split_words(text))
    if (w.length >= 2) tokens.push_back(std::move(w.token));
  return tokens;
}

// Term frequencies per cluster plus the aggregates of the class-based TF-IDF
// weighting: tf_total[t] sums the term over all clusters, mu is the average
// number of words per cluster.
struct TermStats {
  std::vector<std::string> vocabulary;     // sorted, unique
  std::vector<std::vector<double>> tf;     // term x cluster counts
  std::vector<double> tf_total;            // per term
  double mu = 0.0;
  std::size_t num_clusters = 0;
  std::size_t skipped_empty_docs = 0;      // empty-text documents contribute nothing
  std::size_t skipped_noise_docs = 0;
};

inline TermStats build_term_stats(const std::vector<std::string>& texts,
                                  const std::vector<int>& cluster_of,
                                  std::size_t num_clusters) {
  if (texts.size() != cluster_of.size())
    throw std::runtime_error("build_term_stats: texts/cluster size mismatch");
  TermStats stats;
  stats.num_clusters = num_clusters;

  std::map<std::string, std::vector<double>> counts;  // ordered -> sorted vocabulary
  double total_words = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const int cluster = cluster_of[i];
    if (cluster < 0) {
      ++stats.skipped_noise_docs;
      continue;
    }
    if (static_cast<std::size_t>(cluster) >= num_clusters)
      throw std::runtime_error("build_term_stats: cluster id out of range");
    const auto tokens = tokenize(texts[i]);
    if (tokens.empty()) {
      if (texts[i].empty()) ++stats.skipped_empty_docs;
      continue;
    }
    for (const auto& tok : tokens) {
      auto& row = counts[tok];
      if (row.empty()) row.assign(num_clusters, 0.0);
      row[static_cast<std::size_t>(cluster)] += 1.0;
      total_words += 1.0;
    }
  }

  stats.vocabulary.reserve(counts.size());
  stats.tf.reserve(counts.size());
  for (auto& [term, row] : counts) {
    stats.vocabulary.push_back(term);
    double total = 0.0;
    for (const double v : row) total += v;
    stats.tf_total.push_back(total);
    stats.tf.push_back(std::move(row));
  }
  stats.mu = (num_clusters > 0) ? total_words / static_cast<double>(num_clusters) : 0.0;
  return stats;
}

inline TermStats build_term_stats(const Corpus& c, const ClusterAssignment& a) {
  if (c.documents.size() != a.labels.size())
    throw std::runtime_error("build_term_stats: corpus/assignment size mismatch");
  std::vector<std::string> texts;
  texts.reserve(c.documents.size());
  for (const auto& doc : c.documents) texts.push_back(doc.text);
  return build_term_stats(texts, a.labels, static_cast<std::size_t>(a.num_clusters));
}

// W[t][c] = tf[t][c] * ln(1 + mu / tf_total[t]). The natural log is a fixed
// choice; any base rescales all weights by one positive constant, so term
// rankings are unchanged.
inline std::vector<std::vector<double>> ctfidf(const TermStats& stats) {
  std::vector<std::vector<double>> weights(stats.vocabulary.size());
  for (std::size_t t = 0; t < stats.vocabulary.size(); ++t) {
    if (!(stats.tf_total[t] > 0.0))
      throw std::runtime_error("ctfidf: term '" + stats.vocabulary[t] +
                               "' has zero total frequency (vocabulary construction bug)");
    const double idf = std::log(1.0 + stats.mu / stats.tf_total[t]);
    weights[t].resize(stats.num_clusters);
    for (std::size_t c = 0; c < stats.num_clusters; ++c) weights[t][c] = stats.tf[t][c] * idf;
  }
  return weights;
}

struct TopicRepresentation {
  int cluster = 0;
  std::vector<std::pair<std::string, double>> terms;  // weight-descending
};

// Per cluster, the k highest-weight terms; ties broken by lexicographic term
// order; zero-weight terms are never listed.
inline std::vector<TopicRepresentation> top_terms(const std::vector<std::string>& vocabulary,
                                                  const std::vector<std::vector<double>>& weights,
                                                  std::size_t num_clusters, std::size_t k) {
  if (k < 1) throw std::runtime_error("top_terms: k must be >= 1");
  std::vector<TopicRepresentation> topics;
  topics.reserve(num_clusters);
  for (std::size_t c = 0; c < num_clusters; ++c) {
    TopicRepresentation topic;
    topic.cluster = static_cast<int>(c);
    std::vector<std::size_t> candidates;
    for (std::size_t t = 0; t < vocabulary.size(); ++t)
      if (weights[t][c] > 0.0) candidates.push_back(t);
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      if (weights[a][c] != weights[b][c]) return weights[a][c] > weights[b][c];
      return vocabulary[a] < vocabulary[b];
    });
    if (candidates.size() > k) candidates.resize(k);
    for (const std::size_t t : candidates) topic.terms.emplace_back(vocabulary[t], weights[t][c]);
    topics.push_back(std::move(topic));
  }
  return topics;
}

// Cosine similarities between the cluster centroids of two assignments over
// one embedding matrix. Entries where either side's cluster is empty are
// reported missing, never zero.
struct SimilarityMatrix {
  std::vector<std::string> row_clusters;
  std::vector<std::string> col_clusters;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<bool>> present;
};

inline SimilarityMatrix cross_similarity(const ClusterAssignment& a, const ClusterAssignment& b,
                                         const EmbeddingMatrix& m) {
  const auto cent_a = cluster_centroids(a, m);
  const auto cent_b = cluster_centroids(b, m);

  SimilarityMatrix out;
  out.row_clusters = a.cluster_names;
  out.col_clusters = b.cluster_names;
  const std::size_t rows = static_cast<std::size_t>(a.num_clusters);
  const std::size_t cols = static_cast<std::size_t>(b.num_clusters);
  out.values.assign(rows, std::vector<double>(cols, 0.0));
  out.present.assign(rows, std::vector<bool>(cols, false));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto ai = cent_a.find(static_cast<int>(i));
    if (ai == cent_a.end()) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      const auto bj = cent_b.find(static_cast<int>(j));
      if (bj == cent_b.end()) continue;
      out.values[i][j] = cosine(ai->second, bj->second);
      out.present[i][j] = true;
    }
  }
  return out;
}

}  // namespace labelaudit
