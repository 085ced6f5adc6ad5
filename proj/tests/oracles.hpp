#pragma once

// Independent reference computations for oracle-equivalence checks. These
// deliberately share no code with the library implementations: term weights
// are recomputed from raw token lists, clusters come from a boolean
// transitive closure, metrics are tallied straight from label lists.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

// --- class-based TF-IDF -----------------------------------------------------

struct CtfidfResult {
  std::map<std::string, std::vector<double>> weights;  // term -> per-cluster W
};

inline CtfidfResult ctfidf_bruteforce(const std::vector<std::vector<std::string>>& doc_tokens,
                                      const std::vector<int>& cluster_of,
                                      std::size_t num_clusters) {
  std::map<std::string, std::vector<double>> tf;
  double total_words = 0.0;
  for (std::size_t i = 0; i < doc_tokens.size(); ++i) {
    if (cluster_of[i] < 0) continue;
    for (const auto& tok : doc_tokens[i]) {
      auto& row = tf[tok];
      if (row.empty()) row.assign(num_clusters, 0.0);
      row[static_cast<std::size_t>(cluster_of[i])] += 1.0;
      total_words += 1.0;
    }
  }
  const double mu = total_words / static_cast<double>(num_clusters);
  CtfidfResult result;
  for (const auto& [term, row] : tf) {
    double tf_t = 0.0;
    for (const double v : row) tf_t += v;
    std::vector<double> w(num_clusters, 0.0);
    for (std::size_t c = 0; c < num_clusters; ++c)
      w[c] = row[c] * std::log(1.0 + mu / tf_t);
    result.weights[term] = w;
  }
  return result;
}

// Same recomputation with a different log base; used only for rank-invariance
// checks.
inline CtfidfResult ctfidf_bruteforce_log2(const std::vector<std::vector<std::string>>& doc_tokens,
                                           const std::vector<int>& cluster_of,
                                           std::size_t num_clusters) {
  CtfidfResult natural = ctfidf_bruteforce(doc_tokens, cluster_of, num_clusters);
  // ln x -> log2 x is a fixed positive rescale of every weight.
  for (auto& [term, row] : natural.weights)
    for (double& v : row) v /= std::log(2.0);
  return natural;
}

// --- density clustering ------------------------------------------------------

// Transitive closure of the eps-neighborhood graph restricted to core points,
// border points attached to the lowest-numbered adjacent core cluster,
// clusters below the size threshold dropped, contiguous renumbering.
inline std::vector<int> dbscan_closure(const std::vector<std::vector<double>>& points, double eps,
                                       std::size_t min_pts, std::size_t min_cluster_size) {
  const std::size_t n = points.size();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < points[i].size(); ++a) {
        const double diff = points[i][a] - points[j][a];
        d2 += diff * diff;
      }
      adj[i][j] = d2 <= eps * eps;
    }

  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t degree = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j]) ++degree;
    core[i] = degree >= min_pts;
  }

  // Reachability among cores via boolean closure.
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) reach[i][j] = core[i] && core[j] && adj[i][j];
  for (std::size_t k = 0; k < n; ++k) {
    if (!core[k]) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (reach[k][j]) reach[i][j] = true;
    }
  }

  std::vector<int> labels(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != -1) continue;
    labels[i] = next;
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[j] && reach[i][j]) labels[j] = next;
    ++next;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && adj[i][j] && (best == -1 || labels[j] < best)) best = labels[j];
    labels[i] = best;
  }

  std::vector<std::size_t> sizes(static_cast<std::size_t>(next), 0);
  for (const int l : labels)
    if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
  std::vector<int> remap(static_cast<std::size_t>(next), -1);
  int kept = 0;
  for (int c = 0; c < next; ++c)
    if (sizes[static_cast<std::size_t>(c)] >= min_cluster_size)
      remap[static_cast<std::size_t>(c)] = kept++;
  for (int& l : labels)
    if (l >= 0) l = remap[static_cast<std::size_t>(l)];
  return labels;
}

// Canonical form of an assignment: clusters renumbered by first appearance.
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  int next = 0;
  for (const int l : labels) {
    if (l < 0) {
      out.push_back(-1);
      continue;
    }
    auto [it, inserted] = remap.emplace(l, next);
    if (inserted) ++next;
    out.push_back(it->second);
  }
  return out;
}

// --- metrics ------------------------------------------------------------------

inline double accuracy_from_labels(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == pred[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

inline double weighted_f1_from_labels(const std::vector<int>& truth, const std::vector<int>& pred,
                                      int num_classes) {
  double weighted = 0.0;
  const double n = static_cast<double>(truth.size());
  for (int cls = 0; cls < num_classes; ++cls) {
    double tp = 0, fp = 0, fn = 0, n_i = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == cls) ++n_i;
      if (truth[i] == cls && pred[i] == cls) ++tp;
      if (truth[i] != cls && pred[i] == cls) ++fp;
      if (truth[i] == cls && pred[i] != cls) ++fn;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    weighted += (n_i / n) * f1;
  }
  return weighted;
}

}  // namespace oracle
