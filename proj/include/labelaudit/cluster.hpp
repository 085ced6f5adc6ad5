#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "labelaudit/corpus.hpp"
#include "labelaudit/embed.hpp"

namespace labelaudit {

struct ClusterConfig {
  double eps = 0.5;               // neighborhood radius
  std::size_t min_pts = 4;        // core-point threshold (neighborhood includes the point)
  std::size_t min_cluster_size = 1;

  void validate() const {
    if (!(eps > 0.0)) throw std::runtime_error("cluster: eps must be > 0");
    if (min_pts < 1) throw std::runtime_error("cluster: min_pts must be >= 1");
    if (min_cluster_size < 1) throw std::runtime_error("cluster: min_cluster_size must be >= 1");
  }
};

enum class ClusterSource { machine, human };

// Per-document cluster id; -1 marks noise. Clusters are numbered 0..k-1.
struct ClusterAssignment {
  std::vector<std::string> ids;
  std::vector<int> labels;
  ClusterSource source = ClusterSource::machine;
  int num_clusters = 0;
  std::vector<std::string> cluster_names;  // size num_clusters

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(num_clusters), 0);
    for (const int l : labels)
      if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
  }
};

// Density clustering with Euclidean distance and exact pairwise neighborhoods.
// Core points (neighborhood of size >= min_pts, self included) connect into
// clusters; border points join the lowest-numbered adjacent core cluster;
// clusters below min_cluster_size are relabeled noise and the rest renumbered
// contiguously.
inline ClusterAssignment dbscan(const EmbeddingMatrix& m, const ClusterConfig& cfg) {
  cfg.validate();
  const std::size_t n = m.rows();
  if (n == 0) throw std::runtime_error("dbscan: empty matrix");
  const double eps_sq = cfg.eps * cfg.eps;

  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) neighbors[i].push_back(i);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = m.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto rj = m.row(j);
      double dist_sq = 0.0;
      for (std::size_t a = 0; a < m.dim; ++a) {
        const double diff = ri[a] - rj[a];
        dist_sq += diff * diff;
      }
      if (dist_sq <= eps_sq) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }

  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) core[i] = neighbors[i].size() >= cfg.min_pts;

  // Connected components over core points, discovered in index order.
  std::vector<int> labels(n, -1);
  int next_cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != -1) continue;
    const int cid = next_cluster++;
    std::deque<std::size_t> frontier{i};
    labels[i] = cid;
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (const std::size_t q : neighbors[p]) {
        if (!core[q] || labels[q] != -1) continue;
        labels[q] = cid;
        frontier.push_back(q);
      }
    }
  }

  // Border points: lowest-numbered adjacent core cluster.
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (const std::size_t q : neighbors[i]) {
      if (!core[q]) continue;
      if (best == -1 || labels[q] < best) best = labels[q];
    }
    labels[i] = best;
  }

  // Min-size filter, then contiguous renumbering by ascending old id.
  std::vector<std::size_t> sizes(static_cast<std::size_t>(next_cluster), 0);
  for (const int l : labels)
    if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
  std::vector<int> remap(static_cast<std::size_t>(next_cluster), -1);
  int kept = 0;
  for (int c = 0; c < next_cluster; ++c)
    if (sizes[static_cast<std::size_t>(c)] >= cfg.min_cluster_size) remap[static_cast<std::size_t>(c)] = kept++;
  for (int& l : labels)
    if (l >= 0) l = remap[static_cast<std::size_t>(l)];

  ClusterAssignment out;
  out.ids = m.ids;
  out.labels = std::move(labels);
  out.source = ClusterSource::machine;
  out.num_clusters = kept;
  for (int c = 0; c < kept; ++c) out.cluster_names.push_back("C" + std::to_string(c));
  return out;
}

// Human-label clustering: seven clusters in fixed order A1..A7, empty classes
// retained for alignment.
inline ClusterAssignment clusters_from_labels(const Corpus& c) {
  ClusterAssignment out;
  out.source = ClusterSource::human;
  out.num_clusters = kNumLabels;
  for (int i = 0; i < kNumLabels; ++i) out.cluster_names.push_back(label_code(label_from_index(i)));
  for (const auto& doc : c.documents) {
    out.ids.push_back(doc.id);
    out.labels.push_back(label_index(doc.human_label));
  }
  return out;
}

// Per-cluster componentwise mean of member vectors. Noise is excluded and
// empty clusters are omitted from the map.
inline std::map<int, std::vector<double>> cluster_centroids(const ClusterAssignment& a,
                                                            const EmbeddingMatrix& m) {
  if (a.ids.size() != a.labels.size())
    throw std::runtime_error("cluster_centroids: malformed assignment");
  const auto index = build_id_index(m);
  std::map<int, std::vector<double>> sums;
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    const int cluster = a.labels[i];
    if (cluster < 0) continue;
    const auto it = index.find(a.ids[i]);
    if (it == index.end())
      throw std::runtime_error("cluster_centroids: id '" + a.ids[i] +
                               "' missing from embedding matrix");
    const auto row = m.row(it->second);
    auto& sum = sums[cluster];
    if (sum.empty()) sum.assign(m.dim, 0.0);
    for (std::size_t d = 0; d < m.dim; ++d) sum[d] += row[d];
    ++counts[cluster];
  }
  for (auto& [cluster, sum] : sums) {
    const double inv = 1.0 / static_cast<double>(counts[cluster]);
    for (double& v : sum) v *= inv;
  }
  return sums;
}

// Export: one line per id with its cluster integer (-1 noise).
inline std::string assignment_to_string(const ClusterAssignment& a) {
  std::string out;
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    out += a.ids[i];
    out += '\t';
    out += std::to_string(a.labels[i]);
    out += '\n';
  }
  return out;
}

inline void save_assignment(const ClusterAssignment& a, const std::string& path) {
  write_file(path, assignment_to_string(a));
}

inline ClusterAssignment load_assignment(const std::string& path, ClusterSource source) {
  ClusterAssignment out;
  out.source = source;
  int max_label = -1;
  const auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || is_metadata_line(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": expected id<TAB>cluster");
    out.ids.push_back(line.substr(0, tab));
    const int label = std::stoi(line.substr(tab + 1));
    out.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  out.num_clusters = max_label + 1;
  for (int c = 0; c < out.num_clusters; ++c)
    out.cluster_names.push_back(source == ClusterSource::human && c < kNumLabels
                                    ? label_code(label_from_index(c))
                                    : "C" + std::to_string(c));
  return out;
}

}  // namespace labelaudit
