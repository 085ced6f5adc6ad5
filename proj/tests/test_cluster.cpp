#include <catch2/catch.hpp>

#include <set>

#include "helpers.hpp"
#include "labelaudit/cluster.hpp"
#include "oracles.hpp"

using namespace labelaudit;

namespace {

EmbeddingMatrix matrix_from_points(const std::vector<std::vector<double>>& points) {
  EmbeddingMatrix m;
  m.dim = points.front().size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    m.ids.push_back("p" + std::to_string(i));
    m.data.insert(m.data.end(), points[i].begin(), points[i].end());
  }
  return m;
}

Corpus corpus_with_labels(const std::vector<Label>& labels) {
  Corpus c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.human_label = labels[i];
    c.documents.push_back(d);
  }
  return c;
}

}  // namespace

TEST_CASE("dbscan separates the two 1-dim groups", "[cluster]") {
  const auto m = matrix_from_points({{0}, {1}, {2}, {10}, {11}});
  ClusterConfig cfg;
  cfg.eps = 1.5;
  cfg.min_pts = 2;
  cfg.min_cluster_size = 2;
  const auto a = dbscan(m, cfg);
  CHECK(a.num_clusters == 2);
  CHECK(a.labels == std::vector<int>{0, 0, 0, 1, 1});
}

TEST_CASE("an isolated point is noise", "[cluster]") {
  const auto m = matrix_from_points({{0.0}});
  ClusterConfig cfg;
  cfg.eps = 1.0;
  cfg.min_pts = 2;
  const auto a = dbscan(m, cfg);
  CHECK(a.labels == std::vector<int>{-1});
  CHECK(a.num_clusters == 0);
}

TEST_CASE("identical points with min_pts 1 form one cluster", "[cluster]") {
  const auto m = matrix_from_points({{3, 3}, {3, 3}, {3, 3}, {3, 3}});
  ClusterConfig cfg;
  cfg.eps = 0.5;
  cfg.min_pts = 1;
  const auto a = dbscan(m, cfg);
  CHECK(a.num_clusters == 1);
  for (const int l : a.labels) CHECK(l == 0);
}

TEST_CASE("dbscan rejects an empty matrix", "[cluster]") {
  EmbeddingMatrix empty;
  empty.dim = 2;
  CHECK_THROWS(dbscan(empty, ClusterConfig{}));
}

TEST_CASE("dbscan equals the transitive-closure oracle on random instances",
          "[cluster][oracle]") {
  Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(60);
    const std::size_t dim = 1 + rng.uniform_index(3);
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p;
      for (std::size_t d = 0; d < dim; ++d) p.push_back(rng.uniform(-5, 5));
      points.push_back(p);
    }
    ClusterConfig cfg;
    cfg.eps = 0.3 + rng.uniform() * 2.0;
    cfg.min_pts = 1 + rng.uniform_index(4);
    cfg.min_cluster_size = 1 + rng.uniform_index(3);

    const auto impl = dbscan(matrix_from_points(points), cfg);
    const auto expected =
        oracle::dbscan_closure(points, cfg.eps, cfg.min_pts, cfg.min_cluster_size);
    CHECK(oracle::canonical_labels(impl.labels) == oracle::canonical_labels(expected));
  }
}

TEST_CASE("min_cluster_size filtering leaves no undersized cluster", "[cluster][property]") {
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(80);
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < n; ++i) points.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4)});
    ClusterConfig cfg;
    cfg.eps = 0.5 + rng.uniform();
    cfg.min_pts = 1 + rng.uniform_index(3);
    cfg.min_cluster_size = 2 + rng.uniform_index(4);
    const auto a = dbscan(matrix_from_points(points), cfg);

    const auto sizes = a.cluster_sizes();
    std::size_t noise = 0;
    for (const int l : a.labels)
      if (l < 0) ++noise;
    std::size_t in_clusters = 0;
    for (const std::size_t s : sizes) {
      CHECK(s >= cfg.min_cluster_size);
      in_clusters += s;
    }
    CHECK(noise + in_clusters == n);
    // Contiguous numbering.
    for (const int l : a.labels) CHECK(l < a.num_clusters);
  }
}

TEST_CASE("core-point clustering is invariant to input permutation", "[cluster][property]") {
  Rng rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 10 + rng.uniform_index(40);
    std::vector<std::vector<double>> points;
    for (std::size_t i = 0; i < n; ++i) points.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});
    ClusterConfig cfg;
    cfg.eps = 0.8;
    cfg.min_pts = 1;  // every point is core, so no border tie-breaks apply
    cfg.min_cluster_size = 1;

    const auto direct = dbscan(matrix_from_points(points), cfg);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::vector<double>> shuffled;
    for (const std::size_t i : perm) shuffled.push_back(points[i]);
    const auto permuted = dbscan(matrix_from_points(shuffled), cfg);

    // Same partition: points land together iff they landed together before.
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const bool together_before = direct.labels[perm[a]] == direct.labels[perm[b]];
        const bool together_after = permuted.labels[a] == permuted.labels[b];
        CHECK(together_before == together_after);
      }
  }
}

TEST_CASE("clusters_from_labels keeps the seven classes in fixed order", "[cluster]") {
  const auto a = clusters_from_labels(corpus_with_labels({Label::A1, Label::A7, Label::A7}));
  CHECK(a.num_clusters == 7);
  CHECK(a.source == ClusterSource::human);
  CHECK(a.labels == std::vector<int>{0, 6, 6});
  CHECK(a.cluster_names.front() == "A1");
  CHECK(a.cluster_names.back() == "A7");

  const auto all7 = clusters_from_labels(corpus_with_labels(std::vector<Label>(5, Label::A7)));
  CHECK(all7.labels == std::vector<int>(5, 6));

  std::vector<Label> one_each;
  for (int i = 0; i < 7; ++i) one_each.push_back(label_from_index(i));
  const auto singletons = clusters_from_labels(corpus_with_labels(one_each));
  CHECK(singletons.labels == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("cluster_centroids averages members and skips noise", "[cluster]") {
  const auto m = matrix_from_points({{1, 0}, {0, 1}, {9, 9}});
  ClusterAssignment a;
  a.ids = m.ids;
  a.labels = {0, 0, -1};
  a.num_clusters = 1;
  a.cluster_names = {"C0"};
  const auto centroids = cluster_centroids(a, m);
  REQUIRE(centroids.size() == 1);
  CHECK(centroids.at(0) == std::vector<double>{0.5, 0.5});

  ClusterAssignment noise_only;
  noise_only.ids = m.ids;
  noise_only.labels = {-1, -1, -1};
  noise_only.num_clusters = 0;
  CHECK(cluster_centroids(noise_only, m).empty());

  ClusterAssignment singletons;
  singletons.ids = m.ids;
  singletons.labels = {0, 1, -1};
  singletons.num_clusters = 2;
  const auto two = cluster_centroids(singletons, m);
  CHECK(two.at(0) == std::vector<double>{1, 0});
  CHECK(two.at(1) == std::vector<double>{0, 1});

  ClusterAssignment mismatched;
  mismatched.ids = {"p0", "p1", "missing"};
  mismatched.labels = {0, 0, 0};
  mismatched.num_clusters = 1;
  CHECK_THROWS_WITH(cluster_centroids(mismatched, m), Catch::Contains("missing"));
}

TEST_CASE("assignment export round-trips through the line format", "[cluster]") {
  testutil::TempDir tmp;
  ClusterAssignment a;
  a.ids = {"x", "y", "z"};
  a.labels = {0, -1, 1};
  a.num_clusters = 2;
  a.cluster_names = {"C0", "C1"};
  save_assignment(a, tmp.file("a.tsv"));
  const auto loaded = load_assignment(tmp.file("a.tsv"), ClusterSource::machine);
  CHECK(loaded.ids == a.ids);
  CHECK(loaded.labels == a.labels);
  CHECK(loaded.num_clusters == 2);
}
