#include <catch2/catch.hpp>

#include <set>

#include "helpers.hpp"
#include "labelaudit/curation.hpp"
#include "labelaudit/rng.hpp"

using namespace labelaudit;

namespace {

Corpus corpus_from_pairs(const std::vector<std::pair<Label, std::optional<Label>>>& pairs) {
  Corpus c;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.human_label = pairs[i].first;
    d.llm_label = pairs[i].second;
    c.documents.push_back(d);
  }
  return c;
}

}  // namespace

TEST_CASE("agreement matrix tallies llm rows against human columns", "[curation]") {
  const auto c = corpus_from_pairs({{Label::A1, Label::A1}, {Label::A7, Label::A5}});
  const auto m = agreement_matrix(c);
  CHECK(m.counts[0][0] == 1);  // llm A1, human A1
  CHECK(m.counts[4][6] == 1);  // llm A5, human A7
  CHECK(m.total == 2);
  CHECK(m.agreement == Approx(0.5));
}

TEST_CASE("full agreement yields the identity pattern", "[curation]") {
  const auto c = corpus_from_pairs(
      {{Label::A1, Label::A1}, {Label::A3, Label::A3}, {Label::A7, Label::A7}});
  const auto m = agreement_matrix(c);
  CHECK(m.agreement == Approx(1.0));
  for (int i = 0; i < kNumLabels; ++i)
    for (int j = 0; j < kNumLabels; ++j) {
      const double expected = (i == j && (i == 0 || i == 2 || i == 6)) ? 1.0 : 0.0;
      CHECK(m.normalized[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            Approx(expected).margin(1e-12));
    }
}

TEST_CASE("the planted fallback column reproduces its shares", "[curation]") {
  // 100 documents with human label A7; the LLM column pattern is
  // 69 A5, 20 A7, 4 A1, 3 A3, 2 A6, 1 A2, 1 A4.
  std::vector<std::pair<Label, std::optional<Label>>> pairs;
  const std::vector<std::pair<Label, int>> shares = {{Label::A5, 69}, {Label::A7, 20},
                                                     {Label::A1, 4},  {Label::A3, 3},
                                                     {Label::A6, 2},  {Label::A2, 1},
                                                     {Label::A4, 1}};
  for (const auto& [llm, count] : shares)
    for (int i = 0; i < count; ++i) pairs.push_back({Label::A7, llm});
  const auto m = agreement_matrix(corpus_from_pairs(pairs));

  CHECK(m.normalized[4][6] == Approx(0.69).margin(1e-9));
  CHECK(m.normalized[6][6] == Approx(0.20).margin(1e-9));
  CHECK(m.normalized[0][6] == Approx(0.04).margin(1e-9));
  CHECK(m.normalized[2][6] == Approx(0.03).margin(1e-9));
  CHECK(m.normalized[5][6] == Approx(0.02).margin(1e-9));
  CHECK(m.normalized[1][6] == Approx(0.01).margin(1e-9));
  CHECK(m.normalized[3][6] == Approx(0.01).margin(1e-9));

  double col_sum = 0.0;
  for (int i = 0; i < kNumLabels; ++i) col_sum += m.normalized[static_cast<std::size_t>(i)][6];
  CHECK(col_sum == Approx(1.0).margin(1e-9));
}

TEST_CASE("normalized columns sum to one and counts plus skips conserve", "[curation][property]") {
  Rng rng(149);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<Label, std::optional<Label>>> pairs;
    const std::size_t n = rng.uniform_index(80);
    for (std::size_t i = 0; i < n; ++i) {
      const Label human = label_from_index(static_cast<int>(rng.uniform_index(7)));
      std::optional<Label> llm;
      if (rng.uniform() < 0.8) llm = label_from_index(static_cast<int>(rng.uniform_index(7)));
      pairs.push_back({human, llm});
    }
    const auto c = corpus_from_pairs(pairs);
    const auto m = agreement_matrix(c);

    CHECK(static_cast<std::size_t>(m.total) + m.skipped == n);
    for (int j = 0; j < kNumLabels; ++j) {
      double col_sum = 0.0;
      std::int64_t count_sum = 0;
      for (int i = 0; i < kNumLabels; ++i) {
        col_sum += m.normalized[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        count_sum += m.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      if (count_sum > 0)
        CHECK(col_sum == Approx(1.0).margin(1e-9));
      else
        CHECK(col_sum == 0.0);
    }

    // Agreement equals the column-share-weighted diagonal, recomputed
    // independently from the counts.
    if (m.total > 0) {
      double recomputed = 0.0;
      for (int i = 0; i < kNumLabels; ++i) {
        std::int64_t col = 0;
        for (int r = 0; r < kNumLabels; ++r)
          col += m.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
        const double col_share = static_cast<double>(col) / static_cast<double>(m.total);
        recomputed +=
            m.normalized[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] * col_share;
      }
      CHECK(m.agreement == Approx(recomputed).margin(1e-9));
    }
  }
}

TEST_CASE("low-quality curation keeps named classes and fallback agreements", "[curation]") {
  const auto c = corpus_from_pairs({{Label::A1, Label::A3},
                                    {Label::A2, Label::A2},
                                    {Label::A7, Label::A5},
                                    {Label::A7, Label::A7}});
  const auto set = curate_low_quality(c);
  CHECK(set.ids == std::vector<std::string>{"d0", "d1", "d3"});
  CHECK(set.assigned_label.at("d0") == Label::A1);
  CHECK(set.assigned_label.at("d3") == Label::A7);
  CHECK(set.dropped_disagreement == 1);
}

TEST_CASE("low-quality curation edge cases", "[curation]") {
  const auto none = curate_low_quality(corpus_from_pairs(
      {{Label::A7, Label::A5}, {Label::A7, Label::A1}}));
  CHECK(none.ids.empty());

  const auto all = curate_low_quality(corpus_from_pairs(
      {{Label::A1, std::nullopt}, {Label::A6, Label::A2}}));
  CHECK(all.ids.size() == 2);

  const auto missing = curate_low_quality(corpus_from_pairs({{Label::A7, std::nullopt}}));
  CHECK(missing.ids.empty());
  CHECK(missing.excluded_missing_llm == 1);
}

TEST_CASE("high-quality curation keeps the diagonal", "[curation]") {
  const auto c = corpus_from_pairs({{Label::A1, Label::A3},
                                    {Label::A2, Label::A2},
                                    {Label::A7, Label::A5},
                                    {Label::A7, Label::A7}});
  const auto set = curate_high_quality(c);
  CHECK(set.ids == std::vector<std::string>{"d1", "d3"});

  const auto disagree = curate_high_quality(corpus_from_pairs(
      {{Label::A1, Label::A2}, {Label::A5, Label::A4}}));
  CHECK(disagree.ids.empty());

  const auto agree = curate_high_quality(corpus_from_pairs(
      {{Label::A3, Label::A3}, {Label::A6, Label::A6}}));
  CHECK(agree.ids.size() == 2);

  const auto missing = curate_high_quality(corpus_from_pairs({{Label::A2, std::nullopt}}));
  CHECK(missing.ids.empty());
  CHECK(missing.excluded_missing_llm == 1);
}

TEST_CASE("the high-quality set is a subset of the low-quality set", "[curation][property]") {
  Rng rng(151);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<Label, std::optional<Label>>> pairs;
    const std::size_t n = rng.uniform_index(60);
    for (std::size_t i = 0; i < n; ++i) {
      const Label human = label_from_index(static_cast<int>(rng.uniform_index(7)));
      std::optional<Label> llm;
      if (rng.uniform() < 0.85) llm = label_from_index(static_cast<int>(rng.uniform_index(7)));
      pairs.push_back({human, llm});
    }
    const auto c = corpus_from_pairs(pairs);
    const auto low = curate_low_quality(c);
    const auto high = curate_high_quality(c);
    const std::set<std::string> low_ids(low.ids.begin(), low.ids.end());
    for (const auto& id : high.ids) CHECK(low_ids.count(id) == 1);
  }
}

TEST_CASE("curated sets round-trip through the id+label export", "[curation]") {
  testutil::TempDir tmp;
  const auto c = corpus_from_pairs({{Label::A2, Label::A2}, {Label::A7, Label::A7}});
  const auto set = curate_high_quality(c);
  save_curated(set, tmp.file("set.tsv"));
  const auto loaded = load_curated(tmp.file("set.tsv"), CurationStrategy::high_quality);
  CHECK(loaded.ids == set.ids);
  CHECK(loaded.assigned_label.at("d1") == Label::A7);
}

TEST_CASE("agreement export carries both axes explicitly", "[curation]") {
  const auto c = corpus_from_pairs({{Label::A1, Label::A1}});
  const auto text = agreement_to_string(agreement_matrix(c));
  CHECK(text.find("rows=llm") != std::string::npos);
  CHECK(text.find("cols=human") != std::string::npos);
  CHECK(text.find("agreement\t1.000000") != std::string::npos);
}
