#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "labelaudit/corpus.hpp"
#include "labelaudit/io.hpp"

namespace labelaudit {

// Human-vs-LLM label cross-tabulation. Rows = LLM labels, columns = human
// labels; each nonzero column of `normalized` sums to 1.
struct AgreementMatrix {
  std::array<std::array<std::int64_t, kNumLabels>, kNumLabels> counts{};
  std::array<std::array<double, kNumLabels>, kNumLabels> normalized{};
  std::int64_t total = 0;           // documents with both labels present
  std::size_t skipped = 0;          // documents lacking an LLM label
  double agreement = 0.0;           // trace / total
};

inline AgreementMatrix agreement_matrix(const Corpus& c) {
  AgreementMatrix m;
  std::int64_t diag = 0;
  for (const auto& doc : c.documents) {
    if (!doc.llm_label) {
      ++m.skipped;
      continue;
    }
    const auto row = static_cast<std::size_t>(label_index(*doc.llm_label));
    const auto col = static_cast<std::size_t>(label_index(doc.human_label));
    ++m.counts[row][col];
    ++m.total;
    if (row == col) ++diag;
  }
  for (std::size_t col = 0; col < kNumLabels; ++col) {
    std::int64_t col_sum = 0;
    for (std::size_t row = 0; row < kNumLabels; ++row) col_sum += m.counts[row][col];
    if (col_sum == 0) continue;  // all-zero columns stay zero
    for (std::size_t row = 0; row < kNumLabels; ++row)
      m.normalized[row][col] =
          static_cast<double>(m.counts[row][col]) / static_cast<double>(col_sum);
  }
  m.agreement = (m.total > 0) ? static_cast<double>(diag) / static_cast<double>(m.total) : 0.0;
  return m;
}

enum class CurationStrategy { low_quality, high_quality };

inline const char* curation_strategy_name(CurationStrategy s) {
  return s == CurationStrategy::low_quality ? "low_quality" : "high_quality";
}

struct CuratedSet {
  CurationStrategy strategy = CurationStrategy::low_quality;
  std::vector<std::string> ids;                  // corpus order
  std::map<std::string, Label> assigned_label;
  std::size_t excluded_missing_llm = 0;          // needed an LLM label but had none
  std::size_t dropped_disagreement = 0;
};

// Trust every human A1..A6 label; for the fallback class keep only documents
// where the LLM independently also said A7.
inline CuratedSet curate_low_quality(const Corpus& c) {
  CuratedSet set;
  set.strategy = CurationStrategy::low_quality;
  for (const auto& doc : c.documents) {
    if (doc.human_label != kFallbackLabel) {
      set.ids.push_back(doc.id);
      set.assigned_label[doc.id] = doc.human_label;
      continue;
    }
    if (!doc.llm_label) {
      ++set.excluded_missing_llm;
      continue;
    }
    if (*doc.llm_label == kFallbackLabel) {
      set.ids.push_back(doc.id);
      set.assigned_label[doc.id] = doc.human_label;
    } else {
      ++set.dropped_disagreement;
    }
  }
  return set;
}

// Keep only documents where human and LLM labels agree.
inline CuratedSet curate_high_quality(const Corpus& c) {
  CuratedSet set;
  set.strategy = CurationStrategy::high_quality;
  for (const auto& doc : c.documents) {
    if (!doc.llm_label) {
      ++set.excluded_missing_llm;
      continue;
    }
    if (*doc.llm_label == doc.human_label) {
      set.ids.push_back(doc.id);
      set.assigned_label[doc.id] = doc.human_label;
    } else {
      ++set.dropped_disagreement;
    }
  }
  return set;
}

// Export: one id + label per line.
inline std::string curated_to_string(const CuratedSet& set) {
  std::string out;
  for (const auto& id : set.ids) {
    out += id;
    out += '\t';
    out += label_code(set.assigned_label.at(id));
    out += '\n';
  }
  return out;
}

inline void save_curated(const CuratedSet& set, const std::string& path) {
  write_file(path, curated_to_string(set));
}

inline CuratedSet load_curated(const std::string& path, CurationStrategy strategy) {
  CuratedSet set;
  set.strategy = strategy;
  const auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || is_metadata_line(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": expected id<TAB>label");
    const std::string id = line.substr(0, tab);
    const auto label = parse_label_code(line.substr(tab + 1));
    if (!label)
      throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": unknown label");
    set.ids.push_back(id);
    set.assigned_label[id] = *label;
  }
  return set;
}

// 7x7 counts and column-normalized tables, both with explicit axis headers
// (rows = LLM labels, columns = human labels) to keep orientation unambiguous.
inline std::string agreement_to_string(const AgreementMatrix& m) {
  std::ostringstream out;
  out << "counts (rows=llm, cols=human)";
  for (int j = 0; j < kNumLabels; ++j) out << '\t' << label_code(label_from_index(j));
  out << '\n';
  for (int i = 0; i < kNumLabels; ++i) {
    out << label_code(label_from_index(i));
    for (int j = 0; j < kNumLabels; ++j)
      out << '\t' << m.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    out << '\n';
  }
  out << '\n';
  out << "normalized (rows=llm, cols=human)";
  for (int j = 0; j < kNumLabels; ++j) out << '\t' << label_code(label_from_index(j));
  out << '\n';
  out.precision(6);
  out << std::fixed;
  for (int i = 0; i < kNumLabels; ++i) {
    out << label_code(label_from_index(i));
    for (int j = 0; j < kNumLabels; ++j)
      out << '\t' << m.normalized[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    out << '\n';
  }
  out << '\n';
  out << "agreement\t" << m.agreement << '\n';
  out << "total\t" << m.total << '\n';
  out << "skipped\t" << m.skipped << '\n';
  return out.str();
}

}  // namespace labelaudit
