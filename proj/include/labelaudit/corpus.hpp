#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "labelaudit/io.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class Label : int { A1 = 0, A2, A3, A4, A5, A6, A7 };

inline constexpr int kNumLabels = 7;
inline constexpr Label kFallbackLabel = Label::A7;  // "Other Accident"

inline int label_index(Label l) { return static_cast<int>(l); }

inline Label label_from_index(int i) {
  if (i < 0 || i >= kNumLabels) throw std::out_of_range("label index out of range");
  return static_cast<Label>(i);
}

inline const char* label_code(Label l) {
  static const char* codes[kNumLabels] = {"A1", "A2", "A3", "A4", "A5", "A6", "A7"};
  return codes[label_index(l)];
}

inline const char* label_name(Label l) {
  static const char* names[kNumLabels] = {
      "Driving Accident",  "Turning / Crossing Accident", "Turning Accident",
      "Crossing Accident", "Stationary Accident",         "Longitudinal Accident",
      "Other Accident"};
  return names[label_index(l)];
}

// Strict parse of the literal codes "A1".."A7", case-insensitive.
inline std::optional<Label> parse_label_code(std::string_view s) {
  if (s.size() != 2) return std::nullopt;
  const char a = s[0];
  const char d = s[1];
  if (a != 'A' && a != 'a') return std::nullopt;
  if (d < '1' || d > '7') return std::nullopt;
  return static_cast<Label>(d - '1');
}

// ---------------------------------------------------------------------------
// Tabular schema
// ---------------------------------------------------------------------------

enum class FeatureKind { numeric, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  std::vector<std::string> categories;  // categorical only, ordered
};

struct TabularSchema {
  std::vector<FeatureSpec> features;

  // numeric -> 1 slot; categorical -> one slot per category plus an "unknown" bucket.
  std::size_t encoded_width() const {
    std::size_t w = 0;
    for (const auto& f : features)
      w += (f.kind == FeatureKind::numeric) ? 1 : f.categories.size() + 1;
    return w;
  }

  const FeatureSpec* find(std::string_view name) const {
    for (const auto& f : features)
      if (f.name == name) return &f;
    return nullptr;
  }

  void validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& f : features) {
      if (f.name.empty()) throw std::runtime_error("schema: empty feature name");
      if (!seen.insert(f.name).second)
        throw std::runtime_error("schema: duplicate feature name '" + f.name + "'");
      if (f.kind == FeatureKind::categorical && f.categories.empty())
        throw std::runtime_error("schema: categorical feature '" + f.name +
                                 "' lists no categories");
    }
  }
};

inline TabularSchema load_schema(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed schema: " + e.what());
  }
  if (!j.contains("features") || !j["features"].is_array())
    throw std::runtime_error(path + ": schema must contain a 'features' array");
  TabularSchema schema;
  for (const auto& fj : j["features"]) {
    FeatureSpec f;
    f.name = fj.at("name").get<std::string>();
    const std::string kind = fj.at("kind").get<std::string>();
    if (kind == "numeric") {
      f.kind = FeatureKind::numeric;
    } else if (kind == "categorical") {
      f.kind = FeatureKind::categorical;
      for (const auto& c : fj.at("categories")) f.categories.push_back(c.get<std::string>());
    } else {
      throw std::runtime_error(path + ": unknown feature kind '" + kind + "'");
    }
    schema.features.push_back(std::move(f));
  }
  schema.validate();
  return schema;
}

// ---------------------------------------------------------------------------
// Documents and corpora
// ---------------------------------------------------------------------------

using TabularValue = std::variant<std::int64_t, double, std::string>;

enum class Split { none, train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "";
  }
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct Document {
  std::string id;
  std::string text;  // may be empty
  std::map<std::string, TabularValue> tabular;
  Label human_label = kFallbackLabel;
  std::optional<Label> llm_label;
  Split split = Split::none;
};

struct Corpus {
  TabularSchema schema;
  std::vector<Document> documents;

  std::size_t size() const { return documents.size(); }
};

namespace detail {

inline TabularValue tabular_value_from_json(const nlohmann::json& v, const FeatureSpec& f,
                                            const std::string& where) {
  if (f.kind == FeatureKind::numeric) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) return v.get<double>();
    throw std::runtime_error(where + ": numeric feature '" + f.name + "' has non-numeric value");
  }
  if (!v.is_string())
    throw std::runtime_error(where + ": categorical feature '" + f.name +
                             "' has non-string value");
  return v.get<std::string>();
}

inline nlohmann::json tabular_value_to_json(const TabularValue& v) {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  return std::get<std::string>(v);
}

}  // namespace detail

// One record per line. Required keys: id, text, human_label, tabular.
// Optional keys: llm_label, split. '#'-prefixed and blank lines are skipped.
inline Corpus load_corpus(const std::string& path, const std::string& schema_path) {
  Corpus corpus;
  corpus.schema = load_schema(schema_path);

  const auto lines = read_lines(path);
  std::unordered_set<std::string> seen_ids;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || is_metadata_line(line)) continue;
    const std::string where = path + ":" + std::to_string(ln + 1);

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error(where + ": record is not an object");

    Document doc;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
      throw std::runtime_error(where + ": missing or empty 'id'");
    doc.id = j["id"].get<std::string>();
    if (!seen_ids.insert(doc.id).second)
      throw std::runtime_error(where + ": duplicate id '" + doc.id + "'");

    if (!j.contains("text") || !j["text"].is_string())
      throw std::runtime_error(where + ": missing 'text'");
    doc.text = j["text"].get<std::string>();

    if (!j.contains("human_label") || !j["human_label"].is_string())
      throw std::runtime_error(where + ": missing 'human_label'");
    const std::string hl = j["human_label"].get<std::string>();
    const auto parsed = parse_label_code(hl);
    if (!parsed)
      throw std::runtime_error(where + ": unknown label '" + hl + "' (expected A1..A7)");
    doc.human_label = *parsed;

    if (j.contains("llm_label") && !j["llm_label"].is_null()) {
      const std::string ll = j["llm_label"].get<std::string>();
      const auto pl = parse_label_code(ll);
      if (!pl) throw std::runtime_error(where + ": unknown llm_label '" + ll + "'");
      doc.llm_label = *pl;
    }

    if (j.contains("split") && !j["split"].is_null()) {
      const std::string sp = j["split"].get<std::string>();
      const auto ps = parse_split(sp);
      if (!ps) throw std::runtime_error(where + ": unknown split '" + sp + "'");
      doc.split = *ps;
    }

    if (!j.contains("tabular") || !j["tabular"].is_object())
      throw std::runtime_error(where + ": missing 'tabular' object");
    for (const auto& [key, value] : j["tabular"].items()) {
      const FeatureSpec* f = corpus.schema.find(key);
      if (!f)
        throw std::runtime_error(where + ": tabular feature '" + key + "' not in schema");
      doc.tabular.emplace(key, detail::tabular_value_from_json(value, *f, where));
    }

    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

// Canonical single-line rendering of one record (keys in fixed alphabetical order).
inline std::string document_to_line(const Document& doc) {
  nlohmann::json j;
  j["human_label"] = label_code(doc.human_label);
  j["id"] = doc.id;
  if (doc.llm_label) j["llm_label"] = label_code(*doc.llm_label);
  if (doc.split != Split::none) j["split"] = split_name(doc.split);
  nlohmann::json tab = nlohmann::json::object();
  for (const auto& [k, v] : doc.tabular) tab[k] = detail::tabular_value_to_json(v);
  j["tabular"] = tab;
  j["text"] = doc.text;
  return j.dump();
}

inline std::string corpus_to_string(const Corpus& c) {
  std::string out;
  for (const auto& doc : c.documents) {
    out += document_to_line(doc);
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Corpus& c, const std::string& path) {
  write_file(path, corpus_to_string(c));
}

// Deterministic seeded train/val assignment over non-test documents. Documents
// already marked test keep their split. Returns a new corpus.
inline Corpus split_corpus(const Corpus& c, double val_fraction, std::int64_t seed) {
  if (c.documents.size() < 2)
    throw std::runtime_error("split_corpus: corpus must have at least 2 documents");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::runtime_error("split_corpus: val_fraction must lie in (0,1)");

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < c.documents.size(); ++i)
    if (c.documents[i].split != Split::test) candidates.push_back(i);

  const std::size_t n = candidates.size();
  const auto n_val = static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(n) + 0.5));
  if (n_val == 0 || n_val >= n)
    throw std::runtime_error("split_corpus: val_fraction " + std::to_string(val_fraction) +
                             " leaves an empty train or val side for " + std::to_string(n) +
                             " documents");

  Rng rng(static_cast<std::uint64_t>(seed));
  rng.shuffle(candidates);

  Corpus out = c;
  for (std::size_t i = 0; i < n; ++i)
    out.documents[candidates[i]].split = (i < n_val) ? Split::val : Split::train;
  return out;
}

inline std::array<std::int64_t, kNumLabels> label_histogram(const Corpus& c) {
  std::array<std::int64_t, kNumLabels> counts{};
  for (const auto& doc : c.documents) ++counts[static_cast<std::size_t>(label_index(doc.human_label))];
  return counts;
}

}  // namespace labelaudit
