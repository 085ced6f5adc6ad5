#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "labelaudit/io.hpp"
#include "labelaudit/rng.hpp"
#include "labelaudit/text.hpp"

namespace labelaudit {

// Id-aligned dense document vectors, row-major.
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<double> data;
  bool reduced = false;

  std::size_t rows() const { return ids.size(); }

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }

  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

inline std::unordered_map<std::string, std::size_t> build_id_index(const EmbeddingMatrix& m) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) index.emplace(m.ids[i], i);
  return index;
}

// One record per line: {"id": ..., "vector": [...]}. All vectors must share
// one dimension and contain only finite values.
inline EmbeddingMatrix load_embeddings(const std::string& path) {
  EmbeddingMatrix m;
  const auto lines = read_lines(path);
  std::unordered_map<std::string, std::size_t> seen;
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
    if (!j.contains("id") || !j["id"].is_string())
      throw std::runtime_error(where + ": missing 'id'");
    if (!j.contains("vector") || !j["vector"].is_array())
      throw std::runtime_error(where + ": missing 'vector'");

    const std::string id = j["id"].get<std::string>();
    if (!seen.emplace(id, ln).second)
      throw std::runtime_error(where + ": duplicate id '" + id + "'");

    std::vector<double> vec;
    vec.reserve(j["vector"].size());
    for (const auto& v : j["vector"]) {
      if (!v.is_number())
        throw std::runtime_error(where + ": non-numeric vector entry for id '" + id + "'");
      vec.push_back(v.get<double>());
    }
    if (vec.empty()) throw std::runtime_error(where + ": empty vector");
    for (const double v : vec)
      if (!std::isfinite(v))
        throw std::runtime_error(where + ": non-finite value in vector for id '" + id + "'");

    if (m.dim == 0) {
      m.dim = vec.size();
    } else if (vec.size() != m.dim) {
      throw std::runtime_error(where + ": vector of dimension " + std::to_string(vec.size()) +
                               " does not match established dimension " + std::to_string(m.dim));
    }
    m.ids.push_back(id);
    m.data.insert(m.data.end(), vec.begin(), vec.end());
  }
  return m;
}

inline std::string embeddings_to_string(const EmbeddingMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    nlohmann::json j;
    j["id"] = m.ids[i];
    j["vector"] = std::vector<double>(m.row(i).begin(), m.row(i).end());
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  write_file(path, embeddings_to_string(m));
}

// Componentwise arithmetic mean of equal-length vectors.
inline std::vector<double> mean_pool(const std::vector<std::vector<double>>& vectors) {
  if (vectors.empty()) throw std::runtime_error("mean_pool: empty input");
  const std::size_t dim = vectors.front().size();
  std::vector<double> out(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw std::runtime_error("mean_pool: ragged vector lengths");
    for (std::size_t i = 0; i < dim; ++i) out[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(vectors.size());
  for (double& x : out) x *= inv;
  return out;
}

// Deterministic unit-norm hashing embedder for hermetic runs. Tokens are
// hashed with their position into dim signed buckets, then normalized.
// Carries no semantics; identical (text, dim, seed) always gives identical output.
inline std::vector<double> hash_embed(const std::string& text, std::size_t dim,
                                      std::uint64_t seed) {
  if (dim < 2) throw std::runtime_error("hash_embed: dim must be >= 2");
  std::vector<double> vec(dim, 0.0);
  const auto words = split_words(text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint64_t h =
        hash_combine(hash_combine(seed, fnv1a64(words[i].token)), static_cast<std::uint64_t>(i));
    vec[h % dim] += (h >> 63) ? 1.0 : -1.0;
  }
  double norm_sq = 0.0;
  for (const double x : vec) norm_sq += x * x;
  if (norm_sq < 1e-12) {
    // No tokens, or the signed counts cancelled: fall back to a unit vector
    // derived from the seed so the norm contract still holds.
    std::fill(vec.begin(), vec.end(), 0.0);
    vec[mix64(seed) % dim] = 1.0;
    return vec;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : vec) x *= inv;
  return vec;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::runtime_error("cosine: vector lengths differ");
  if (a.empty()) throw std::runtime_error("cosine: empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::runtime_error("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine(std::span<const double>(a), std::span<const double>(b));
}

}  // namespace labelaudit
