#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/io.hpp"
#include "labelaudit/text.hpp"

namespace labelaudit {

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

// The classification prompt: task instruction, all seven label definitions,
// one exemplar per non-fallback label (A1..A6; the fallback class deliberately
// gets none so the model is not biased toward one instance of it), and the
// query text.
struct PromptSpec {
  std::string task_instruction;
  std::array<std::string, kNumLabels> label_definitions;
  std::array<std::string, kNumLabels - 1> exemplars;  // A1..A6
  std::string query_text;

  void validate() const {
    if (task_instruction.empty()) throw std::runtime_error("prompt: empty task instruction");
    for (int i = 0; i < kNumLabels; ++i)
      if (label_definitions[static_cast<std::size_t>(i)].empty())
        throw std::runtime_error(std::string("prompt: missing definition for ") +
                                 label_code(label_from_index(i)));
    for (int i = 0; i < kNumLabels - 1; ++i)
      if (exemplars[static_cast<std::size_t>(i)].empty())
        throw std::runtime_error(std::string("prompt: missing exemplar for ") +
                                 label_code(label_from_index(i)));
  }
};

// Fixture file: {"task_instruction": ..., "label_definitions": {"A1": ...},
// "exemplars": {"A1": ...}}. An exemplar keyed A7 is a construction error.
inline PromptSpec load_prompt_spec(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed prompt spec: " + e.what());
  }
  PromptSpec spec;
  spec.task_instruction = j.at("task_instruction").get<std::string>();
  for (const auto& [key, value] : j.at("label_definitions").items()) {
    const auto label = parse_label_code(key);
    if (!label) throw std::runtime_error(path + ": unknown definition key '" + key + "'");
    spec.label_definitions[static_cast<std::size_t>(label_index(*label))] = value.get<std::string>();
  }
  for (const auto& [key, value] : j.at("exemplars").items()) {
    const auto label = parse_label_code(key);
    if (!label) throw std::runtime_error(path + ": unknown exemplar key '" + key + "'");
    if (*label == kFallbackLabel)
      throw std::runtime_error(path + ": exemplar for the fallback label " +
                               std::string(label_code(kFallbackLabel)) + " is not allowed");
    spec.exemplars[static_cast<std::size_t>(label_index(*label))] = value.get<std::string>();
  }
  spec.validate();
  return spec;
}

// Deterministic concatenation; byte-identical output for identical specs.
inline std::string build_prompt(const PromptSpec& spec) {
  spec.validate();
  std::string out = spec.task_instruction;
  out += "\n\nLabel definitions:\n";
  for (int i = 0; i < kNumLabels; ++i) {
    const Label l = label_from_index(i);
    out += label_code(l);
    out += " (";
    out += label_name(l);
    out += "): ";
    out += spec.label_definitions[static_cast<std::size_t>(i)];
    out += '\n';
  }
  out += "\nExamples:\n";
  for (int i = 0; i < kNumLabels - 1; ++i) {
    out += "Text: ";
    out += spec.exemplars[static_cast<std::size_t>(i)];
    out += "\nLabel: ";
    out += label_code(label_from_index(i));
    out += '\n';
  }
  out += "\nText: ";
  out += spec.query_text;
  out += "\nAnswer with exactly one label code from A1 to A7.\nLabel:";
  return out;
}

// First case-insensitive, word-bounded occurrence of A1..A7 wins; none means
// unparseable. Never throws.
inline std::optional<Label> parse_label(const std::string& response) {
  const auto is_word_char = [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  };
  for (std::size_t i = 0; i + 1 < response.size(); ++i) {
    if (response[i] != 'A' && response[i] != 'a') continue;
    const char d = response[i + 1];
    if (d < '1' || d > '7') continue;
    if (i > 0 && is_word_char(response[i - 1])) continue;
    if (i + 2 < response.size() && is_word_char(response[i + 2])) continue;
    return static_cast<Label>(d - '1');
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Chat-completion client
// ---------------------------------------------------------------------------

struct LlmClientConfig {
  std::string base_url;   // scheme://host[:port]
  std::string model;
  double temperature = 0.0;
  std::size_t max_retries = 3;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds initial_backoff{200};
  std::string api_key;    // taken from the environment, never from config files

  void validate() const {
    if (base_url.empty()) throw std::runtime_error("llm: base_url must not be empty");
    if (max_retries > 10) throw std::runtime_error("llm: max_retries must be <= 10");
    if (temperature < 0.0) throw std::runtime_error("llm: temperature must be >= 0");
  }
};

inline void apply_llm_env(LlmClientConfig& cfg) {
  if (const char* url = std::getenv("LLM_BASE_URL")) cfg.base_url = url;
  if (const char* key = std::getenv("LLM_API_KEY")) cfg.api_key = key;
}

enum class FewShotStatus { ok, unparseable, transport_error };

inline const char* fewshot_status_name(FewShotStatus s) {
  switch (s) {
    case FewShotStatus::ok: return "ok";
    case FewShotStatus::unparseable: return "unparseable";
    default: return "transport_error";
  }
}

inline std::optional<FewShotStatus> parse_fewshot_status(std::string_view s) {
  if (s == "ok") return FewShotStatus::ok;
  if (s == "unparseable") return FewShotStatus::unparseable;
  if (s == "transport_error") return FewShotStatus::transport_error;
  return std::nullopt;
}

struct FewShotResult {
  std::string id;
  std::string raw_response;
  std::optional<Label> label;  // present iff status == ok
  FewShotStatus status = FewShotStatus::transport_error;
};

inline std::string fewshot_result_to_line(const FewShotResult& r) {
  nlohmann::json j;
  j["id"] = r.id;
  if (r.label) j["label"] = label_code(*r.label);
  j["raw_response"] = r.raw_response;
  j["status"] = fewshot_status_name(r.status);
  return j.dump();
}

inline FewShotResult fewshot_result_from_line(const std::string& line, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + ": unreadable resume record: " + e.what());
  }
  FewShotResult r;
  r.id = j.at("id").get<std::string>();
  r.raw_response = j.value("raw_response", std::string{});
  const auto status = parse_fewshot_status(j.at("status").get<std::string>());
  if (!status) throw std::runtime_error(where + ": unknown result status");
  r.status = *status;
  if (j.contains("label") && !j["label"].is_null()) {
    const auto label = parse_label_code(j["label"].get<std::string>());
    if (!label) throw std::runtime_error(where + ": unknown label in resume record");
    r.label = label;
  }
  if ((r.status == FewShotStatus::ok) != r.label.has_value())
    throw std::runtime_error(where + ": status/label mismatch in resume record");
  return r;
}

inline std::vector<FewShotResult> load_fewshot_results(const std::string& path) {
  std::vector<FewShotResult> results;
  if (!file_exists(path)) return results;
  const auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty() || is_metadata_line(lines[ln])) continue;
    results.push_back(
        fewshot_result_from_line(lines[ln], path + ":" + std::to_string(ln + 1)));
  }
  return results;
}

namespace detail {

struct ChatOutcome {
  bool ok = false;
  bool retryable = false;
  std::string content;  // assistant message or error description
};

inline ChatOutcome chat_completion_once(const LlmClientConfig& cfg, const std::string& prompt) {
  httplib::Client client(cfg.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  client.set_connection_timeout(secs.count() > 0 ? secs.count() : 1, 0);
  client.set_read_timeout(secs.count() > 0 ? secs.count() : 1, 0);
  client.set_write_timeout(secs.count() > 0 ? secs.count() : 1, 0);

  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  nlohmann::json body;
  body["model"] = cfg.model;
  body["temperature"] = cfg.temperature;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

  auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  ChatOutcome outcome;
  if (!res) {
    outcome.retryable = true;
    outcome.content = "transport failure: " + httplib::to_string(res.error());
    return outcome;
  }
  if (res->status == 401 || res->status == 403)
    throw std::runtime_error("llm: authentication failed (HTTP " + std::to_string(res->status) + ")");
  if (res->status != 200) {
    outcome.retryable = res->status == 408 || res->status == 429 || res->status >= 500;
    outcome.content = "HTTP " + std::to_string(res->status);
    return outcome;
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    outcome.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    outcome.ok = true;
  } catch (const nlohmann::json::exception& e) {
    outcome.content = std::string("malformed completion response: ") + e.what();
  }
  return outcome;
}

}  // namespace detail

// Queries the endpoint for every document with non-empty text, appending each
// finished result to the resume file so an interrupted run can continue
// without re-sending completed ids. Retries retryable failures with
// exponential backoff; what still fails is recorded as transport_error.
// Results come back in document order. Empty-text documents are skipped and
// counted via the optional out-parameter.
inline std::vector<FewShotResult> label_corpus(const Corpus& c, const PromptSpec& spec_template,
                                               const LlmClientConfig& cfg,
                                               const std::string& resume_path,
                                               std::size_t* skipped_empty_text = nullptr) {
  cfg.validate();
  std::unordered_map<std::string, FewShotResult> done;
  for (auto& r : load_fewshot_results(resume_path)) done.emplace(r.id, std::move(r));

  std::ofstream resume(resume_path, std::ios::app);
  if (!resume) throw std::runtime_error("label_corpus: cannot open resume file " + resume_path);

  std::size_t skipped = 0;
  std::vector<FewShotResult> results;
  for (const auto& doc : c.documents) {
    if (doc.text.empty()) {
      ++skipped;
      continue;
    }
    if (const auto it = done.find(doc.id); it != done.end()) {
      results.push_back(it->second);
      continue;
    }

    PromptSpec spec = spec_template;
    spec.query_text = doc.text;
    const std::string prompt = build_prompt(spec);

    detail::ChatOutcome outcome;
    for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      if (attempt > 0) {
        const auto delay = cfg.initial_backoff * (1ULL << (attempt - 1));
        std::this_thread::sleep_for(delay);
      }
      outcome = detail::chat_completion_once(cfg, prompt);
      if (outcome.ok || !outcome.retryable) break;
    }

    FewShotResult r;
    r.id = doc.id;
    r.raw_response = outcome.content;
    if (outcome.ok) {
      r.label = parse_label(outcome.content);
      r.status = r.label ? FewShotStatus::ok : FewShotStatus::unparseable;
    } else {
      r.status = FewShotStatus::transport_error;
    }
    resume << fewshot_result_to_line(r) << '\n';
    resume.flush();
    results.push_back(std::move(r));
  }
  if (skipped_empty_text) *skipped_empty_text = skipped;
  return results;
}

// Copies OK labels onto the corpus; unparseable and failed results leave the
// document without an LLM label (they are never coerced to the fallback class).
inline Corpus attach_llm_labels(const Corpus& c, const std::vector<FewShotResult>& results) {
  std::unordered_map<std::string, Label> by_id;
  for (const auto& r : results)
    if (r.status == FewShotStatus::ok) by_id.emplace(r.id, *r.label);
  Corpus out = c;
  for (auto& doc : out.documents) {
    const auto it = by_id.find(doc.id);
    if (it != by_id.end()) doc.llm_label = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Offline stub labeler
// ---------------------------------------------------------------------------

// Keyword lexicons for the hermetic labeler. Deliberately tiny: parking
// vocabulary maps to A5, pedestrian-crossing vocabulary to A4, everything
// else to the fallback A7.
struct StubLexicons {
  std::vector<std::string> parking = {"gepark", "parkplatz", "parklücke", "parkhaus",
                                      "garage",  "parked",    "parking"};
  std::vector<std::string> crossing = {"fußgänger", "zebrastreifen", "überquer",
                                       "pedestrian", "crosswalk",    "crossing"};
};

inline Label stub_labeler(const std::string& text, const StubLexicons& lexicons = {}) {
  const std::string lowered = lowercase(text);
  for (const auto& kw : lexicons.parking)
    if (lowered.find(kw) != std::string::npos) return Label::A5;
  for (const auto& kw : lexicons.crossing)
    if (lowered.find(kw) != std::string::npos) return Label::A4;
  return kFallbackLabel;
}

// Stub-mode equivalent of label_corpus: same result and resume contract, no
// network.
inline std::vector<FewShotResult> label_corpus_stub(const Corpus& c,
                                                    const std::string& resume_path,
                                                    std::size_t* skipped_empty_text = nullptr,
                                                    const StubLexicons& lexicons = {}) {
  std::unordered_map<std::string, FewShotResult> done;
  for (auto& r : load_fewshot_results(resume_path)) done.emplace(r.id, std::move(r));
  std::ofstream resume(resume_path, std::ios::app);
  if (!resume) throw std::runtime_error("label_corpus: cannot open resume file " + resume_path);

  std::size_t skipped = 0;
  std::vector<FewShotResult> results;
  for (const auto& doc : c.documents) {
    if (doc.text.empty()) {
      ++skipped;
      continue;
    }
    if (const auto it = done.find(doc.id); it != done.end()) {
      results.push_back(it->second);
      continue;
    }
    FewShotResult r;
    r.id = doc.id;
    r.label = stub_labeler(doc.text, lexicons);
    r.raw_response = std::string("Label: ") + label_code(*r.label);
    r.status = FewShotStatus::ok;
    resume << fewshot_result_to_line(r) << '\n';
    results.push_back(std::move(r));
  }
  if (skipped_empty_text) *skipped_empty_text = skipped;
  return results;
}

}  // namespace labelaudit
