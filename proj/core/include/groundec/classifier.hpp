// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

/**
 * @file classifier.hpp
 * @brief Causal categories for judge-annotated hallucinated phrases.
 *
 * A phrase that names a visual element is categorized from the Base Rank of its
 * first token, checked in this order:
 *   eta == 0                              -> language
 *   eta > 0, found in retrieved IT data   -> it
 *   eta > 0, relation phrase              -> style
 *   eta > 0, otherwise                    -> vision
 * Phrases that do not name a visual element are reported as skipped.
 */

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groundec/rank_analysis.hpp"

namespace groundec {

enum class PhraseType { object, relation, action };

enum class Category { language, vision, style, it, skipped_nonvisual, error };

std::string to_string(PhraseType type);
PhraseType parse_phrase_type(const std::string& text);
std::string to_string(Category category);

struct HallucinationPhrase {
  std::string text;
  TokenSpan span;
  PhraseType type = PhraseType::object;
};

struct AnnotationSet {
  std::string response_id;
  std::string response_text;
  TokenSeq response_tokens;
  std::vector<std::string> visual_elements;
  std::vector<HallucinationPhrase> phrases;
  std::optional<std::vector<std::size_t>> word_offsets;
};

/// JSON-lines: a "header" record per response followed by its "phrase"
/// records (docs/annotation-format.md). Errors name the line and field.
std::vector<AnnotationSet> parse_annotations(std::istream& in);
std::vector<AnnotationSet> load_annotations(const std::filesystem::path& path);

struct RetrievalHit {
  std::string instance_id;
  std::string response_text;
  double similarity = 0.0;
};

/// Ranked instruction-tuning instances similar to a response's image.
class RetrievalProvider {
 public:
  virtual ~RetrievalProvider() = default;
  /// At most k hits, most similar first.
  virtual std::vector<RetrievalHit> top_hits(const AnnotationSet& query, std::size_t k) const = 0;
  virtual bool concurrent_queries() const { return true; }
};

/// JSON object: response_id -> [{instance_id, response_text, similarity}, ...].
class FileRetrievalProvider final : public RetrievalProvider {
 public:
  explicit FileRetrievalProvider(std::map<std::string, std::vector<RetrievalHit>> hits);
  static FileRetrievalProvider load(const std::filesystem::path& path);
  static FileRetrievalProvider parse(std::string_view json_text);

  std::vector<RetrievalHit> top_hits(const AnnotationSet& query, std::size_t k) const override;

 private:
  std::map<std::string, std::vector<RetrievalHit>> hits_;
};

inline constexpr std::size_t kDefaultRetrievalK = 25;

/// Case-insensitive substring search within the first k hits.
bool phrase_in_retrieval(const std::string& phrase, const std::vector<RetrievalHit>& hits, std::size_t k);

/// Case-insensitive word match (trailing plural 's' stripped) against the
/// words of the visual elements.
bool phrase_in_visual_elements(const std::string& phrase, const std::vector<std::string>& visual_elements);

/// Branch table above; the visual-element gate is applied by the caller.
Category categorize(PhraseType type, std::size_t eta, bool in_retrieval);

struct PhraseReport {
  HallucinationPhrase phrase;
  std::optional<std::size_t> eta;
  Category category = Category::error;
  std::string error;
};

struct CategoryReport {
  std::vector<std::pair<std::string, PhraseReport>> phrases;  ///< (response_id, report)
  std::map<Category, std::size_t> counts;

  void merge(const CategoryReport& other);
  std::size_t count(Category c) const;
};

/// The retrieval provider is queried at most once, and only if some phrase
/// needs it. Provider failures become per-phrase error entries.
CategoryReport categorize_all(const AnnotationSet& annotations, const RankTrace& trace,
                              const RetrievalProvider& retrieval, std::size_t k = kDefaultRetrievalK);

/// Pretty-printed JSON with per-phrase entries and aggregate counts.
std::string report_to_json(const CategoryReport& report, std::size_t k);

}  // namespace groundec
