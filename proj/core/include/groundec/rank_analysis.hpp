// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

/**
 * @file rank_analysis.hpp
 * @brief Base Rank of aligned-model choices inside a base model's distribution.
 *
 * For response position t the context is instruction ++ response[0..t). The
 * aligned model (given the image) picks w* = argmax P_align; eta is the number
 * of tokens the text-only base model ranks strictly above w*. Ranks are 0-based:
 * eta = 0 means both models agree on the top token.
 */

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundec/backend.hpp"
#include "groundec/distribution.hpp"

namespace groundec {

enum class ShiftClass { unshifted, marginal, shifted };

struct RankThresholds {
  /// Largest eta still counted as marginal. Use 3 with 1-based ranks.
  std::size_t marginal_upper = 2;
};

struct BaseRank {
  TokenId aligned_argmax = 0;
  std::size_t eta = 0;
};

struct BaseRankRecord {
  std::size_t position = 0;  ///< 0-based response token index
  TokenId aligned_argmax = 0;
  std::size_t eta = 0;
  ShiftClass shift = ShiftClass::unshifted;

  friend bool operator==(const BaseRankRecord&, const BaseRankRecord&) = default;
};

using RankTrace = std::vector<BaseRankRecord>;

/// Throws InputError on vocab_size mismatch.
BaseRank base_rank(const Distribution& aligned, const Distribution& base);

ShiftClass classify_shift(std::size_t eta, RankThresholds thresholds = {});
std::string to_string(ShiftClass shift);
ShiftClass parse_shift_class(const std::string& text);

/// One record per response token. The image goes to the aligned backend only.
RankTrace base_rank_trace(const Backend& aligned, const Backend& base, const TokenSeq& instruction,
                          const TokenSeq& response, const OptionalImage& image,
                          RankThresholds thresholds = {});

struct RankCurve {
  std::vector<double> mean_eta;     ///< index p -> response position p + 1
  std::vector<std::size_t> count;   ///< traces long enough to reach the position
};

/// Position-wise mean over ragged traces. Throws InputError on an empty list.
RankCurve rank_curve(std::span<const std::vector<std::size_t>> eta_traces);
RankCurve rank_curve(std::span<const RankTrace> traces);

/// "position\tmean_eta\tcount" with 1-based positions.
void write_rank_curve(std::ostream& out, const RankCurve& curve);

/// "response_id\ttoken_index\taligned_argmax\teta\tshift".
void write_rank_trace(std::ostream& out, const std::string& response_id, const RankTrace& trace,
                      bool header = true);
std::map<std::string, RankTrace> read_rank_traces(std::istream& in);

/// Half-open token range [start, end) into a response.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  bool contains(std::size_t i) const { return i >= start && i < end; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// First-token-of-word flags for a response, from explicit offsets when given,
/// else from the backend's word-start rule. Throws InputError when neither is
/// available or an offset is out of range.
std::vector<bool> word_start_flags(const Backend& backend, const TokenSeq& response,
                                   const std::optional<std::vector<std::size_t>>& word_offsets);

struct PopulationStats {
  std::optional<LogitStats> clean;
  std::optional<LogitStats> hallucinated;
  std::size_t clean_tokens = 0;
  std::size_t hallucinated_tokens = 0;
};

/// Accumulated candidate sets per population, for pooling across responses.
struct PopulationSets {
  std::vector<CandidateSet> clean;
  std::vector<CandidateSet> hallucinated;

  void merge(PopulationSets other);
  PopulationStats stats() const;
};

/// Truncates the step distribution at the first token of every response word
/// and files it under the hallucinated population when a span covers it.
PopulationSets collect_population_sets(const Backend& backend, const TokenSeq& prompt, const TokenSeq& response,
                                       const OptionalImage& image, std::span<const TokenSpan> spans,
                                       const Truncation& truncation,
                                       const std::optional<std::vector<std::size_t>>& word_offsets = std::nullopt);

PopulationStats hallucinated_token_stats(const Backend& backend, const TokenSeq& prompt, const TokenSeq& response,
                                         const OptionalImage& image, std::span<const TokenSpan> spans,
                                         const Truncation& truncation,
                                         const std::optional<std::vector<std::size_t>>& word_offsets = std::nullopt);

}  // namespace groundec
