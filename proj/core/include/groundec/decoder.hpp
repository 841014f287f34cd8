// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

/**
 * @file decoder.hpp
 * @brief Description-grounded decoding.
 *
 * The prompt is `description ++ joiner ++ instruction`. One teacher-forced pass
 * over the prompt yields q_j = p(. | x_<j) for every prompt position j (1-based).
 * At each response step the next-token distribution is truncated to a candidate
 * set, every candidate w is scored by
 *
 *     KL_w = min_j KL(one-hot(w) || q_j) = -ln max(max_j q_j[w], floor)
 *
 * and the candidate logits are replaced by -KL_w / T before the softmax the
 * sampler draws from. The per-token maximum over positions is precomputed once
 * (GroundingIndex), so a step costs O(V) for truncation plus O(K) for grounding.
 */

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "groundec/backend.hpp"
#include "groundec/distribution.hpp"

namespace groundec {

enum class GroundingPositions { description_only, full_prompt };

struct SamplerConfig {
  enum class Kind { greedy, multinomial };

  Kind kind = Kind::greedy;
  double top_p = 0.5;
  double temperature = 0.7;
};

inline constexpr std::uint64_t kDefaultSeed = 20240917;

struct DecodeConfig {
  Truncation truncation;
  GroundingPositions grounding_positions = GroundingPositions::description_only;
  bool grounding_enabled = true;
  bool image_enabled = true;
  double rescore_temperature = 1.0;
  SamplerConfig sampler;
  std::size_t max_tokens = 256;
  /// Overrides the backend's stop tokens when set.
  std::optional<std::vector<TokenId>> stop_tokens;
  double kl_floor = kDefaultKlFloor;
  std::uint64_t seed = kDefaultSeed;
  /// Keep per-step candidate/grounding dumps in DecodedResponse.
  bool verbose = false;

  /// Throws InputError on out-of-range values.
  void validate() const;
};

/// Parses `key = value` lines (# comments). Keys are the DecodeConfig field
/// names; `truncation` takes elbow | alpha | alpha_then_elbow, `sampler` takes
/// greedy | multinomial, `alpha`, `elbow_window`, `top_p` and `temperature`
/// refine them. Unknown keys are errors.
DecodeConfig parse_decode_config(std::string_view text, DecodeConfig base = {});
DecodeConfig load_decode_config(const std::filesystem::path& path, DecodeConfig base = {});
std::string format_decode_config(const DecodeConfig& cfg);

std::string to_string(GroundingPositions positions);
GroundingPositions parse_grounding_positions(const std::string& text);
std::string to_string(SamplerConfig::Kind kind);
SamplerConfig::Kind parse_sampler_kind(const std::string& text);

struct PromptContext {
  TokenSeq tokens;  ///< description ++ joiner ++ instruction
  std::size_t description_length = 0;
  std::size_t instruction_length = 0;
  OptionalImage image;
  /// prompt_distributions[j - 1] = p(. | tokens[0..j-1)); filled on request only.
  std::vector<Distribution> prompt_distributions;

  std::size_t n() const { return tokens.size(); }
};

/// Throws InputError("nothing to ground on") for an empty description and for
/// an empty instruction.
PromptContext build_grounded_prompt(const TokenSeq& description, const TokenSeq& instruction,
                                    const TokenSeq& joiner = {});

/// Per-token maximum probability over a range of prompt positions.
class GroundingIndex {
 public:
  explicit GroundingIndex(std::size_t vocab_size);

  /// Folds in the distribution at 1-based prompt `position`. Ties keep the
  /// earliest position.
  void accumulate(std::size_t position, const Distribution& dist);

  std::size_t vocab_size() const { return max_prob_.size(); }
  std::size_t positions() const { return positions_; }
  double max_prob(TokenId token) const { return max_prob_[token]; }
  std::uint32_t argmax_position(TokenId token) const { return argmax_position_[token]; }

 private:
  std::vector<double> max_prob_;
  std::vector<std::uint32_t> argmax_position_;
  std::size_t positions_ = 0;
};

/// Inclusive 1-based range [1, last] selected by `positions`.
std::size_t last_grounding_position(const PromptContext& ctx, GroundingPositions positions);

/// Builds the index from ctx.prompt_distributions. Throws InputError when the
/// selection is empty or the distributions are missing.
GroundingIndex precompute_grounding_index(const PromptContext& ctx, GroundingPositions positions);

/// Runs the backend over the prompt and folds the selected positions in
/// without retaining the distributions.
GroundingIndex build_grounding_index(const Backend& backend, const PromptContext& ctx,
                                     GroundingPositions positions, const OptionalImage& image);

struct GroundingScore {
  TokenId token = 0;
  double kl = 0.0;
  std::uint32_t position = 0;  ///< prompt position attaining the minimum
};

/// One score per candidate, in candidate order.
struct GroundingTable {
  std::vector<GroundingScore> scores;
};

GroundingTable grounding_scores(const CandidateSet& candidates, const GroundingIndex& index,
                                double floor = kDefaultKlFloor);

/// softmax(-KL / T) over the candidates, in candidate order. Non-candidates
/// implicitly receive 0.
std::vector<TokenProb> rescore(const CandidateSet& candidates, const GroundingTable& table,
                               double temperature = 1.0);

/// Greedy (argmax, lowest id on ties) or seeded temperature + nucleus sampling.
class Sampler {
 public:
  explicit Sampler(SamplerConfig config = {}, std::uint64_t seed = kDefaultSeed);

  TokenId sample(std::span<const TokenProb> probs);

 private:
  double uniform();

  SamplerConfig config_;
  std::mt19937_64 rng_;
};

struct StepDiagnostics {
  CandidateSet candidates;
  GroundingTable grounding;  ///< empty when grounding is disabled
  TokenId sampled = 0;
  std::vector<TokenProb> final_probs;  ///< distribution the sampler drew from
};

struct StepOutcome {
  std::optional<TokenId> token;  ///< nullopt: max_tokens reached
  std::optional<StepDiagnostics> diagnostics;
};

/// One autoregressive step. `index` may be null only when grounding is disabled.
/// Backend failures are rethrown as BackendError carrying the step number.
StepOutcome decode_step(const Backend& backend, const TokenSeq& generated, const PromptContext& ctx,
                        const GroundingIndex* index, const DecodeConfig& cfg, Sampler& sampler);

struct DecodedResponse {
  TokenSeq tokens;
  bool stopped = false;  ///< ended on a stop token (not included in tokens)
  std::vector<StepDiagnostics> per_step;
};

DecodedResponse decode(const Backend& backend, const TokenSeq& description, const TokenSeq& instruction,
                       const OptionalImage& image, const DecodeConfig& cfg, const TokenSeq& joiner = {});

/// Plain decode of an arbitrary prompt: no description, no grounding.
DecodedResponse decode_plain(const Backend& backend, const TokenSeq& prompt, const OptionalImage& image,
                             const DecodeConfig& cfg);

using DescriptionProvider = std::function<TokenSeq(const OptionalImage&)>;

struct DescribeOptions {
  TokenSeq template_tokens;
  std::size_t max_tokens = 256;
  std::optional<std::vector<TokenId>> stop_tokens;
  /// When set, its output is used verbatim instead of asking the backend.
  DescriptionProvider provider;
};

/// Greedy, ungrounded decode of the describe template with the image attached.
TokenSeq generate_description(const Backend& backend, const OptionalImage& image,
                              const DescribeOptions& options);

/// Reads a UTF-8 template file; surrounding whitespace is trimmed.
std::string load_description_template(const std::filesystem::path& path);

}  // namespace groundec
