// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "groundec/backend.hpp"

namespace groundec {

/// Longest context suffix a toy table row may condition on.
inline constexpr std::size_t kToyMaxContext = 3;

struct ToyRow {
  TokenSeq context;                  ///< suffix of at most kToyMaxContext tokens
  std::optional<std::string> image;  ///< row applies only with this image tag
  Distribution distribution;
};

/// Table-driven language model used as a deterministic verification fixture.
///
/// JSON layout (see docs/toy-model.md):
///   vocab, stop, default, rows[{context, image?, probs}], describe_cue?, descriptions?
/// `probs` maps token strings to probabilities; leftover mass is spread uniformly
/// over the unlisted tokens.
struct ToyModelSpec {
  std::vector<std::string> vocab;
  std::vector<TokenId> stop_tokens;
  Distribution default_distribution;
  std::vector<ToyRow> rows;
  std::optional<TokenId> describe_cue;
  /// image tag -> canned description, emitted after describe_cue.
  std::map<std::string, TokenSeq> image_table;

  static ToyModelSpec parse(std::string_view json_text);
  static ToyModelSpec load(const std::filesystem::path& path);
};

class ToyBackend final : public Backend {
 public:
  explicit ToyBackend(ToyModelSpec spec);

  const BackendCapabilities& capabilities() const override { return caps_; }
  Distribution next_distribution(std::span<const TokenId> context,
                                 const OptionalImage& image) const override;
  const Vocabulary* vocabulary() const override { return &vocab_; }

  const ToyModelSpec& spec() const { return spec_; }

 private:
  using Key = std::pair<std::string, TokenSeq>;  // (image tag or "", suffix)

  ToyModelSpec spec_;
  Vocabulary vocab_;
  BackendCapabilities caps_;
  std::map<Key, Distribution> table_;
};

}  // namespace groundec
