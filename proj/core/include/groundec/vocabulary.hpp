// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "groundec/types.hpp"

namespace groundec {

/// Which tokens begin a new word.
struct WordStartRule {
  /// Empty marker: every token is a whole word.
  std::string marker;

  bool every_token() const { return marker.empty(); }
};

/// Token id <-> string table. Tokenization proper lives with the exporter; this
/// only maps whitespace-separated words for fixtures and CLI convenience.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens, WordStartRule rule = {});

  /// One token per line.
  static Vocabulary load(const std::filesystem::path& path, WordStartRule rule = {});

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view text) const;
  const WordStartRule& word_start() const { return rule_; }

  bool starts_word(TokenId id) const;

  /// Throws InputError naming the first unknown word.
  TokenSeq encode(std::string_view text) const;
  std::string decode(const TokenSeq& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  WordStartRule rule_;
};

/// Parses "12 7 3" (whitespace or comma separated) into ids.
TokenSeq parse_token_ids(std::string_view text);

}  // namespace groundec
