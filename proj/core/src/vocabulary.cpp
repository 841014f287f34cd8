// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/vocabulary.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "groundec/error.hpp"

namespace groundec {

Vocabulary::Vocabulary(std::vector<std::string> tokens, WordStartRule rule)
    : tokens_(std::move(tokens)), rule_(std::move(rule)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw InputError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, WordStartRule rule) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens), std::move(rule));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view text) const {
  const auto it = index_.find(std::string(text));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::starts_word(TokenId id) const {
  if (rule_.every_token()) return true;
  return token(id).starts_with(rule_.marker);
}

TokenSeq Vocabulary::encode(std::string_view text) const {
  TokenSeq out;
  std::istringstream words{std::string(text)};
  std::string word;
  while (words >> word) {
    auto id = find(rule_.marker + word);
    if (!id) id = find(word);
    if (!id) throw InputError("word '" + word + "' is not in the vocabulary");
    out.push_back(*id);
  }
  return out;
}

std::string Vocabulary::decode(const TokenSeq& ids) const {
  std::string out;
  for (TokenId id : ids) {
    const std::string& t = token(id);
    if (rule_.every_token()) {
      if (!out.empty()) out += ' ';
      out += t;
    } else if (t.starts_with(rule_.marker)) {
      if (!out.empty()) out += ' ';
      out += t.substr(rule_.marker.size());
    } else {
      out += t;
    }
  }
  return out;
}

TokenSeq parse_token_ids(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == ',' || text[i] == '\n' ||
                               text[i] == '\t' || text[i] == '\r')) {
      ++i;
    }
    if (i == text.size()) break;
    TokenId value = 0;
    const auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), value);
    if (ec != std::errc() || ptr == text.data() + i) {
      throw InputError("invalid token id near '" + std::string(text.substr(i, 16)) + "'");
    }
    out.push_back(value);
    i = static_cast<std::size_t>(ptr - text.data());
  }
  return out;
}

}  // namespace groundec
