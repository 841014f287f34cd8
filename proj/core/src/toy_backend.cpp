// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/toy_backend.hpp"

#include <fstream>
#include <sstream>

#include "groundec/error.hpp"
#include "json.hpp"

namespace groundec {

namespace {

using nlohmann::json;

TokenId lookup(const Vocabulary& vocab, const std::string& word, const std::string& where) {
  const auto id = vocab.find(word);
  if (!id) throw InputError("toy model: unknown token '" + word + "' in " + where);
  return *id;
}

TokenSeq lookup_all(const Vocabulary& vocab, const json& words, const std::string& where) {
  if (!words.is_array()) throw InputError("toy model: " + where + " must be an array of tokens");
  TokenSeq out;
  for (const auto& w : words) out.push_back(lookup(vocab, w.get<std::string>(), where));
  return out;
}

// Listed probabilities plus leftover mass spread uniformly over unlisted tokens.
Distribution parse_probs(const Vocabulary& vocab, const json& node, const std::string& where) {
  const std::size_t v = vocab.size();
  if (node.is_object() && node.value("uniform", false)) return Distribution::uniform(v);
  const json& probs = node.contains("probs") ? node.at("probs") : node;
  if (!probs.is_object()) throw InputError("toy model: " + where + " needs a 'probs' object");

  std::vector<double> dense(v, 0.0);
  std::vector<bool> listed(v, false);
  double listed_mass = 0.0;
  for (const auto& [word, p] : probs.items()) {
    const TokenId id = lookup(vocab, word, where);
    const double value = p.get<double>();
    if (value < 0.0) throw InputError("toy model: negative probability in " + where);
    dense[id] = value;
    listed[id] = true;
    listed_mass += value;
  }
  if (listed_mass > 1.0 + kMassTolerance) {
    throw InputError("toy model: probabilities in " + where + " sum above 1");
  }
  const double residual = std::max(0.0, 1.0 - listed_mass);
  std::size_t unlisted = 0;
  for (bool l : listed) unlisted += l ? 0 : 1;
  if (unlisted > 0 && residual > 0.0) {
    for (std::size_t i = 0; i < v; ++i) {
      if (!listed[i]) dense[i] = residual / static_cast<double>(unlisted);
    }
  }
  return Distribution::from_probs(std::move(dense));
}

}  // namespace

ToyModelSpec ToyModelSpec::parse(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("toy model: ") + e.what());
  }
  try {
    const auto words = root.at("vocab").get<std::vector<std::string>>();
    if (words.size() < 2) throw InputError("toy model: vocab needs at least 2 tokens");
    const Vocabulary vocab(words);

    ToyModelSpec spec{.vocab = words,
                      .stop_tokens = {},
                      .default_distribution = root.contains("default")
                                                  ? parse_probs(vocab, root.at("default"), "default")
                                                  : Distribution::uniform(words.size()),
                      .rows = {},
                      .describe_cue = std::nullopt,
                      .image_table = {}};
    if (root.contains("stop")) spec.stop_tokens = lookup_all(vocab, root.at("stop"), "stop");

    const json rows = root.value("rows", json::array());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = "rows[" + std::to_string(i) + "]";
      const auto& row = rows[i];
      TokenSeq context = lookup_all(vocab, row.at("context"), where + ".context");
      std::optional<std::string> image;
      if (row.contains("image")) image = row.at("image").get<std::string>();
      spec.rows.push_back({std::move(context), std::move(image), parse_probs(vocab, row, where)});
    }
    if (root.contains("describe_cue")) {
      spec.describe_cue = lookup(vocab, root.at("describe_cue").get<std::string>(), "describe_cue");
    }
    if (root.contains("descriptions")) {
      for (const auto& [tag, seq] : root.at("descriptions").items()) {
        spec.image_table[tag] = lookup_all(vocab, seq, "descriptions." + tag);
      }
    }
    return spec;
  } catch (const json::exception& e) {
    throw InputError(std::string("toy model: ") + e.what());
  }
}

ToyModelSpec ToyModelSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open toy model " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

ToyBackend::ToyBackend(ToyModelSpec spec) : spec_(std::move(spec)), vocab_(spec_.vocab) {
  const std::size_t v = spec_.vocab.size();
  caps_.vocab_size = v;
  caps_.supports_images = true;
  caps_.supports_teacher_forcing = true;
  caps_.stop_tokens = spec_.stop_tokens;
  caps_.word_start = WordStartRule{};

  if (spec_.default_distribution.vocab_size() != v) {
    throw InputError("toy model: default distribution size does not match vocab");
  }
  for (const auto& row : spec_.rows) {
    if (row.context.size() > kToyMaxContext) {
      throw InputError("toy model: row context longer than " + std::to_string(kToyMaxContext));
    }
    if (row.distribution.vocab_size() != v) {
      throw InputError("toy model: row distribution size does not match vocab");
    }
    if (!table_.emplace(Key{row.image.value_or(""), row.context}, row.distribution).second) {
      throw InputError("toy model: duplicate row context");
    }
  }

  // Canned descriptions: [cue] d1 .. dk [stop] as image-conditioned rows.
  if (!spec_.image_table.empty()) {
    if (!spec_.describe_cue) throw InputError("toy model: descriptions require describe_cue");
    if (spec_.stop_tokens.empty()) throw InputError("toy model: descriptions require a stop token");
    for (const auto& [tag, description] : spec_.image_table) {
      TokenSeq seq{*spec_.describe_cue};
      seq.insert(seq.end(), description.begin(), description.end());
      seq.push_back(spec_.stop_tokens.front());
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        const std::size_t len = std::min(kToyMaxContext, i + 1);
        TokenSeq key(seq.begin() + static_cast<std::ptrdiff_t>(i + 1 - len),
                     seq.begin() + static_cast<std::ptrdiff_t>(i + 1));
        auto dist = Distribution::one_hot(seq[i + 1], v);
        const auto [it, inserted] = table_.emplace(Key{tag, key}, dist);
        if (!inserted && !(it->second == dist)) {
          throw InputError("toy model: description for image '" + tag + "' conflicts with a row");
        }
      }
    }
  }
}

Distribution ToyBackend::next_distribution(std::span<const TokenId> context,
                                           const OptionalImage& image) const {
  for (TokenId t : context) {
    if (t >= caps_.vocab_size) throw BackendError("toy model: token id outside vocabulary");
  }
  const std::size_t longest = std::min(kToyMaxContext, context.size());
  for (std::size_t len = longest + 1; len-- > 0;) {
    TokenSeq suffix(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
    if (image) {
      if (auto it = table_.find(Key{image->tag, suffix}); it != table_.end()) return it->second;
    }
    if (auto it = table_.find(Key{"", suffix}); it != table_.end()) return it->second;
  }
  return spec_.default_distribution;
}

}  // namespace groundec
