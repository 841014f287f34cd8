// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/classifier.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "groundec/error.hpp"
#include "json.hpp"

namespace groundec {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string singular(std::string word) {
  if (word.size() > 3 && word.back() == 's' && word[word.size() - 2] != 's') word.pop_back();
  return word;
}

std::vector<std::string> normalized_words(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(singular(lower(word)));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '\'' || c >= 0x80) {
      word.push_back(static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

class LineError {
 public:
  explicit LineError(std::size_t line) : line_(line) {}
  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw InputError("annotations line " + std::to_string(line_) + ", field '" + field + "': " + what);
  }

 private:
  std::size_t line_;
};

template <typename T>
T field(const json& rec, const char* name, const LineError& at) {
  if (!rec.contains(name)) at.fail(name, "missing");
  try {
    return rec.at(name).get<T>();
  } catch (const json::exception&) {
    at.fail(name, "wrong type");
  }
}

}  // namespace

std::string to_string(PhraseType type) {
  switch (type) {
    case PhraseType::object: return "object";
    case PhraseType::relation: return "relation";
    case PhraseType::action: return "action";
  }
  return "unknown";
}

PhraseType parse_phrase_type(const std::string& text) {
  const std::string t = lower(text);
  if (t == "object") return PhraseType::object;
  if (t == "relation") return PhraseType::relation;
  if (t == "action") return PhraseType::action;
  throw InputError("unknown phrase_type '" + text + "' (expected object, relation or action)");
}

std::string to_string(Category category) {
  switch (category) {
    case Category::language: return "Language";
    case Category::vision: return "Vision";
    case Category::style: return "Style";
    case Category::it: return "IT";
    case Category::skipped_nonvisual: return "Skipped";
    case Category::error: return "Error";
  }
  return "unknown";
}

std::vector<AnnotationSet> parse_annotations(std::istream& in) {
  std::vector<AnnotationSet> sets;
  std::map<std::string, std::size_t> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const LineError at(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError("annotations line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!rec.is_object()) at.fail("record", "expected a JSON object");
    const auto type = field<std::string>(rec, "type", at);
    const auto id = field<std::string>(rec, "response_id", at);

    if (type == "header") {
      if (by_id.count(id)) at.fail("response_id", "duplicate header for '" + id + "'");
      AnnotationSet set;
      set.response_id = id;
      set.response_text = field<std::string>(rec, "response_text", at);
      set.response_tokens = field<TokenSeq>(rec, "response_tokens", at);
      set.visual_elements = field<std::vector<std::string>>(rec, "visual_elements", at);
      for (const auto& v : set.visual_elements) {
        if (v.empty()) at.fail("visual_elements", "empty string");
      }
      if (rec.contains("word_offsets")) {
        auto offsets = field<std::vector<std::size_t>>(rec, "word_offsets", at);
        for (auto o : offsets) {
          if (o >= set.response_tokens.size()) at.fail("word_offsets", "offset beyond response length");
        }
        set.word_offsets = std::move(offsets);
      }
      by_id[id] = sets.size();
      sets.push_back(std::move(set));
    } else if (type == "phrase") {
      const auto it = by_id.find(id);
      if (it == by_id.end()) at.fail("response_id", "phrase before the header of '" + id + "'");
      auto& set = sets[it->second];
      if (rec.contains("response_text") && field<std::string>(rec, "response_text", at) != set.response_text) {
        at.fail("response_text", "does not match the header");
      }
      HallucinationPhrase phrase;
      phrase.text = field<std::string>(rec, "phrase_text", at);
      if (phrase.text.empty()) at.fail("phrase_text", "empty");
      const auto span = field<std::vector<std::size_t>>(rec, "token_span", at);
      if (span.size() != 2) at.fail("token_span", "expected [start, end]");
      phrase.span = {span[0], span[1]};
      if (phrase.span.start >= phrase.span.end) at.fail("token_span", "start must be below end");
      if (phrase.span.end > set.response_tokens.size()) {
        at.fail("token_span", "span beyond response length " + std::to_string(set.response_tokens.size()));
      }
      try {
        phrase.type = parse_phrase_type(field<std::string>(rec, "phrase_type", at));
      } catch (const InputError& e) {
        if (std::string(e.what()).starts_with("annotations line")) throw;
        at.fail("phrase_type", e.what());
      }
      set.phrases.push_back(std::move(phrase));
    } else {
      at.fail("type", "expected 'header' or 'phrase', got '" + type + "'");
    }
  }
  return sets;
}

std::vector<AnnotationSet> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotations " + path.string());
  return parse_annotations(in);
}

FileRetrievalProvider::FileRetrievalProvider(std::map<std::string, std::vector<RetrievalHit>> hits)
    : hits_(std::move(hits)) {
  for (auto& [id, list] : hits_) {
    std::stable_sort(list.begin(), list.end(),
                     [](const RetrievalHit& a, const RetrievalHit& b) { return a.similarity > b.similarity; });
  }
}

FileRetrievalProvider FileRetrievalProvider::parse(std::string_view json_text) {
  std::map<std::string, std::vector<RetrievalHit>> hits;
  try {
    const json root = json::parse(json_text);
    for (const auto& [id, list] : root.items()) {
      auto& out = hits[id];
      for (const auto& h : list) {
        out.push_back({h.at("instance_id").get<std::string>(), h.at("response_text").get<std::string>(),
                       h.at("similarity").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("retrieval file: ") + e.what());
  }
  return FileRetrievalProvider(std::move(hits));
}

FileRetrievalProvider FileRetrievalProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open retrieval file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<RetrievalHit> FileRetrievalProvider::top_hits(const AnnotationSet& query, std::size_t k) const {
  const auto it = hits_.find(query.response_id);
  if (it == hits_.end()) return {};
  const auto n = std::min(k, it->second.size());
  return {it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n)};
}

bool phrase_in_retrieval(const std::string& phrase, const std::vector<RetrievalHit>& hits, std::size_t k) {
  if (k == 0) throw InputError("retrieval k must be at least 1");
  const std::string needle = lower(phrase);
  const auto n = std::min(k, hits.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (lower(hits[i].response_text).find(needle) != std::string::npos) return true;
  }
  return false;
}

bool phrase_in_visual_elements(const std::string& phrase, const std::vector<std::string>& visual_elements) {
  std::set<std::string> vocabulary;
  for (const auto& v : visual_elements) {
    for (auto& w : normalized_words(v)) vocabulary.insert(std::move(w));
  }
  const auto words = normalized_words(phrase);
  return std::any_of(words.begin(), words.end(), [&](const std::string& w) { return vocabulary.count(w) > 0; });
}

Category categorize(PhraseType type, std::size_t eta, bool in_retrieval) {
  if (eta == 0) return Category::language;
  if (in_retrieval) return Category::it;
  if (type == PhraseType::relation) return Category::style;
  return Category::vision;
}

void CategoryReport::merge(const CategoryReport& other) {
  phrases.insert(phrases.end(), other.phrases.begin(), other.phrases.end());
  for (const auto& [c, n] : other.counts) counts[c] += n;
}

std::size_t CategoryReport::count(Category c) const {
  const auto it = counts.find(c);
  return it == counts.end() ? 0 : it->second;
}

CategoryReport categorize_all(const AnnotationSet& annotations, const RankTrace& trace,
                              const RetrievalProvider& retrieval, std::size_t k) {
  if (k == 0) throw InputError("retrieval k must be at least 1");
  if (trace.size() < annotations.response_tokens.size()) {
    throw InputError("rank trace for '" + annotations.response_id + "' covers " + std::to_string(trace.size()) +
                     " of " + std::to_string(annotations.response_tokens.size()) + " response tokens");
  }
  CategoryReport report;
  std::optional<std::vector<RetrievalHit>> hits;
  std::optional<std::string> retrieval_error;

  for (const auto& phrase : annotations.phrases) {
    PhraseReport entry{phrase, std::nullopt, Category::error, {}};
    if (!phrase_in_visual_elements(phrase.text, annotations.visual_elements)) {
      entry.category = Category::skipped_nonvisual;
    } else {
      std::size_t first = phrase.span.start;
      if (annotations.word_offsets) {
        for (std::size_t o : *annotations.word_offsets) {
          if (phrase.span.contains(o)) {
            first = o;
            break;
          }
        }
      }
      const std::size_t eta = trace[first].eta;
      entry.eta = eta;
      if (eta == 0) {
        entry.category = categorize(phrase.type, eta, false);
      } else {
        if (!hits && !retrieval_error) {
          try {
            hits = retrieval.top_hits(annotations, k);
          } catch (const std::exception& e) {
            retrieval_error = e.what();
          }
        }
        if (retrieval_error) {
          entry.error = "retrieval failed: " + *retrieval_error;
        } else {
          entry.category = categorize(phrase.type, eta, phrase_in_retrieval(phrase.text, *hits, k));
        }
      }
    }
    ++report.counts[entry.category];
    report.phrases.emplace_back(annotations.response_id, std::move(entry));
  }
  return report;
}

std::string report_to_json(const CategoryReport& report, std::size_t k) {
  nlohmann::ordered_json root;
  root["k"] = k;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (Category c : {Category::language, Category::vision, Category::style, Category::it,
                     Category::skipped_nonvisual, Category::error}) {
    counts[to_string(c)] = report.count(c);
  }
  root["counts"] = counts;
  auto& list = root["phrases"] = nlohmann::ordered_json::array();
  for (const auto& [id, p] : report.phrases) {
    nlohmann::ordered_json e;
    e["response_id"] = id;
    e["phrase_text"] = p.phrase.text;
    e["phrase_type"] = to_string(p.phrase.type);
    e["token_span"] = {p.phrase.span.start, p.phrase.span.end};
    e["eta"] = p.eta ? nlohmann::ordered_json(*p.eta) : nlohmann::ordered_json(nullptr);
    e["category"] = to_string(p.category);
    if (!p.error.empty()) e["error"] = p.error;
    list.push_back(std::move(e));
  }
  return root.dump(2) + "\n";
}

}  // namespace groundec
