// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/rank_analysis.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "groundec/error.hpp"

namespace groundec {

BaseRank base_rank(const Distribution& aligned, const Distribution& base) {
  if (aligned.vocab_size() != base.vocab_size()) throw InputError("base_rank: vocab_size mismatch");
  const TokenId chosen = aligned.argmax();
  const double p = base[chosen];
  const auto probs = base.probs();
  const auto above = std::count_if(probs.begin(), probs.end(), [p](double q) { return q > p; });
  return {chosen, static_cast<std::size_t>(above)};
}

ShiftClass classify_shift(std::size_t eta, RankThresholds thresholds) {
  if (thresholds.marginal_upper < 1) throw InputError("marginal_upper must be at least 1");
  if (eta == 0) return ShiftClass::unshifted;
  if (eta <= thresholds.marginal_upper) return ShiftClass::marginal;
  return ShiftClass::shifted;
}

std::string to_string(ShiftClass shift) {
  switch (shift) {
    case ShiftClass::unshifted: return "unshifted";
    case ShiftClass::marginal: return "marginal";
    case ShiftClass::shifted: return "shifted";
  }
  return "unknown";
}

ShiftClass parse_shift_class(const std::string& text) {
  if (text == "unshifted") return ShiftClass::unshifted;
  if (text == "marginal") return ShiftClass::marginal;
  if (text == "shifted") return ShiftClass::shifted;
  throw InputError("unknown shift class '" + text + "'");
}

RankTrace base_rank_trace(const Backend& aligned, const Backend& base, const TokenSeq& instruction,
                          const TokenSeq& response, const OptionalImage& image, RankThresholds thresholds) {
  require_shared_vocabulary(aligned, base);
  RankTrace trace(response.size());
  if (response.empty()) return trace;

  TokenSeq tokens = instruction;
  tokens.insert(tokens.end(), response.begin(), response.end());
  const std::size_t offset = instruction.size();

  // Only the aligned argmax is needed from the first pass.
  aligned.forward_each(tokens, image, [&](std::size_t j, const Distribution& d) {
    if (j < offset) return;
    trace[j - offset].position = j - offset;
    trace[j - offset].aligned_argmax = d.argmax();
  });
  base.forward_each(tokens, std::nullopt, [&](std::size_t j, const Distribution& d) {
    if (j < offset) return;
    auto& rec = trace[j - offset];
    const double p = d[rec.aligned_argmax];
    const auto probs = d.probs();
    rec.eta = static_cast<std::size_t>(std::count_if(probs.begin(), probs.end(), [p](double q) { return q > p; }));
    rec.shift = classify_shift(rec.eta, thresholds);
  });
  return trace;
}

RankCurve rank_curve(std::span<const std::vector<std::size_t>> eta_traces) {
  if (eta_traces.empty()) throw InputError("rank_curve: no traces");
  std::size_t longest = 0;
  for (const auto& t : eta_traces) longest = std::max(longest, t.size());
  RankCurve curve{std::vector<double>(longest, 0.0), std::vector<std::size_t>(longest, 0)};
  for (const auto& t : eta_traces) {
    for (std::size_t p = 0; p < t.size(); ++p) {
      curve.mean_eta[p] += static_cast<double>(t[p]);
      ++curve.count[p];
    }
  }
  for (std::size_t p = 0; p < longest; ++p) curve.mean_eta[p] /= static_cast<double>(curve.count[p]);
  return curve;
}

RankCurve rank_curve(std::span<const RankTrace> traces) {
  std::vector<std::vector<std::size_t>> etas;
  etas.reserve(traces.size());
  for (const auto& t : traces) {
    std::vector<std::size_t> e(t.size());
    std::transform(t.begin(), t.end(), e.begin(), [](const BaseRankRecord& r) { return r.eta; });
    etas.push_back(std::move(e));
  }
  return rank_curve(std::span<const std::vector<std::size_t>>(etas));
}

void write_rank_curve(std::ostream& out, const RankCurve& curve) {
  out << "position\tmean_eta\tcount\n";
  for (std::size_t p = 0; p < curve.mean_eta.size(); ++p) {
    out << (p + 1) << '\t' << curve.mean_eta[p] << '\t' << curve.count[p] << '\n';
  }
}

void write_rank_trace(std::ostream& out, const std::string& response_id, const RankTrace& trace, bool header) {
  if (header) out << "response_id\ttoken_index\taligned_argmax\teta\tshift\n";
  for (const auto& r : trace) {
    out << response_id << '\t' << r.position << '\t' << r.aligned_argmax << '\t' << r.eta << '\t'
        << to_string(r.shift) << '\n';
  }
}

std::map<std::string, RankTrace> read_rank_traces(std::istream& in) {
  std::map<std::string, RankTrace> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.starts_with("response_id\t")) continue;
    std::istringstream fields(line);
    std::string id, shift;
    BaseRankRecord rec;
    if (!std::getline(fields, id, '\t') || !(fields >> rec.position >> rec.aligned_argmax >> rec.eta >> shift)) {
      throw InputError("rank trace line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
    }
    try {
      rec.shift = parse_shift_class(shift);
    } catch (const InputError& e) {
      throw InputError("rank trace line " + std::to_string(line_no) + ": " + e.what());
    }
    auto& trace = out[id];
    if (rec.position != trace.size()) {
      throw InputError("rank trace line " + std::to_string(line_no) + ": token_index out of order");
    }
    trace.push_back(rec);
  }
  return out;
}

std::vector<bool> word_start_flags(const Backend& backend, const TokenSeq& response,
                                   const std::optional<std::vector<std::size_t>>& word_offsets) {
  std::vector<bool> flags(response.size(), false);
  if (word_offsets) {
    for (std::size_t i : *word_offsets) {
      if (i >= response.size()) throw InputError("word offset " + std::to_string(i) + " outside response");
      flags[i] = true;
    }
    return flags;
  }
  const auto& rule = backend.capabilities().word_start;
  if (!rule) throw InputError("backend has no word-start rule; supply word offsets");
  if (rule->every_token()) return std::vector<bool>(response.size(), true);
  const Vocabulary* vocab = backend.vocabulary();
  if (vocab == nullptr) throw InputError("word-start marker needs a vocabulary; supply word offsets");
  for (std::size_t i = 0; i < response.size(); ++i) flags[i] = vocab->starts_word(response[i]);
  return flags;
}

void PopulationSets::merge(PopulationSets other) {
  std::move(other.clean.begin(), other.clean.end(), std::back_inserter(clean));
  std::move(other.hallucinated.begin(), other.hallucinated.end(), std::back_inserter(hallucinated));
}

PopulationStats PopulationSets::stats() const {
  PopulationStats out;
  out.clean_tokens = clean.size();
  out.hallucinated_tokens = hallucinated.size();
  if (!clean.empty()) out.clean = candidate_stats(clean);
  if (!hallucinated.empty()) out.hallucinated = candidate_stats(hallucinated);
  return out;
}

PopulationSets collect_population_sets(const Backend& backend, const TokenSeq& prompt, const TokenSeq& response,
                                       const OptionalImage& image, std::span<const TokenSpan> spans,
                                       const Truncation& truncation,
                                       const std::optional<std::vector<std::size_t>>& word_offsets) {
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > response.size()) {
      throw InputError("out-of-range span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                       ") for response of " + std::to_string(response.size()) + " tokens");
    }
  }
  const auto starts = word_start_flags(backend, response, word_offsets);
  PopulationSets sets;
  if (response.empty()) return sets;

  TokenSeq tokens = prompt;
  tokens.insert(tokens.end(), response.begin(), response.end());
  const std::size_t offset = prompt.size();
  backend.forward_each(tokens, image, [&](std::size_t j, const Distribution& d) {
    if (j < offset || !starts[j - offset]) return;
    const std::size_t t = j - offset;
    const bool hallucinated = std::any_of(spans.begin(), spans.end(), [t](const TokenSpan& s) { return s.contains(t); });
    (hallucinated ? sets.hallucinated : sets.clean).push_back(truncate(d, truncation));
  });
  return sets;
}

PopulationStats hallucinated_token_stats(const Backend& backend, const TokenSeq& prompt, const TokenSeq& response,
                                         const OptionalImage& image, std::span<const TokenSpan> spans,
                                         const Truncation& truncation,
                                         const std::optional<std::vector<std::size_t>>& word_offsets) {
  return collect_population_sets(backend, prompt, response, image, spans, truncation, word_offsets).stats();
}

}  // namespace groundec
