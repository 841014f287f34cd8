// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "groundec/error.hpp"

namespace groundec {

namespace {

bool ranks_before(const TokenProb& a, const TokenProb& b) {
  if (a.prob != b.prob) return a.prob > b.prob;
  return a.id < b.id;
}

std::vector<TokenProb> positive_entries(const Distribution& dist) {
  std::vector<TokenProb> out;
  const auto probs = dist.probs();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) out.push_back({static_cast<TokenId>(i), probs[i]});
  }
  return out;
}

// Sorted top-`limit` entries; the tail beyond `limit` is left unspecified.
void sort_top(std::vector<TokenProb>& entries, std::size_t limit) {
  if (entries.size() > limit) {
    std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(limit),
                      entries.end(), ranks_before);
    entries.resize(limit);
  } else {
    std::sort(entries.begin(), entries.end(), ranks_before);
  }
}

CandidateSet elbow_over_sorted(std::vector<TokenProb> sorted, std::size_t window) {
  if (window == 0) throw InputError("elbow window must be positive");
  if (sorted.size() > window) sorted.resize(window);
  std::vector<double> probs(sorted.size());
  std::transform(sorted.begin(), sorted.end(), probs.begin(),
                 [](const TokenProb& e) { return e.prob; });
  sorted.resize(elbow_rank(probs));
  return CandidateSet::from_entries(std::move(sorted));
}

}  // namespace

Distribution Distribution::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw InputError("distribution: vocab_size must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!std::isfinite(p) || p < 0.0) {
      std::ostringstream msg;
      msg << "distribution: entry " << i << " is " << p << " (must be finite and >= 0)";
      throw InputError(msg.str());
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "distribution: total mass " << total << " is not within " << kMassTolerance << " of 1";
    throw InputError(msg.str());
  }
  return Distribution(std::move(probs));
}

Distribution Distribution::one_hot(TokenId token, std::size_t vocab_size) {
  if (token >= vocab_size) throw InputError("one_hot: token id out of range");
  std::vector<double> probs(vocab_size, 0.0);
  probs[token] = 1.0;
  return Distribution(std::move(probs));
}

Distribution Distribution::uniform(std::size_t vocab_size) {
  if (vocab_size == 0) throw InputError("distribution: vocab_size must be positive");
  return Distribution(std::vector<double>(vocab_size, 1.0 / static_cast<double>(vocab_size)));
}

TokenId Distribution::argmax() const {
  // max_element returns the first maximum, i.e. the lowest id.
  return static_cast<TokenId>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

LogitVector LogitVector::from_logits(std::vector<double> logits) {
  if (logits.empty()) throw InputError("logits: vocab_size must be positive");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double v = logits[i];
    const bool sentinel = std::isinf(v) && v < 0.0;
    if (!std::isfinite(v) && !sentinel) {
      throw InputError("logits: entry " + std::to_string(i) + " is neither finite nor -inf");
    }
  }
  return LogitVector(std::move(logits));
}

CandidateSet CandidateSet::from_entries(std::vector<TokenProb> entries) {
  if (entries.empty()) throw InputError("candidate set: k must be at least 1");
  for (const auto& e : entries) {
    if (!(e.prob > 0.0 && e.prob <= 1.0)) {
      throw InputError("candidate set: probability of token " + std::to_string(e.id) +
                       " outside (0, 1]");
    }
  }
  std::sort(entries.begin(), entries.end(), ranks_before);
  std::vector<TokenId> ids(entries.size());
  std::transform(entries.begin(), entries.end(), ids.begin(), [](const TokenProb& e) { return e.id; });
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw InputError("candidate set: duplicate token id");
  }
  return CandidateSet(std::move(entries));
}

bool CandidateSet::contains(TokenId token) const {
  return std::any_of(entries_.begin(), entries_.end(), [token](const TokenProb& e) { return e.id == token; });
}

Distribution softmax(const LogitVector& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InputError("softmax: temperature must be positive");
  }
  const auto values = logits.logits();
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isfinite(v)) shift = std::max(shift, v);
  }
  if (!std::isfinite(shift)) throw InputError("softmax: empty support");

  std::vector<double> probs(values.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    probs[i] = std::exp((values[i] - shift) / temperature);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return Distribution::from_probs(std::move(probs));
}

double kl_onehot(TokenId target, const Distribution& q, double floor) {
  if (target >= q.vocab_size()) throw InputError("kl_onehot: target outside vocabulary");
  return -std::log(std::max(q[target], floor));
}

double kl_full(const Distribution& p, const Distribution& q, double floor) {
  if (p.vocab_size() != q.vocab_size()) throw InputError("kl_full: vocab_size mismatch");
  const auto pp = p.probs();
  const auto qq = q.probs();
  double total = 0.0;
  for (std::size_t i = 0; i < pp.size(); ++i) {
    if (pp[i] == 0.0) continue;
    total += pp[i] * std::log(pp[i] / std::max(qq[i], floor));
  }
  return total;
}

CandidateSet truncate_alpha(const Distribution& dist, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("truncate_alpha: alpha must lie in [0, 1]");
  const auto probs = dist.probs();
  const double threshold = alpha * *std::max_element(probs.begin(), probs.end());
  std::vector<TokenProb> kept;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0 && probs[i] >= threshold) kept.push_back({static_cast<TokenId>(i), probs[i]});
  }
  return CandidateSet::from_entries(std::move(kept));
}

std::size_t elbow_rank(std::span<const double> sorted_desc) {
  const std::size_t n = sorted_desc.size();
  if (n <= 1) return n;

  std::vector<double> cumulative(n);
  std::partial_sum(sorted_desc.begin(), sorted_desc.end(), cumulative.begin());

  // Chord from (0, 0) to (n, C_n); distance of (r, C_r) is |n*C_r - C_n*r| / |chord|.
  const double x_end = static_cast<double>(n);
  const double y_end = cumulative.back();
  const double chord = std::hypot(x_end, y_end);
  std::vector<double> distance(n);
  double best = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    distance[r - 1] = std::abs(x_end * cumulative[r - 1] - y_end * static_cast<double>(r)) / chord;
    best = std::max(best, distance[r - 1]);
  }
  // Largest rank within tolerance of the maximum: plateaus are kept whole.
  for (std::size_t r = n; r >= 1; --r) {
    if (distance[r - 1] >= best - kElbowTieTolerance) return r;
  }
  return n;
}

CandidateSet truncate_elbow(const Distribution& dist, std::size_t window) {
  auto entries = positive_entries(dist);
  sort_top(entries, window);
  return elbow_over_sorted(std::move(entries), window);
}

CandidateSet truncate_elbow(const CandidateSet& survivors, std::size_t window) {
  const auto e = survivors.entries();
  return elbow_over_sorted(std::vector<TokenProb>(e.begin(), e.end()), window);
}

CandidateSet truncate(const Distribution& dist, const Truncation& truncation) {
  switch (truncation.kind) {
    case Truncation::Kind::elbow:
      return truncate_elbow(dist, truncation.elbow_window);
    case Truncation::Kind::alpha:
      return truncate_alpha(dist, truncation.alpha);
    case Truncation::Kind::alpha_then_elbow:
      return truncate_elbow(truncate_alpha(dist, truncation.alpha), truncation.elbow_window);
  }
  throw InputError("unknown truncation kind");
}

LogitStats candidate_stats(std::span<const CandidateSet> sets) {
  if (sets.empty()) throw InputError("candidate_stats: empty list");
  LogitStats out;
  for (const auto& set : sets) {
    const auto entries = set.entries();
    const double k = static_cast<double>(entries.size());
    double mean = 0.0;
    for (const auto& e : entries) mean += e.prob;
    mean /= k;
    double var = 0.0;
    for (const auto& e : entries) var += (e.prob - mean) * (e.prob - mean);
    var /= k;
    // Entries are sorted descending.
    out.k += k;
    out.variance += var;
    out.range += entries.front().prob - entries.back().prob;
    out.avg += mean;
  }
  const double count = static_cast<double>(sets.size());
  out.k /= count;
  out.variance /= count;
  out.range /= count;
  out.avg /= count;
  return out;
}

std::string to_string(Truncation::Kind kind) {
  switch (kind) {
    case Truncation::Kind::elbow: return "elbow";
    case Truncation::Kind::alpha: return "alpha";
    case Truncation::Kind::alpha_then_elbow: return "alpha_then_elbow";
  }
  return "unknown";
}

Truncation::Kind parse_truncation_kind(const std::string& text) {
  if (text == "elbow") return Truncation::Kind::elbow;
  if (text == "alpha") return Truncation::Kind::alpha;
  if (text == "alpha_then_elbow") return Truncation::Kind::alpha_then_elbow;
  throw InputError("unknown truncation '" + text + "' (expected elbow, alpha or alpha_then_elbow)");
}

}  // namespace groundec
