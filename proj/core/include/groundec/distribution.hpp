// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

/**
 * @file distribution.hpp
 * @brief Probability-distribution primitives for grounded decoding.
 *
 * Everything here is a pure function over immutable values:
 * - softmax over logits with a negative-infinity sentinel for truncated slots
 * - one-hot and full KL divergences with a probability floor
 * - plausibility (alpha) truncation and elbow truncation
 * - post-truncation statistics over candidate sets
 *
 * Ties are always broken by ascending token id so outputs are replayable.
 */

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "groundec/types.hpp"

namespace groundec {

/// Allowed deviation of a distribution's total mass from 1.
inline constexpr double kMassTolerance = 1e-6;

/// Highest-probability tokens examined by the elbow scan.
inline constexpr std::size_t kDefaultElbowWindow = 1000;

/// Distances this close to the maximum count as ties in the elbow scan.
inline constexpr double kElbowTieTolerance = 1e-12;

class Distribution {
 public:
  /// Validates mass, non-negativity and size. Throws InputError.
  static Distribution from_probs(std::vector<double> probs);
  static Distribution one_hot(TokenId token, std::size_t vocab_size);
  static Distribution uniform(std::size_t vocab_size);

  std::span<const double> probs() const { return probs_; }
  std::size_t vocab_size() const { return probs_.size(); }
  double operator[](TokenId token) const { return probs_[token]; }

  /// Most probable token, lowest id on ties.
  TokenId argmax() const;

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {}

  std::vector<double> probs_;
};

/// Dense logits. Entries are finite or exactly -infinity (a truncated slot).
class LogitVector {
 public:
  static LogitVector from_logits(std::vector<double> logits);

  std::span<const double> logits() const { return logits_; }
  std::size_t vocab_size() const { return logits_.size(); }

 private:
  explicit LogitVector(std::vector<double> logits) : logits_(std::move(logits)) {}

  std::vector<double> logits_;
};

/// Plausible next tokens with their original probabilities, most probable first.
class CandidateSet {
 public:
  /// Sorts by probability descending (ties: ascending id) and validates
  /// k >= 1, probabilities in (0, 1] and unique ids.
  static CandidateSet from_entries(std::vector<TokenProb> entries);

  std::span<const TokenProb> entries() const { return entries_; }
  std::size_t k() const { return entries_.size(); }
  bool contains(TokenId token) const;

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;

 private:
  explicit CandidateSet(std::vector<TokenProb> entries) : entries_(std::move(entries)) {}

  std::vector<TokenProb> entries_;
};

struct LogitStats {
  double k = 0.0;         ///< mean candidate count
  double variance = 0.0;  ///< mean per-set population variance of kept probabilities
  double range = 0.0;     ///< mean per-set max - min
  double avg = 0.0;       ///< mean per-set average probability
};

struct Truncation {
  enum class Kind { elbow, alpha, alpha_then_elbow };

  Kind kind = Kind::elbow;
  double alpha = 0.1;
  std::size_t elbow_window = kDefaultElbowWindow;
};

/// Throws InputError for an all-sentinel input ("empty support") or T <= 0.
Distribution softmax(const LogitVector& logits, double temperature = 1.0);

/// KL(one-hot(target) || q) = -ln(max(q[target], floor)).
double kl_onehot(TokenId target, const Distribution& q, double floor = kDefaultKlFloor);

/// Dense KL(p || q) with 0 ln 0 = 0. Used as the brute-force reference for kl_onehot.
double kl_full(const Distribution& p, const Distribution& q, double floor = kDefaultKlFloor);

/// Keeps tokens with p > 0 and p >= alpha * max(p).
CandidateSet truncate_alpha(const Distribution& dist, double alpha);

/// Cuts the sorted distribution at the point of its cumulative curve farthest
/// from the chord joining (0, 0) and (N, C_N), N = nonzero tokens capped by window.
CandidateSet truncate_elbow(const Distribution& dist, std::size_t window = kDefaultElbowWindow);

/// Elbow over an already-truncated set (alpha survivors).
CandidateSet truncate_elbow(const CandidateSet& survivors, std::size_t window = kDefaultElbowWindow);

/// Elbow rank over probabilities sorted non-increasing; 0 only for empty input.
std::size_t elbow_rank(std::span<const double> sorted_desc);

CandidateSet truncate(const Distribution& dist, const Truncation& truncation);

/// Throws InputError on an empty list.
LogitStats candidate_stats(std::span<const CandidateSet> sets);

std::string to_string(Truncation::Kind kind);
Truncation::Kind parse_truncation_kind(const std::string& text);

}  // namespace groundec
