// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "groundec/distribution.hpp"
#include "groundec/types.hpp"
#include "groundec/vocabulary.hpp"

namespace groundec {

struct BackendCapabilities {
  std::size_t vocab_size = 0;
  bool supports_images = false;
  bool supports_teacher_forcing = false;
  std::vector<TokenId> stop_tokens;
  std::optional<WordStartRule> word_start;
  /// nullopt: unbounded.
  std::optional<std::size_t> max_concurrent_sessions;
};

/// A source of next-token distributions p(. | context [, image]).
///
/// Implementations must be deterministic for identical inputs unless they wrap a
/// live sampler, and safe for concurrent calls up to max_concurrent_sessions.
class Backend {
 public:
  using PositionVisitor = std::function<void(std::size_t position, const Distribution&)>;

  virtual ~Backend() = default;

  virtual const BackendCapabilities& capabilities() const = 0;

  /// Distribution of the token following `context`. An empty context is the
  /// begin-of-sequence context.
  virtual Distribution next_distribution(std::span<const TokenId> context,
                                         const OptionalImage& image) const = 0;

  /// Teacher-forced pass: element j is p(. | tokens[0..j)). Throws BackendError
  /// when supports_teacher_forcing is false.
  virtual std::vector<Distribution> forward(std::span<const TokenId> tokens,
                                            const OptionalImage& image) const;

  /// Streams the same distributions as forward() (0-based positions) without
  /// holding them all. Falls back to per-position next_distribution calls for
  /// backends without teacher forcing.
  virtual void forward_each(std::span<const TokenId> tokens, const OptionalImage& image,
                            const PositionVisitor& visit) const;

  virtual const Vocabulary* vocabulary() const { return nullptr; }
};

/// Throws InputError unless both backends report the same vocab_size.
void require_shared_vocabulary(const Backend& a, const Backend& b);

}  // namespace groundec
