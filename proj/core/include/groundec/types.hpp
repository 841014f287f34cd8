// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace groundec {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/// Marks "no token" in trace records (the final, open-ended position).
inline constexpr TokenId kNoToken = std::numeric_limits<TokenId>::max();

/// Clamp applied before every log in KL computations.
inline constexpr double kDefaultKlFloor = 1e-12;

struct TokenProb {
  TokenId id = 0;
  double prob = 0.0;

  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

/// Opaque image handle. Backends interpret the tag (a path, a cache key, ...).
struct ImageRef {
  std::string tag;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

using OptionalImage = std::optional<ImageRef>;

}  // namespace groundec
