// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

/**
 * @file trace.hpp
 * @brief Recorded per-position distributions and their replay backend.
 *
 * A trace file holds sessions; a session is the teacher-forced record of one
 * token sequence. Record i carries p(. | tokens[0..i)) and the token actually
 * observed at position i (kNoToken for the trailing open position). Byte layout
 * is documented in docs/trace-format.md.
 */

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "groundec/backend.hpp"

namespace groundec {

inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::size_t kDefaultTopM = 256;

struct SparseProbs {
  std::vector<TokenProb> top;  ///< most probable entries
  double residual_mass = 0.0;  ///< 1 - sum(top), spread uniformly over absent tokens
};

struct TraceRecord {
  std::uint32_t position = 0;
  TokenId context_token = kNoToken;
  std::variant<std::vector<double>, SparseProbs> probs;

  bool is_sparse() const { return std::holds_alternative<SparseProbs>(probs); }
  /// Throws InputError if the densified vector is not a valid distribution.
  Distribution densify(std::size_t vocab_size) const;
};

struct TraceSession {
  std::string label;
  std::vector<TraceRecord> records;

  /// context_token of every record except a trailing kNoToken.
  TokenSeq tokens() const;
};

struct TraceHeader {
  std::uint16_t version = kTraceVersion;
  std::uint32_t vocab_size = 0;
  bool sparse = false;
  std::string tokenizer;
};

struct TraceFile {
  TraceHeader header;
  std::vector<TraceSession> sessions;
};

/// Sparse top-m view of a distribution (ties by ascending id).
SparseProbs sparsify(const Distribution& dist, std::size_t top_m);

/// Teacher-forced capture of `tokens` plus the trailing next-token distribution.
/// top_m == 0 stores dense records.
TraceSession record_session(const Backend& backend, std::span<const TokenId> tokens,
                            const OptionalImage& image, std::string label,
                            std::size_t top_m = 0);

void write_trace(const TraceFile& trace, const std::filesystem::path& path);
/// Throws InputError on bad magic, unsupported version or truncation.
TraceFile load_trace(const std::filesystem::path& path);

std::string encode_trace(const TraceFile& trace);
TraceFile decode_trace(std::string_view bytes);

/// Replays recorded sessions. A context must be a recorded prefix of some
/// session; anything else is a TraceMiss.
class TraceBackend final : public Backend {
 public:
  explicit TraceBackend(TraceFile trace, BackendCapabilities overrides = {});
  static TraceBackend open(const std::filesystem::path& path);

  const BackendCapabilities& capabilities() const override { return caps_; }
  Distribution next_distribution(std::span<const TokenId> context,
                                 const OptionalImage& image) const override;
  void forward_each(std::span<const TokenId> tokens, const OptionalImage& image,
                    const PositionVisitor& visit) const override;
  const Vocabulary* vocabulary() const override { return vocab_ ? &*vocab_ : nullptr; }

  void set_vocabulary(Vocabulary vocab);
  const TraceFile& trace() const { return trace_; }

 private:
  struct Match {
    const TraceSession* session = nullptr;
    std::size_t matched = 0;
  };
  Match longest_match(std::span<const TokenId> context) const;

  TraceFile trace_;
  std::vector<TokenSeq> session_tokens_;
  BackendCapabilities caps_;
  std::optional<Vocabulary> vocab_;
};

}  // namespace groundec
