// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/backend.hpp"

#include "groundec/error.hpp"

namespace groundec {

std::vector<Distribution> Backend::forward(std::span<const TokenId> tokens,
                                           const OptionalImage& image) const {
  if (!capabilities().supports_teacher_forcing) {
    throw BackendError(
        "backend does not support teacher forcing; call next_distribution once per position instead");
  }
  std::vector<Distribution> out;
  out.reserve(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    out.push_back(next_distribution(tokens.first(j), image));
  }
  return out;
}

void Backend::forward_each(std::span<const TokenId> tokens, const OptionalImage& image,
                           const PositionVisitor& visit) const {
  if (capabilities().supports_teacher_forcing) {
    const auto dists = forward(tokens, image);
    for (std::size_t j = 0; j < dists.size(); ++j) visit(j, dists[j]);
    return;
  }
  for (std::size_t j = 0; j < tokens.size(); ++j) visit(j, next_distribution(tokens.first(j), image));
}

void require_shared_vocabulary(const Backend& a, const Backend& b) {
  const auto va = a.capabilities().vocab_size;
  const auto vb = b.capabilities().vocab_size;
  if (va != vb) {
    throw InputError("vocabulary mismatch: " + std::to_string(va) + " vs " + std::to_string(vb) +
                     " tokens");
  }
}

}  // namespace groundec
