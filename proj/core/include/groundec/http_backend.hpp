// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <memory>
#include <string>

#include "groundec/backend.hpp"

namespace groundec {

/// Environment variable consulted when no base URL is given.
inline constexpr const char* kBackendUrlEnv = "GROUNDEC_BACKEND_URL";
inline constexpr int kHttpProtocolVersion = 1;

struct HttpBackendOptions {
  int connect_timeout_ms = 5000;
  int read_timeout_ms = 60000;
  /// Extra attempts for the idempotent forward endpoint only.
  int forward_retries = 2;
};

/// Client for an external logit server speaking the JSON protocol in
/// docs/http-protocol.md. The constructor performs the /v1/info handshake.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(const std::string& base_url, HttpBackendOptions options = {});
  ~HttpBackend() override;
  HttpBackend(const HttpBackend&) = delete;
  HttpBackend& operator=(const HttpBackend&) = delete;

  /// Base URL from GROUNDEC_BACKEND_URL; throws InputError if unset.
  static std::unique_ptr<HttpBackend> from_environment(HttpBackendOptions options = {});

  const BackendCapabilities& capabilities() const override { return caps_; }
  Distribution next_distribution(std::span<const TokenId> context,
                                 const OptionalImage& image) const override;
  std::vector<Distribution> forward(std::span<const TokenId> tokens,
                                    const OptionalImage& image) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  BackendCapabilities caps_;
};

}  // namespace groundec
