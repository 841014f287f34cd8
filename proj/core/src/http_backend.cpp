// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/http_backend.hpp"

#include <cstdlib>
#include <mutex>
#include <vector>

#include "groundec/error.hpp"
#include "groundec/trace.hpp"
#include "httplib.h"
#include "json.hpp"

namespace groundec {

namespace {

using nlohmann::json;

Distribution parse_distribution(const json& node, std::size_t vocab_size) {
  if (node.contains("probs")) {
    auto probs = node.at("probs").get<std::vector<double>>();
    if (probs.size() != vocab_size) throw BackendError("http: distribution size != vocab_size");
    return Distribution::from_probs(std::move(probs));
  }
  TraceRecord rec;
  SparseProbs sparse;
  for (const auto& pair : node.at("top")) {
    sparse.top.push_back({pair.at(0).get<TokenId>(), pair.at(1).get<double>()});
  }
  sparse.residual_mass = node.at("residual").get<double>();
  rec.probs = std::move(sparse);
  return rec.densify(vocab_size);
}

json image_json(const OptionalImage& image) { return image ? json(image->tag) : json(nullptr); }

}  // namespace

struct HttpBackend::Impl {
  std::string base_url;
  HttpBackendOptions options;
  std::mutex mutex;
  std::vector<std::unique_ptr<httplib::Client>> idle;

  std::unique_ptr<httplib::Client> acquire() {
    {
      std::lock_guard lock(mutex);
      if (!idle.empty()) {
        auto c = std::move(idle.back());
        idle.pop_back();
        return c;
      }
    }
    auto c = std::make_unique<httplib::Client>(base_url);
    c->set_keep_alive(true);
    c->set_connection_timeout(std::chrono::milliseconds(options.connect_timeout_ms));
    c->set_read_timeout(std::chrono::milliseconds(options.read_timeout_ms));
    return c;
  }

  void release(std::unique_ptr<httplib::Client> c) {
    std::lock_guard lock(mutex);
    idle.push_back(std::move(c));
  }

  json call(const std::string& path, const json* body, int attempts) {
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      auto client = acquire();
      auto res = body ? client->Post(path, body->dump(), "application/json") : client->Get(path);
      if (!res) {
        last_error = "http: request to " + path + " failed: " + httplib::to_string(res.error());
        continue;  // drop the broken connection
      }
      release(std::move(client));
      if (res->status >= 500 && attempt + 1 < attempts) {
        last_error = "http: " + path + " returned status " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw BackendError("http: " + path + " returned status " + std::to_string(res->status) + ": " +
                           res->body);
      }
      try {
        auto reply = json::parse(res->body);
        if (reply.value("version", 0) != kHttpProtocolVersion) {
          throw BackendError("http: " + path + " replied with unsupported protocol version");
        }
        return reply;
      } catch (const json::exception& e) {
        throw BackendError("http: malformed reply from " + path + ": " + e.what());
      }
    }
    throw BackendError(last_error);
  }
};

HttpBackend::HttpBackend(const std::string& base_url, HttpBackendOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->base_url = base_url;
  impl_->options = options;
  const json info = impl_->call("/v1/info", nullptr, 1);
  try {
    caps_.vocab_size = info.at("vocab_size").get<std::size_t>();
    caps_.supports_images = info.value("supports_images", false);
    caps_.supports_teacher_forcing = info.value("supports_teacher_forcing", true);
    caps_.stop_tokens = info.value("stop_tokens", std::vector<TokenId>{});
    if (info.contains("word_start_marker") && info.at("word_start_marker").is_string()) {
      caps_.word_start = WordStartRule{info.at("word_start_marker").get<std::string>()};
    }
    if (info.contains("max_concurrent_sessions") && info.at("max_concurrent_sessions").is_number()) {
      caps_.max_concurrent_sessions = info.at("max_concurrent_sessions").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("http: malformed /v1/info reply: ") + e.what());
  }
  if (caps_.vocab_size < 2) throw BackendError("http: server reported vocab_size < 2");
}

HttpBackend::~HttpBackend() = default;

std::unique_ptr<HttpBackend> HttpBackend::from_environment(HttpBackendOptions options) {
  const char* url = std::getenv(kBackendUrlEnv);
  if (url == nullptr || *url == '\0') {
    throw InputError(std::string("no backend URL given and ") + kBackendUrlEnv + " is not set");
  }
  return std::make_unique<HttpBackend>(url, options);
}

Distribution HttpBackend::next_distribution(std::span<const TokenId> context,
                                            const OptionalImage& image) const {
  const json body = {{"version", kHttpProtocolVersion},
                     {"vocab_size", caps_.vocab_size},
                     {"context", std::vector<TokenId>(context.begin(), context.end())},
                     {"image", image_json(image)}};
  const json reply = impl_->call("/v1/next", &body, 1);
  try {
    if (reply.at("vocab_size").get<std::size_t>() != caps_.vocab_size) {
      throw BackendError("http: vocab_size changed since handshake");
    }
    return parse_distribution(reply.at("distribution"), caps_.vocab_size);
  } catch (const json::exception& e) {
    throw BackendError(std::string("http: malformed /v1/next reply: ") + e.what());
  } catch (const InputError& e) {
    throw BackendError(std::string("http: invalid distribution: ") + e.what());
  }
}

std::vector<Distribution> HttpBackend::forward(std::span<const TokenId> tokens,
                                               const OptionalImage& image) const {
  if (!caps_.supports_teacher_forcing) return Backend::forward(tokens, image);
  const json body = {{"version", kHttpProtocolVersion},
                     {"vocab_size", caps_.vocab_size},
                     {"tokens", std::vector<TokenId>(tokens.begin(), tokens.end())},
                     {"image", image_json(image)}};
  const json reply = impl_->call("/v1/forward", &body, 1 + impl_->options.forward_retries);
  try {
    if (reply.at("vocab_size").get<std::size_t>() != caps_.vocab_size) {
      throw BackendError("http: vocab_size changed since handshake");
    }
    const auto& list = reply.at("distributions");
    if (list.size() != tokens.size()) throw BackendError("http: forward returned wrong number of positions");
    std::vector<Distribution> out;
    out.reserve(list.size());
    for (const auto& node : list) out.push_back(parse_distribution(node, caps_.vocab_size));
    return out;
  } catch (const json::exception& e) {
    throw BackendError(std::string("http: malformed /v1/forward reply: ") + e.what());
  } catch (const InputError& e) {
    throw BackendError(std::string("http: invalid distribution: ") + e.what());
  }
}

}  // namespace groundec
