// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

// In-process logit server speaking the v1 JSON protocol on top of any Backend.

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "groundec/backend.hpp"
#include "groundec/trace.hpp"
#include "httplib.h"
#include "json.hpp"

namespace groundec::testing {

class TestServer {
 public:
  struct Options {
    /// Send sparse top-m replies when nonzero.
    std::size_t top_m = 0;
    /// Number of /v1/forward requests to answer with 503 before succeeding.
    int fail_forward = 0;
    /// Overrides the advertised vocab_size in /v1/next replies when nonzero.
    std::size_t lie_vocab_size = 0;
  };

  explicit TestServer(const Backend& backend) : TestServer(backend, Options{}) {}

  TestServer(const Backend& backend, Options options) : backend_(backend), options_(options) {
    using nlohmann::json;
    server_.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      const auto& caps = backend_.capabilities();
      json info = {{"version", 1},
                   {"vocab_size", caps.vocab_size},
                   {"supports_images", caps.supports_images},
                   {"supports_teacher_forcing", caps.supports_teacher_forcing},
                   {"stop_tokens", caps.stop_tokens},
                   {"word_start_marker", caps.word_start ? json(caps.word_start->marker) : json(nullptr)},
                   {"max_concurrent_sessions", nullptr}};
      res.set_content(info.dump(), "application/json");
    });
    server_.Post("/v1/next", [this](const httplib::Request& req, httplib::Response& res) {
      ++next_requests;
      const json body = json::parse(req.body);
      const auto context = body.at("context").get<TokenSeq>();
      const auto dist = backend_.next_distribution(context, image_of(body));
      const std::size_t v = options_.lie_vocab_size ? options_.lie_vocab_size : dist.vocab_size();
      res.set_content(json{{"version", 1}, {"vocab_size", v}, {"distribution", encode(dist)}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/forward", [this](const httplib::Request& req, httplib::Response& res) {
      if (forward_failures_.fetch_add(1) < options_.fail_forward) {
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      ++forward_requests;
      const json body = json::parse(req.body);
      const auto tokens = body.at("tokens").get<TokenSeq>();
      json list = json::array();
      for (const auto& d : backend_.forward(tokens, image_of(body))) list.push_back(encode(d));
      res.set_content(
          json{{"version", 1}, {"vocab_size", backend_.capabilities().vocab_size}, {"distributions", list}}.dump(),
          "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~TestServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  TestServer(const TestServer&) = delete;
  TestServer& operator=(const TestServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> next_requests{0};
  std::atomic<int> forward_requests{0};

 private:
  static OptionalImage image_of(const nlohmann::json& body) {
    if (!body.contains("image") || body.at("image").is_null()) return std::nullopt;
    return ImageRef{body.at("image").get<std::string>()};
  }

  nlohmann::json encode(const Distribution& d) const {
    if (options_.top_m == 0) {
      return {{"probs", std::vector<double>(d.probs().begin(), d.probs().end())}};
    }
    const auto sparse = sparsify(d, options_.top_m);
    nlohmann::json top = nlohmann::json::array();
    for (const auto& e : sparse.top) top.push_back({e.id, e.prob});
    return {{"top", top}, {"residual", sparse.residual_mass}};
  }

  const Backend& backend_;
  Options options_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> forward_failures_{0};
};

}  // namespace groundec::testing
