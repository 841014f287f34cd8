// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "support.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "groundec/error.hpp"
#include "groundec/http_backend.hpp"
#include "groundec/toy_backend.hpp"
#include "groundec/trace.hpp"

namespace groundec::cli {

OpenedBackend open_backend(const std::string& descriptor, const std::optional<std::string>& vocab_path) {
  OpenedBackend out;
  out.descriptor = descriptor;
  const auto colon = descriptor.find(':');
  const std::string kind = descriptor.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : descriptor.substr(colon + 1);

  if (kind == "toy") {
    if (arg.empty()) throw InputError("backend 'toy' needs a model path (toy:PATH)");
    out.backend = std::make_unique<ToyBackend>(ToyModelSpec::load(arg));
  } else if (kind == "trace") {
    if (arg.empty()) throw InputError("backend 'trace' needs a trace path (trace:PATH)");
    auto trace = std::make_unique<TraceBackend>(TraceBackend::open(arg));
    if (vocab_path) {
      trace->set_vocabulary(Vocabulary::load(*vocab_path, trace->capabilities().word_start.value_or(WordStartRule{})));
    }
    out.backend = std::move(trace);
  } else if (kind == "http") {
    if (arg.empty()) {
      out.backend = HttpBackend::from_environment();
    } else {
      out.backend = std::make_unique<HttpBackend>(arg);
    }
  } else {
    throw InputError("unknown backend '" + descriptor + "' (expected toy:PATH, trace:PATH or http[:URL])");
  }

  if (vocab_path && out.backend->vocabulary() == nullptr) {
    out.vocab_storage = std::make_shared<const Vocabulary>(
        Vocabulary::load(*vocab_path, out.backend->capabilities().word_start.value_or(WordStartRule{})));
  }
  out.vocab = out.vocab_storage ? out.vocab_storage.get() : out.backend->vocabulary();
  if (out.vocab && out.vocab->size() != out.backend->capabilities().vocab_size) {
    throw InputError("vocabulary has " + std::to_string(out.vocab->size()) + " tokens but backend '" + descriptor +
                     "' reports " + std::to_string(out.backend->capabilities().vocab_size));
  }
  return out;
}

TokenSeq encode_text(const Vocabulary* vocab, const std::string& text, const std::string& what) {
  if (vocab == nullptr) throw InputError(what + " given as text but no vocabulary is available; pass --vocab or ids");
  try {
    return vocab->encode(text);
  } catch (const InputError& e) {
    throw InputError(what + ": " + e.what());
  }
}

TokenSeq tokens_from_json(const Vocabulary* vocab, const nlohmann::json& node, const std::string& what) {
  if (node.is_string()) return encode_text(vocab, node.get<std::string>(), what);
  if (node.is_array()) {
    try {
      return node.get<TokenSeq>();
    } catch (const nlohmann::json::exception&) {
      throw InputError(what + ": expected text or an array of token ids");
    }
  }
  throw InputError(what + ": expected text or an array of token ids");
}

std::string render(const Vocabulary* vocab, const TokenSeq& tokens) {
  if (vocab) return vocab->decode(tokens);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TokenSeq TextSource::resolve(const Vocabulary* vocab, const std::string& what) const {
  if (ids) return parse_token_ids(*ids);
  if (file) {
    std::string content = read_file(*file);
    return encode_text(vocab, content, what);
  }
  if (text) return encode_text(vocab, *text, what);
  return {};
}

void OutputGuard::claim(const std::filesystem::path& path) {
  const std::string key = std::filesystem::absolute(path).lexically_normal().string();
  if (std::find(claimed_.begin(), claimed_.end(), key) != claimed_.end()) {
    throw InputError("output " + path.string() + " is named twice");
  }
  if (!force_ && std::filesystem::exists(path)) {
    throw InputError("refusing to overwrite " + path.string() + " (pass --force)");
  }
  claimed_.push_back(key);
}

void OutputGuard::write(const std::filesystem::path& path, const std::string& content) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
  if (!out) throw InputError("write failed for " + path.string());
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["config"] = config;
  j["backends"] = backends;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  j["wall_time_s"] = wall_time_s;
  j["argv"] = argv;
  return j.dump(2) + "\n";
}

std::optional<std::filesystem::path> manifest_path(const std::optional<std::string>& explicit_path,
                                                   const std::vector<std::string>& outputs) {
  if (explicit_path) return std::filesystem::path(*explicit_path);
  if (outputs.empty()) return std::nullopt;
  return std::filesystem::path(outputs.front() + ".manifest.json");
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t effective_jobs(std::size_t requested, std::initializer_list<const Backend*> backends) {
  std::size_t jobs = std::max<std::size_t>(1, requested);
  for (const Backend* b : backends) {
    if (b && b->capabilities().max_concurrent_sessions) {
      jobs = std::min(jobs, std::max<std::size_t>(1, *b->capabilities().max_concurrent_sessions));
    }
  }
  return jobs;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(path.string() + " line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!out.back().is_object()) {
      throw InputError(path.string() + " line " + std::to_string(line_no) + ": expected a JSON object");
    }
  }
  return out;
}

}  // namespace groundec::cli
