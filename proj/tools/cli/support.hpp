// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "groundec/backend.hpp"
#include "groundec/vocabulary.hpp"
#include "json.hpp"

namespace groundec::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInputInvalid = 2, kBackendFailure = 3 };

/// A backend opened from a descriptor: toy:PATH, trace:PATH, http[:URL].
struct OpenedBackend {
  std::string descriptor;
  std::unique_ptr<Backend> backend;
  /// --vocab file if given, else the backend's own table (may be null).
  std::shared_ptr<const Vocabulary> vocab_storage;
  const Vocabulary* vocab = nullptr;
};

OpenedBackend open_backend(const std::string& descriptor, const std::optional<std::string>& vocab_path);

/// Text is encoded with `vocab`; a JSON array or an `ids` string is taken verbatim.
TokenSeq encode_text(const Vocabulary* vocab, const std::string& text, const std::string& what);
TokenSeq tokens_from_json(const Vocabulary* vocab, const nlohmann::json& node, const std::string& what);
std::string render(const Vocabulary* vocab, const TokenSeq& tokens);

std::string read_file(const std::filesystem::path& path);

/// One-of input: literal text, a file holding text, or token ids.
struct TextSource {
  std::optional<std::string> text;
  std::optional<std::string> file;
  std::optional<std::string> ids;

  bool given() const { return text || file || ids; }
  TokenSeq resolve(const Vocabulary* vocab, const std::string& what) const;
};

/// Outputs are never overwritten without --force.
class OutputGuard {
 public:
  explicit OutputGuard(bool force) : force_(force) {}
  /// Throws InputError if `path` exists and --force is off, or if two outputs collide.
  void claim(const std::filesystem::path& path);
  void write(const std::filesystem::path& path, const std::string& content) const;
  const std::vector<std::string>& claimed() const { return claimed_; }

 private:
  bool force_;
  std::vector<std::string> claimed_;
};

/// Structured record of a run, written next to the primary output.
struct Manifest {
  std::string subcommand;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::string> backends;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  double wall_time_s = 0.0;
  std::vector<std::string> argv;

  std::string to_json() const;
};

/// "<output>.manifest.json" for the first output, else the explicit path.
std::optional<std::filesystem::path> manifest_path(const std::optional<std::string>& explicit_path,
                                                   const std::vector<std::string>& outputs);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first failure in
/// index order is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Caps --jobs by the backends' advertised session limits.
std::size_t effective_jobs(std::size_t requested, std::initializer_list<const Backend*> backends);

/// JSON-lines file of objects; errors name the line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace groundec::cli
