// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "groundec/toy_backend.hpp"
#include "groundec/trace.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace groundec;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = GROUNDEC_FIXTURE_DIR;
const std::string kAssets = GROUNDEC_ASSET_DIR;

std::string fixture(const std::string& name) { return kFixtures + "/" + name; }

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("groundec_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::vector<std::string> steering_decode(std::vector<std::string> extra) {
  std::vector<std::string> args{"decode",     "--backend", "toy:" + fixture("steering.json"),
                                "--image",    "beach",     "--instruction-file",
                                fixture("steering_question.txt"), "--joiner", "<nl>"};
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and unknown flags") {
    CHECK(run({"--help"}).code == cli::kOk);
    CHECK(run({"decode", "--bogus"}).code == cli::kInputInvalid);
    CHECK(run({}).code == cli::kInputInvalid);
  }

  TEST_CASE("describe-first decode steers to the described object") {
    const auto r = run(steering_decode({"--describe-first", "--template", fixture("describe_template.txt")}));
    CHECK(r.code == cli::kOk);
    CHECK(r.out == "he holds his umbrella .\n");
    CHECK(r.err.find("\"description\": \"a man with red umbrella\"") != std::string::npos);
  }

  TEST_CASE("explicit description and disabled grounding") {
    CHECK(run(steering_decode({"--description", "a man with red umbrella"})).out == "he holds his umbrella .\n");
    CHECK(run(steering_decode({"--no-grounding"})).out == "he holds his hat .\n");
    CHECK(run(steering_decode({"--description", "a man with red umbrella", "--grounding-enabled", "false"})).out ==
          "he holds his hat .\n");
  }

  TEST_CASE("missing description with grounding enabled") {
    const auto r = run(steering_decode({}));
    CHECK(r.code == cli::kInputInvalid);
    CHECK(r.err.find("nothing to ground on") != std::string::npos);
  }

  TEST_CASE("alpha conflicts with elbow: warning, elbow wins") {
    const auto r = run(steering_decode({"--description", "a man with red umbrella", "--truncation", "elbow",
                                        "--alpha", "0.95"}));
    CHECK(r.code == cli::kOk);
    CHECK(r.err.find("warning: --alpha") != std::string::npos);
    CHECK(r.out == "he holds his umbrella .\n");
    // With alpha honored, 0.95 keeps only the top token and grounding cannot steer.
    CHECK(run(steering_decode({"--description", "a man with red umbrella", "--truncation", "alpha", "--alpha",
                               "0.95"}))
              .out == "he holds his hat .\n");
  }

  TEST_CASE("outputs, diagnostics, manifest and --force") {
    TempDir dir;
    const auto out = dir / "response.txt";
    const auto diag = dir / "diag.json";
    auto args = steering_decode({"--description", "a man with red umbrella", "-o", out, "--diagnostics", diag});
    REQUIRE(run(args).code == cli::kOk);
    CHECK(slurp(out) == "he holds his umbrella .\n");
    const auto d = nlohmann::json::parse(slurp(diag));
    CHECK(d.at("steps").size() == 6);  // the last step samples the stop token
    CHECK(d.at("steps")[3].at("candidates").size() == 3);
    CHECK(d.at("steps")[3].at("sampled").at("token") == "umbrella");
    const auto m = nlohmann::json::parse(slurp(out + ".manifest.json"));
    CHECK(m.at("subcommand") == "decode");
    CHECK(m.at("seed") == 20240917);
    CHECK(m.at("config").at("truncation") == "elbow");
    CHECK(m.at("outputs").size() == 2);

    const auto again = run(args);
    CHECK(again.code == cli::kInputInvalid);
    CHECK(again.err.find("--force") != std::string::npos);
    args.push_back("--force");
    CHECK(run(args).code == cli::kOk);
  }

  TEST_CASE("identical runs produce identical outputs") {
    const std::vector<std::string> extra{"--description", "a man with red umbrella", "--sampler", "multinomial",
                                         "--top-p", "0.95", "--temperature", "1.5", "--seed", "7"};
    const auto a = run(steering_decode(extra));
    const auto b = run(steering_decode(extra));
    CHECK(a.code == cli::kOk);
    CHECK(a.out == b.out);
  }

  TEST_CASE("config file with flag overrides") {
    TempDir dir;
    std::ofstream(dir / "run.cfg") << "grounding_enabled = false\nmax_tokens = 2\n";
    CHECK(run(steering_decode({"--config", dir / "run.cfg"})).out == "he holds\n");
    CHECK(run(steering_decode({"--config", dir / "run.cfg", "--max-tokens", "3"})).out == "he holds his\n");
    CHECK(run(steering_decode({"--no-grounding", "--max-tokens", "0"})).code == cli::kInputInvalid);
  }

  TEST_CASE("trace replay, misses and unreachable servers") {
    TempDir dir;
    const ToyBackend toy(ToyModelSpec::load(fixture("steering.json")));
    const auto& v = *toy.vocabulary();
    TraceFile file;
    file.header.vocab_size = static_cast<std::uint32_t>(v.size());
    file.header.tokenizer = "steering";
    file.sessions.push_back(
        record_session(toy, v.encode("what is he holding ? he holds his hat ."), std::nullopt, "s0", 4));
    write_trace(file, dir / "s.trace");
    {
      std::ofstream vocab(dir / "vocab.txt");
      for (TokenId i = 0; i < v.size(); ++i) vocab << v.token(i) << "\n";
    }
    const auto replay = run({"decode", "--backend", "trace:" + (dir / "s.trace"), "--vocab", dir / "vocab.txt",
                             "--no-grounding", "--stop-tokens", "0", "--instruction", "what is he holding ?"});
    CHECK(replay.code == cli::kOk);
    CHECK(replay.out == "he holds his hat .\n");

    const auto miss = run({"decode", "--backend", "trace:" + (dir / "s.trace"), "--vocab", dir / "vocab.txt",
                           "--no-grounding", "--instruction", "what is he ?"});
    CHECK(miss.code == cli::kBackendFailure);

    const auto http = run({"decode", "--backend", "http:http://127.0.0.1:1", "--no-grounding", "--instruction-ids",
                           "1 2"});
    CHECK(http.code == cli::kBackendFailure);
    CHECK(run({"decode", "--backend", "nope:x", "--no-grounding", "--instruction-ids", "1"}).code ==
          cli::kInputInvalid);
  }

  TEST_CASE("describe") {
    const auto r = run({"describe", "--backend", "toy:" + fixture("steering.json"), "--image", "beach", "--template",
                        fixture("describe_template.txt")});
    CHECK(r.code == cli::kOk);
    CHECK(r.out == "a man with red umbrella\n");
    CHECK(run({"describe", "--backend", "toy:" + fixture("steering.json")}).code == cli::kInputInvalid);
  }

  TEST_CASE("rank writes a trace and a curve") {
    TempDir dir;
    const std::vector<std::string> base{"rank",
                                        "--aligned",
                                        "toy:" + fixture("rank_aligned.json"),
                                        "--base",
                                        "toy:" + fixture("rank_base.json"),
                                        "--inputs",
                                        fixture("rank_inputs.jsonl")};
    auto args = base;
    args.insert(args.end(), {"-o", dir / "ranks.tsv", "--curve", dir / "curve.tsv"});
    REQUIRE(run(args).code == cli::kOk);
    CHECK(slurp(dir / "ranks.tsv") ==
          "response_id\ttoken_index\taligned_argmax\teta\tshift\n"
          "r1\t0\t2\t0\tunshifted\n"
          "r1\t1\t3\t1\tmarginal\n"
          "r1\t2\t4\t3\tshifted\n"
          "r1\t3\t5\t0\tunshifted\n"
          "r2\t0\t3\t1\tmarginal\n");
    CHECK(slurp(dir / "curve.tsv") == "position\tmean_eta\tcount\n1\t0.5\t2\n2\t1\t1\n3\t3\t1\n4\t0\t1\n");

    auto parallel = base;
    parallel.insert(parallel.end(), {"--jobs", "4"});
    CHECK(run(parallel).out == slurp(dir / "ranks.tsv"));

    const auto mismatch = run({"rank", "--aligned", "toy:" + fixture("rank_aligned.json"), "--base",
                               "toy:" + fixture("steering.json"), "--inputs", fixture("rank_inputs.jsonl")});
    CHECK(mismatch.code == cli::kInputInvalid);
  }

  TEST_CASE("stats two-row table") {
    const auto r = run({"stats", "--backend", "toy:" + fixture("population.json"), "--inputs",
                        fixture("population_inputs.jsonl"), "--spans", fixture("population_spans.jsonl")});
    CHECK(r.code == cli::kOk);
    CHECK(r.out ==
          "population\tk\tvariance\trange\tavg\ttokens\n"
          "clean\t1.000000\t0.000000\t0.000000\t0.980000\t2\n"
          "hallucinated\t4.000000\t0.000000\t0.000000\t0.230000\t2\n");
    CHECK(run({"stats", "--backend", "toy:" + fixture("population.json"), "--inputs",
               fixture("population_inputs.jsonl"), "--spans", "/nonexistent/spans.jsonl"})
              .code == cli::kInputInvalid);
  }

  TEST_CASE("classify with a k sweep") {
    TempDir dir;
    const std::vector<std::string> args{"classify",
                                        "--annotations",
                                        fixture("algorithm_annotations.jsonl"),
                                        "--ranks",
                                        fixture("algorithm_ranks.tsv"),
                                        "--retrieval",
                                        fixture("algorithm_retrieval.json"),
                                        "--k",
                                        "10,25,40",
                                        "--jobs",
                                        "2",
                                        "-o",
                                        dir / "report.json"};
    REQUIRE(run(args).code == cli::kOk);
    for (int k : {10, 25, 40}) {
      const auto j = nlohmann::json::parse(slurp(dir / ("report.k" + std::to_string(k) + ".json")));
      CHECK(j.at("k") == k);
      CHECK(j.at("counts").at("Language") == 1);
    }
    const auto k25 = nlohmann::json::parse(slurp(dir / "report.k25.json"));
    CHECK(k25.at("counts").at("Vision") == 2);
    CHECK(k25.at("counts").at("Style") == 1);
    CHECK(k25.at("counts").at("IT") == 2);
    CHECK(k25.at("counts").at("Skipped") == 1);
    CHECK(fs::exists(dir / "report.k10.json.manifest.json"));
  }

  TEST_CASE("shipped describe template matches the built-in default") {
    std::string text = slurp(kAssets + "/describe_template.txt");
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    CHECK(text == cli::kDefaultDescribeTemplate);
  }
}
