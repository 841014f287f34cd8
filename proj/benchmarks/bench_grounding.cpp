// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include <benchmark/benchmark.h>

#include <random>

#include "groundec/decoder.hpp"
#include "groundec/trace.hpp"
#include "support/oracles.hpp"
#include "support/synthetic_backend.hpp"

using namespace groundec;

namespace {

PromptContext random_context(std::size_t vocab, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PromptContext ctx = build_grounded_prompt(testing::random_tokens(rng, m, vocab), testing::random_tokens(rng, 4, vocab));
  for (std::size_t j = 0; j < ctx.n(); ++j) ctx.prompt_distributions.push_back(testing::random_distribution(rng, vocab));
  return ctx;
}

// Args: vocab size, candidate count.
void BM_GroundingStep(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto index = precompute_grounding_index(random_context(vocab, 16, 1), GroundingPositions::description_only);
  std::vector<TokenProb> entries;
  for (std::size_t i = 0; i < k; ++i) entries.push_back({static_cast<TokenId>(i * (vocab / k)), 1.0 / k});
  const auto candidates = CandidateSet::from_entries(entries);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rescore(candidates, grounding_scores(candidates, index)));
  }
}
BENCHMARK(BM_GroundingStep)->Args({128, 8})->Args({32000, 8})->Args({32000, 64});

// Args: vocab size, description length.
void BM_IndexBuild(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto ctx = random_context(vocab, m, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(precompute_grounding_index(ctx, GroundingPositions::description_only));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * vocab * m));
}
BENCHMARK(BM_IndexBuild)->Args({8000, 512})->Args({16000, 512})->Args({32000, 128})->Args({32000, 512})
    ->Unit(benchmark::kMillisecond);

void BM_ElbowTruncation(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto d = testing::random_distribution(rng, static_cast<std::size_t>(state.range(0)), 0.0, 0.2);
  for (auto _ : state) benchmark::DoNotOptimize(truncate_elbow(d));
}
BENCHMARK(BM_ElbowTruncation)->Arg(128)->Arg(32000);

// 128-token grounded greedy decode replayed from a dense trace.
void BM_TraceDecode(benchmark::State& state) {
  constexpr std::size_t kVocab = 32000;
  std::mt19937_64 rng(4);
  testing::SyntheticBackend source(kVocab, 5, 0.2);
  const TokenSeq description = testing::random_tokens(rng, 512, kVocab);
  const TokenSeq instruction = testing::random_tokens(rng, 8, kVocab);
  DecodeConfig cfg;
  cfg.max_tokens = 128;
  cfg.stop_tokens = std::vector<TokenId>{};
  const auto expected = decode(source, description, instruction, std::nullopt, cfg);
  TokenSeq all = build_grounded_prompt(description, instruction).tokens;
  all.insert(all.end(), expected.tokens.begin(), expected.tokens.end());
  TraceFile file;
  file.header.vocab_size = kVocab;
  file.sessions.push_back(record_session(source, all, std::nullopt, "bench"));
  const TraceBackend replay(std::move(file));
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode(replay, description, instruction, std::nullopt, cfg));
  }
}
BENCHMARK(BM_TraceDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
