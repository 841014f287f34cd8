// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "groundec/decoder.hpp"
#include "groundec/error.hpp"
#include "groundec/toy_backend.hpp"
#include "support/oracles.hpp"
#include "support/synthetic_backend.hpp"

using namespace groundec;
using doctest::Approx;

namespace {

const std::string kFixtures = GROUNDEC_FIXTURE_DIR;

ToyBackend steering() { return ToyBackend(ToyModelSpec::load(kFixtures + "/steering.json")); }

TokenSeq words(const Backend& b, const std::string& text) { return b.vocabulary()->encode(text); }
std::string text(const Backend& b, const TokenSeq& ids) { return b.vocabulary()->decode(ids); }

DecodeConfig greedy_config() {
  DecodeConfig cfg;
  cfg.max_tokens = 16;
  return cfg;
}

}  // namespace

TEST_SUITE("prompt") {
  TEST_CASE("build_grounded_prompt concatenates and counts") {
    const auto ctx = build_grounded_prompt({10}, {20, 21}, {1});
    CHECK(ctx.tokens == TokenSeq{10, 1, 20, 21});
    CHECK(ctx.description_length == 1);
    CHECK(ctx.instruction_length == 2);
    CHECK(ctx.n() == 4);
    CHECK(last_grounding_position(ctx, GroundingPositions::description_only) == 1);
    CHECK(last_grounding_position(ctx, GroundingPositions::full_prompt) == 4);
  }

  TEST_CASE("empty description has nothing to ground on") {
    CHECK_THROWS_WITH_AS(build_grounded_prompt({}, {1}), doctest::Contains("nothing to ground on"), InputError);
    CHECK_THROWS_AS(build_grounded_prompt({1}, {}), InputError);
  }
}

TEST_SUITE("grounding") {
  TEST_CASE("index keeps per-token maxima and the earliest attaining position") {
    GroundingIndex index(3);
    index.accumulate(1, Distribution::from_probs({0.5, 0.5, 0.0}));
    index.accumulate(2, Distribution::from_probs({0.5, 0.2, 0.3}));
    index.accumulate(3, Distribution::from_probs({0.1, 0.1, 0.8}));
    CHECK(index.positions() == 3);
    CHECK(index.max_prob(0) == 0.5);
    CHECK(index.argmax_position(0) == 1);
    CHECK(index.max_prob(1) == 0.5);
    CHECK(index.max_prob(2) == 0.8);
    CHECK(index.argmax_position(2) == 3);
    CHECK_THROWS_AS(index.accumulate(4, Distribution::uniform(4)), InputError);
  }

  TEST_CASE("scores are -ln of the floored maximum") {
    GroundingIndex index(4);
    index.accumulate(1, Distribution::from_probs({0.25, 0.25, 0.5, 0.0}));
    const auto cands = CandidateSet::from_entries({{2, 0.6}, {0, 0.3}, {3, 0.1}});
    const auto table = grounding_scores(cands, index);
    REQUIRE(table.scores.size() == 3);
    CHECK(table.scores[0].token == 2);
    CHECK(table.scores[0].kl == Approx(0.6931471805599453).epsilon(1e-14));
    CHECK(table.scores[1].kl == Approx(1.3862943611198906).epsilon(1e-14));
    CHECK(table.scores[2].kl == Approx(27.631021115928547).epsilon(1e-14));
  }

  TEST_CASE("rescore examples") {
    const auto cands = CandidateSet::from_entries({{0, 0.5}, {1, 0.5}});
    const GroundingTable t1{{{0, 0.0, 1}, {1, std::log(3.0), 1}}};
    const auto r1 = rescore(cands, t1);
    CHECK(r1[0].prob == Approx(0.75).epsilon(1e-14));
    CHECK(r1[1].prob == Approx(0.25).epsilon(1e-14));

    // softmax(-[2.0, 0.1]) computed by hand.
    const auto cands2 = CandidateSet::from_entries({{7, 0.9}, {8, 0.1}});
    const GroundingTable t2{{{7, 2.0, 1}, {8, 0.1, 1}}};
    const auto r2 = rescore(cands2, t2);
    CHECK(r2[0].prob == Approx(0.13010847436299788).epsilon(1e-14));
    CHECK(r2[1].prob == Approx(0.8698915256370022).epsilon(1e-14));
    Sampler greedy;
    CHECK(greedy.sample(r2) == 8);
  }

  TEST_CASE("rescore ignores the original probabilities and survives huge KL") {
    const auto a = CandidateSet::from_entries({{0, 0.99}, {1, 0.01}});
    const auto b = CandidateSet::from_entries({{0, 0.01}, {1, 0.99}});
    const GroundingTable t{{{0, 1.0, 1}, {1, 2.0, 1}}};
    CHECK(rescore(a, t)[0].prob == Approx(rescore(b, GroundingTable{{{1, 2.0, 1}, {0, 1.0, 1}}})[1].prob));
    const GroundingTable big{{{0, 1e6, 1}, {1, 1e6 + 1.0, 1}}};
    const auto r = rescore(a, big);
    CHECK(std::isfinite(r[0].prob));
    CHECK(r[0].prob + r[1].prob == Approx(1.0));
    CHECK_THROWS_AS(rescore(a, t, 0.0), InputError);
  }

  TEST_CASE("property: index scores equal the brute-force minimum over positions") {
    std::mt19937_64 rng(23);
    for (int session = 0; session < 100; ++session) {
      const std::size_t v = 2 + rng() % 60;
      const std::size_t n = 1 + rng() % 20;
      std::vector<Distribution> qs;
      GroundingIndex index(v);
      for (std::size_t j = 1; j <= n; ++j) {
        qs.push_back(testing::random_distribution(rng, v, 0.4, 0.5));
        index.accumulate(j, qs.back());
      }
      const auto cands = truncate_alpha(testing::random_distribution(rng, v), 0.0);
      const auto table = grounding_scores(cands, index);
      for (const auto& s : table.scores) {
        CHECK(s.kl == Approx(testing::brute_grounding(s.token, qs, kDefaultKlFloor)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("streamed index matches the precomputed one") {
    testing::SyntheticBackend backend(40, 5);
    std::mt19937_64 rng(3);
    auto ctx = build_grounded_prompt(testing::random_tokens(rng, 6, 40), testing::random_tokens(rng, 4, 40), {0});
    ctx.prompt_distributions = backend.forward(ctx.tokens, std::nullopt);
    for (auto positions : {GroundingPositions::description_only, GroundingPositions::full_prompt}) {
      const auto a = precompute_grounding_index(ctx, positions);
      const auto b = build_grounding_index(backend, ctx, positions, std::nullopt);
      CHECK(a.positions() == b.positions());
      for (TokenId w = 0; w < 40; ++w) CHECK(a.max_prob(w) == b.max_prob(w));
    }
    CHECK(precompute_grounding_index(ctx, GroundingPositions::description_only).positions() == 6);
    CHECK(precompute_grounding_index(ctx, GroundingPositions::full_prompt).positions() == 11);
  }
}

TEST_SUITE("sampler") {
  TEST_CASE("greedy takes the lowest id among ties") {
    Sampler s;
    const std::vector<TokenProb> probs{{5, 0.4}, {2, 0.4}, {9, 0.2}};
    CHECK(s.sample(probs) == 2);
  }

  TEST_CASE("multinomial is reproducible for a fixed seed") {
    const SamplerConfig cfg{SamplerConfig::Kind::multinomial, 0.9, 1.0};
    const std::vector<TokenProb> probs{{0, 0.3}, {1, 0.3}, {2, 0.4}};
    Sampler a(cfg, 99), b(cfg, 99);
    for (int i = 0; i < 50; ++i) CHECK(a.sample(probs) == b.sample(probs));
  }

  TEST_CASE("top_p restricts the nucleus") {
    const SamplerConfig cfg{SamplerConfig::Kind::multinomial, 0.5, 1.0};
    const std::vector<TokenProb> probs{{0, 0.6}, {1, 0.3}, {2, 0.1}};
    Sampler s(cfg, 1);
    for (int i = 0; i < 200; ++i) CHECK(s.sample(probs) == 0);
  }

  TEST_CASE("multinomial frequencies follow the distribution") {
    const SamplerConfig cfg{SamplerConfig::Kind::multinomial, 1.0, 1.0};
    const std::vector<TokenProb> probs{{0, 0.2}, {1, 0.8}};
    Sampler s(cfg, 4);
    int ones = 0;
    for (int i = 0; i < 20000; ++i) ones += s.sample(probs) == 1;
    CHECK(ones / 20000.0 == Approx(0.8).epsilon(0.02));
  }
}

TEST_SUITE("decode") {
  TEST_CASE("grounding steers the toy model toward the described object") {
    const auto backend = steering();
    const auto desc = words(backend, "a man with red umbrella");
    const auto instr = words(backend, "what is he holding ?");
    const auto joiner = words(backend, "<nl>");
    const ImageRef beach{"beach"};

    auto cfg = greedy_config();
    cfg.verbose = true;
    const auto grounded = decode(backend, desc, instr, beach, cfg, joiner);
    CHECK(text(backend, grounded.tokens) == "he holds his umbrella .");
    CHECK(grounded.stopped);

    // Step 3 is the decision between hat, umbrella and cup.
    const auto& step = grounded.per_step.at(3);
    CHECK(step.candidates.k() == 3);
    const auto hat = *backend.vocabulary()->find("hat");
    const auto umbrella = *backend.vocabulary()->find("umbrella");
    for (const auto& s : step.grounding.scores) {
      if (s.token == umbrella) CHECK(s.kl == 0.0);
      if (s.token == hat) CHECK(s.kl == Approx(-std::log(0.2 / 17.0)).epsilon(1e-12));
    }
    CHECK(step.sampled == umbrella);

    cfg.grounding_enabled = false;
    CHECK(text(backend, decode(backend, desc, instr, beach, cfg, joiner).tokens) == "he holds his hat .");
    CHECK(text(backend, decode_plain(backend, instr, beach, cfg).tokens) == "he holds his hat .");
  }

  TEST_CASE("max_tokens bounds the response") {
    const auto backend = steering();
    auto cfg = greedy_config();
    cfg.max_tokens = 2;
    const auto r = decode(backend, words(backend, "a man"), words(backend, "?"), std::nullopt, cfg);
    CHECK(r.tokens.size() == 2);
    CHECK_FALSE(r.stopped);
    cfg.max_tokens = 0;
    CHECK(decode(backend, words(backend, "a"), words(backend, "?"), std::nullopt, cfg).tokens.empty());
  }

  TEST_CASE("stop token override") {
    const auto backend = steering();
    auto cfg = greedy_config();
    cfg.grounding_enabled = false;
    cfg.stop_tokens = std::vector<TokenId>{*backend.vocabulary()->find("holds")};
    const auto r = decode(backend, words(backend, "a"), words(backend, "?"), std::nullopt, cfg);
    CHECK(text(backend, r.tokens) == "he");
    CHECK(r.stopped);
  }

  TEST_CASE("backend failures carry the step number") {
    class Failing final : public Backend {
     public:
      Failing() { caps_.vocab_size = 3; }
      const BackendCapabilities& capabilities() const override { return caps_; }
      Distribution next_distribution(std::span<const TokenId> ctx, const OptionalImage&) const override {
        if (ctx.size() >= 4) throw BackendError("connection reset");
        return Distribution::from_probs({0.0, 1.0, 0.0});
      }

     private:
      BackendCapabilities caps_;
    };
    auto cfg = greedy_config();
    cfg.grounding_enabled = false;
    try {
      decode(Failing{}, {1}, {1}, std::nullopt, cfg);
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      REQUIRE(e.step().has_value());
      CHECK(*e.step() == 2);
      CHECK(std::string(e.what()).find("connection reset") != std::string::npos);
    }
  }

  TEST_CASE("synthetic sessions decode deterministically") {
    testing::SyntheticBackend backend(50, 8, 0.3);
    std::mt19937_64 rng(8);
    const auto desc = testing::random_tokens(rng, 5, 50);
    const auto instr = testing::random_tokens(rng, 3, 50);
    auto cfg = greedy_config();
    cfg.sampler = {SamplerConfig::Kind::multinomial, 0.9, 0.8};
    const auto a = decode(backend, desc, instr, std::nullopt, cfg);
    const auto b = decode(backend, desc, instr, std::nullopt, cfg);
    CHECK(a.tokens == b.tokens);
    CHECK(a.tokens.size() == cfg.max_tokens);
  }
}

TEST_SUITE("describe") {
  TEST_CASE("generate_description replays the canned description") {
    const auto backend = steering();
    DescribeOptions opts;
    opts.template_tokens = words(backend, load_description_template(kFixtures + "/describe_template.txt"));
    CHECK(text(backend, generate_description(backend, ImageRef{"beach"}, opts)) == "a man with red umbrella");
    CHECK_THROWS_AS(generate_description(backend, std::nullopt, opts), InputError);
  }

  TEST_CASE("a provider overrides the backend") {
    const auto backend = steering();
    DescribeOptions opts;
    opts.provider = [](const OptionalImage&) { return TokenSeq{3, 4}; };
    CHECK(generate_description(backend, std::nullopt, opts) == TokenSeq{3, 4});
  }
}

TEST_SUITE("config") {
  TEST_CASE("parses keys and compact forms") {
    const auto cfg = parse_decode_config(
        "# comment\n"
        "truncation = alpha(0.2)\n"
        "sampler = multinomial(0.8, 0.5)\n"
        "grounding_positions = full_prompt\n"
        "rescore_temperature = 2\n"
        "max_tokens = 12\n"
        "stop_tokens = 0, 3\n"
        "seed = 5\n");
    CHECK(cfg.truncation.kind == Truncation::Kind::alpha);
    CHECK(cfg.truncation.alpha == 0.2);
    CHECK(cfg.sampler.kind == SamplerConfig::Kind::multinomial);
    CHECK(cfg.sampler.top_p == 0.8);
    CHECK(cfg.sampler.temperature == 0.5);
    CHECK(cfg.grounding_positions == GroundingPositions::full_prompt);
    CHECK(cfg.rescore_temperature == 2.0);
    CHECK(cfg.max_tokens == 12);
    CHECK(cfg.stop_tokens == std::vector<TokenId>{0, 3});
    CHECK(cfg.seed == 5);
  }

  TEST_CASE("round-trips through format_decode_config") {
    DecodeConfig cfg;
    cfg.truncation = {Truncation::Kind::alpha_then_elbow, 0.3, 50};
    cfg.image_enabled = false;
    cfg.kl_floor = 1e-9;
    const auto back = parse_decode_config(format_decode_config(cfg));
    CHECK(format_decode_config(back) == format_decode_config(cfg));
  }

  TEST_CASE("rejects bad input") {
    CHECK_THROWS_AS(parse_decode_config("bogus = 1"), InputError);
    CHECK_THROWS_AS(parse_decode_config("max_tokens = 0"), InputError);
    CHECK_THROWS_AS(parse_decode_config("alpha = 2"), InputError);
    CHECK_THROWS_AS(parse_decode_config("top_p = 0"), InputError);
    CHECK_THROWS_AS(parse_decode_config("no equals sign"), InputError);
    CHECK_THROWS_AS(parse_decode_config("rescore_temperature = -1"), InputError);
  }
}
