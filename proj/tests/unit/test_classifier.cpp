// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "groundec/classifier.hpp"
#include "groundec/error.hpp"
#include "json.hpp"

using namespace groundec;

namespace {

const std::string kFixtures = GROUNDEC_FIXTURE_DIR;

struct Fixture {
  std::vector<AnnotationSet> annotations = load_annotations(kFixtures + "/algorithm_annotations.jsonl");
  std::map<std::string, RankTrace> ranks = [] {
    std::ifstream in(kFixtures + "/algorithm_ranks.tsv");
    return read_rank_traces(in);
  }();
  FileRetrievalProvider retrieval = FileRetrievalProvider::load(kFixtures + "/algorithm_retrieval.json");

  CategoryReport run(std::size_t k) const {
    CategoryReport total;
    for (const auto& a : annotations) total.merge(categorize_all(a, ranks.at(a.response_id), retrieval, k));
    return total;
  }
};

class CountingRetrieval final : public RetrievalProvider {
 public:
  std::vector<RetrievalHit> top_hits(const AnnotationSet&, std::size_t) const override {
    ++calls;
    if (fail) throw BackendError("index offline");
    return {{"i0", "a red umbrella", 0.9}};
  }
  mutable int calls = 0;
  bool fail = false;
};

AnnotationSet one_phrase(const std::string& phrase, PhraseType type) {
  AnnotationSet a;
  a.response_id = "x";
  a.response_tokens = {1, 2, 3};
  a.visual_elements = {"umbrella"};
  a.phrases.push_back({phrase, {1, 3}, type});
  return a;
}

RankTrace flat_trace(std::size_t eta) {
  return RankTrace(3, BaseRankRecord{0, 0, eta, classify_shift(eta)});
}

}  // namespace

TEST_SUITE("categorize") {
  TEST_CASE("branch order") {
    CHECK(categorize(PhraseType::relation, 0, true) == Category::language);
    CHECK(categorize(PhraseType::relation, 1, true) == Category::it);
    CHECK(categorize(PhraseType::relation, 1, false) == Category::style);
    CHECK(categorize(PhraseType::object, 1, false) == Category::vision);
    CHECK(categorize(PhraseType::action, 7, false) == Category::vision);
  }

  TEST_CASE("visual element gate") {
    CHECK(phrase_in_visual_elements("two Umbrellas", {"umbrella"}));
    CHECK(phrase_in_visual_elements("umbrella", {"red umbrellas"}));
    CHECK_FALSE(phrase_in_visual_elements("happy mood", {"umbrella"}));
    CHECK(phrase_in_visual_elements("glass", {"glass"}));
    CHECK_FALSE(phrase_in_visual_elements("bus", {"bu"}));
  }

  TEST_CASE("retrieval match is a case-insensitive substring within k") {
    const std::vector<RetrievalHit> hits{{"a", "Nothing here", 0.9}, {"b", "A Red Umbrella", 0.8}};
    CHECK(phrase_in_retrieval("red umbrella", hits, 2));
    CHECK_FALSE(phrase_in_retrieval("red umbrella", hits, 1));
    CHECK_THROWS_AS(phrase_in_retrieval("x", hits, 0), InputError);
  }
}

TEST_SUITE("categorize_all") {
  TEST_CASE("fixture counts") {
    const Fixture f;
    const auto report = f.run(kDefaultRetrievalK);
    CHECK(report.count(Category::language) == 1);
    CHECK(report.count(Category::vision) == 2);
    CHECK(report.count(Category::style) == 1);
    CHECK(report.count(Category::it) == 2);
    CHECK(report.count(Category::skipped_nonvisual) == 1);
    CHECK(report.count(Category::error) == 0);
  }

  TEST_CASE("language count does not depend on k") {
    const Fixture f;
    for (std::size_t k : {10, 25, 40}) CHECK(f.run(k).count(Category::language) == 1);
    // The late retrieval hit only matters once k reaches it.
    CHECK(f.run(40).count(Category::it) == 3);
    CHECK(f.run(10).count(Category::it) == 2);
  }

  TEST_CASE("retrieval is skipped when every phrase is unshifted") {
    CountingRetrieval r;
    const auto report = categorize_all(one_phrase("umbrella", PhraseType::object), flat_trace(0), r);
    CHECK(report.count(Category::language) == 1);
    CHECK(r.calls == 0);
  }

  TEST_CASE("retrieval failures become per-phrase errors") {
    CountingRetrieval r;
    r.fail = true;
    const auto report = categorize_all(one_phrase("red umbrella", PhraseType::object), flat_trace(4), r);
    CHECK(report.count(Category::error) == 1);
    CHECK(report.phrases[0].second.error.find("index offline") != std::string::npos);
  }

  TEST_CASE("short rank trace is rejected") {
    CountingRetrieval r;
    CHECK_THROWS_AS(categorize_all(one_phrase("umbrella", PhraseType::object), RankTrace(1), r), InputError);
  }

  TEST_CASE("word offsets choose the first word token inside the span") {
    auto a = one_phrase("umbrella", PhraseType::object);
    a.word_offsets = std::vector<std::size_t>{0, 2};
    RankTrace trace = flat_trace(0);
    trace[2].eta = 3;
    CountingRetrieval r;
    const auto report = categorize_all(a, trace, r);
    CHECK(report.phrases[0].second.eta == 3u);
  }

  TEST_CASE("json report") {
    const Fixture f;
    const auto j = nlohmann::json::parse(report_to_json(f.run(25), 25));
    CHECK(j.at("k") == 25);
    CHECK(j.at("counts").at("Vision") == 2);
    CHECK(j.at("phrases").size() == 7);
    CHECK(j.at("phrases")[0].at("category") == "Language");
  }
}

TEST_SUITE("annotations") {
  TEST_CASE("errors name the line and field") {
    std::istringstream missing(
        R"({"type":"header","response_id":"a","response_text":"t","response_tokens":[1],"visual_elements":[]})"
        "\n"
        R"({"type":"phrase","response_id":"a","token_span":[0,1],"phrase_type":"object"})"
        "\n");
    CHECK_THROWS_WITH_AS(parse_annotations(missing), doctest::Contains("line 2, field 'phrase_text'"), InputError);

    std::istringstream span(
        R"({"type":"header","response_id":"a","response_text":"t","response_tokens":[1],"visual_elements":[]})"
        "\n"
        R"({"type":"phrase","response_id":"a","token_span":[0,4],"phrase_text":"x","phrase_type":"object"})"
        "\n");
    CHECK_THROWS_WITH_AS(parse_annotations(span), doctest::Contains("field 'token_span'"), InputError);

    std::istringstream type(
        R"({"type":"header","response_id":"a","response_text":"t","response_tokens":[1],"visual_elements":[]})"
        "\n"
        R"({"type":"phrase","response_id":"a","token_span":[0,1],"phrase_text":"x","phrase_type":"thing"})"
        "\n");
    CHECK_THROWS_WITH_AS(parse_annotations(type), doctest::Contains("field 'phrase_type'"), InputError);

    std::istringstream orphan(R"({"type":"phrase","response_id":"z"})");
    CHECK_THROWS_AS(parse_annotations(orphan), InputError);
    std::istringstream junk("{not json");
    CHECK_THROWS_WITH_AS(parse_annotations(junk), doctest::Contains("line 1"), InputError);
  }

  TEST_CASE("fixture loads") {
    const auto sets = load_annotations(kFixtures + "/algorithm_annotations.jsonl");
    REQUIRE(sets.size() == 2);
    CHECK(sets[0].phrases.size() == 4);
    CHECK(sets[1].phrases.size() == 3);
    CHECK(sets[1].phrases[1].type == PhraseType::action);
  }
}
