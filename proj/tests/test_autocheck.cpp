#include <doctest.h>

#include <cmath>
#include <map>

#include "mlpref/autocheck.hpp"
#include "mlpref/error.hpp"
#include "mlpref/random.hpp"

using namespace mlpref;

namespace {

// Each text is its own single sentence holding one chunk equal to the text.
class WholeTextChunker final : public Chunker {
 public:
  ChunkAnnotation annotate(std::string_view text) const override {
    if (text.empty()) return {};
    return {{{std::string(text), 0}}, {std::string(text)}};
  }
};

Embedding unit_at(double cos_to_x) { return {{cos_to_x, std::sqrt(1.0 - cos_to_x * cos_to_x)}}; }

std::vector<Embedding> random_vectors(SplitMix64& rng, std::size_t n, std::size_t dim) {
  std::vector<Embedding> out(n);
  for (auto& e : out) {
    e.values.resize(dim);
    for (auto& v : e.values) v = 2.0 * rng.uniform() - 1.0;
  }
  return out;
}

}  // namespace

TEST_SUITE("autocheck") {

TEST_CASE("identical sets score 1") {
  SplitMix64 rng(1);
  const auto v = random_vectors(rng, 5, 7);
  const auto r = similarity_scores(v, v);
  for (double s : r.scores) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("row max picks the best generated unit") {
  const std::vector<Embedding> standard{{{1.0, 0.0}}};
  const std::vector<Embedding> generated{unit_at(0.3), unit_at(0.9)};
  const auto r = similarity_scores(standard, generated);
  REQUIRE(r.scores.size() == 1);
  CHECK(r.scores[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(r.at(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("orthogonal vectors score 0") {
  const std::vector<Embedding> a{{{1, 0, 0}}, {{0, 1, 0}}};
  const std::vector<Embedding> b{{{0, 0, 1}}};
  for (double s : similarity_scores(a, b).scores) CHECK(s == 0.0);
}

TEST_CASE("similarity input errors") {
  const std::vector<Embedding> a{{{1, 0}}};
  const std::vector<Embedding> b{{{1, 0, 0}}};
  const std::vector<Embedding> z{{{0, 0}}};
  CHECK_THROWS_AS(similarity_scores(a, b), DataError);
  CHECK_THROWS_AS(similarity_scores(a, z), DataError);
  CHECK_THROWS_AS(similarity_scores(a, {}), DataError);
}

TEST_CASE("accuracy values") {
  CHECK(kDefaultThreshold == 0.85);
  CHECK(accuracy(std::vector<double>{0.9, 0.8, 0.9}, 0.85) == 2.0 / 3.0);
  CHECK(accuracy(std::vector<double>{0.86, 0.99}) == 1.0);
  CHECK(accuracy(std::vector<double>{0.85}) == 0.0);
  CHECK(accuracy(std::vector<double>{}) == 1.0);
  CHECK_THROWS_AS(accuracy(std::vector<double>{0.5}, 1.0), UsageError);
  CHECK_THROWS_AS(accuracy(std::vector<double>{0.5}, 0.0), UsageError);
}

TEST_CASE("row maxima ignore the order of generated units") {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_vectors(rng, 1 + rng.below(6), 5);
    auto g = random_vectors(rng, 1 + rng.below(6), 5);
    const auto before = similarity_scores(s, g).scores;
    rng.shuffle(g);
    CHECK(similarity_scores(s, g).scores == before);
  }
}

TEST_CASE("adding a generated unit never lowers a score") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_vectors(rng, 1 + rng.below(6), 4);
    auto g = random_vectors(rng, 1 + rng.below(6), 4);
    const auto before = similarity_scores(s, g).scores;
    g.push_back(random_vectors(rng, 1, 4)[0]);
    const auto after = similarity_scores(s, g).scores;
    for (std::size_t m = 0; m < s.size(); ++m) CHECK(after[m] >= before[m]);
    CHECK(accuracy(after, 0.5) >= accuracy(before, 0.5));
  }
}

TEST_CASE("accuracy does not increase with the threshold") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> s(1 + rng.below(10));
    for (auto& v : s) v = 2.0 * rng.uniform() - 1.0;
    const double t1 = 0.01 + 0.98 * rng.uniform(), t2 = 0.01 + 0.98 * rng.uniform();
    CHECK(accuracy(s, std::min(t1, t2)) >= accuracy(s, std::max(t1, t2)));
  }
}

TEST_CASE("equal accuracy falls back to the score") {
  WholeTextChunker chunker;
  PrecomputedEmbeddings table(2, {{"std", Embedding{{1.0, 0.0}}}, {"low", unit_at(0.7)}, {"high", unit_at(0.9)}});
  const std::vector<std::string> candidates{"low", "high"};
  const auto rep = rank_responses("std", candidates, chunker, table, {.threshold = 0.95});
  CHECK(rep.candidates[0].acc_final == rep.candidates[1].acc_final);
  CHECK(rep.candidates[1].score_final == doctest::Approx(0.9));
  CHECK(rep.order == std::vector<std::size_t>{1, 0});
}

TEST_CASE("full ties keep the provisional order") {
  WholeTextChunker chunker;
  PrecomputedEmbeddings table(2, {{"std", Embedding{{1.0, 0.0}}}, {"a", unit_at(0.5)}, {"b", unit_at(0.5)}});
  const std::vector<std::string> candidates{"b", "a"};
  const auto rep = rank_responses("std", candidates, chunker, table);
  CHECK(rep.order == std::vector<std::size_t>{0, 1});
}

TEST_CASE("a copy of the standard ranks first") {
  HeuristicChunker chunker;
  HashEmbedder embedder(128, 5);
  const std::string standard = "A brown horse stands in a green field. A small boy holds a red kite.";
  const std::vector<std::string> candidates{"A grey cat sleeps on a soft sofa.", standard,
                                            "A brown horse stands in a dry desert."};
  const auto rep = rank_responses(standard, candidates, chunker, embedder);
  CHECK(rep.order.front() == 1);
  CHECK(rep.candidates[1].acc_final == 1.0);
  CHECK(rep.candidates[1].final_rank == 0);
}

TEST_CASE("final metrics average the granularities") {
  HeuristicChunker chunker;
  HashEmbedder embedder(64, 6);
  const std::string standard = "A red car sits near a blue tree. Two dogs play on the grass.";
  const std::vector<std::string> candidates{"A red car sits near a green tree.", "Two cats play on the sand.",
                                            "Nothing."};
  const auto rep = rank_responses(standard, candidates, chunker, embedder);
  std::vector<bool> seen(candidates.size(), false);
  for (const auto& m : rep.candidates) {
    CHECK(m.acc_final == (m.acc_local + m.acc_global) / 2.0);
    CHECK(m.score_final == (m.score_local + m.score_global) / 2.0);
    CHECK(m.acc_final >= 0.0);
    CHECK(m.acc_final <= 1.0);
    CHECK(m.acc_final >= std::min(m.acc_local, m.acc_global));
    CHECK(m.acc_final <= std::max(m.acc_local, m.acc_global));
    seen.at(m.final_rank) = true;
  }
  for (bool b : seen) CHECK(b);
  // "Nothing." has no chunks at all.
  CHECK(rep.candidates[2].acc_final == 0.0);
  CHECK(rep.candidates[2].score_final == 0.0);
}

TEST_CASE("standard without chunks keeps provisional order with a warning") {
  HeuristicChunker chunker;
  HashEmbedder embedder(32);
  const std::vector<std::string> candidates{"A dog.", "A cat."};
  const auto rep = rank_responses("It is there.", candidates, chunker, embedder);
  CHECK(rep.warnings.size() == 1);
  CHECK(rep.order == std::vector<std::size_t>{0, 1});
  for (const auto& m : rep.candidates) CHECK(m.acc_final == 1.0);
}

TEST_CASE("ranking needs two candidates") {
  HeuristicChunker chunker;
  HashEmbedder embedder(32);
  CHECK_THROWS_AS(rank_responses("A dog.", std::vector<std::string>{"A dog."}, chunker, embedder), UsageError);
}

TEST_CASE("ranking is deterministic") {
  HeuristicChunker chunker;
  HashEmbedder embedder(64, 8);
  const std::string standard = "A red car sits near a blue tree.";
  const std::vector<std::string> candidates{"A red car sits near a green tree.", "A blue car is parked."};
  const auto a = rank_responses(standard, candidates, chunker, embedder);
  const auto b = rank_responses(standard, candidates, chunker, embedder);
  CHECK(a.order == b.order);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a.candidates[i].score_final == b.candidates[i].score_final);
}

TEST_CASE("refined sample keeps the standard on top") {
  HeuristicChunker chunker;
  HashEmbedder embedder(128, 2);
  const std::string standard = "A brown horse stands in a green field.";
  PreferenceSample s{"x", "img", "p",
                     {{"A grey cat sleeps on a sofa.", "34B", 1},
                      {standard, kStandardTag, 0},
                      {"A brown horse stands in a green field.", "7B", 2}}};
  const auto refined = refine_sample(s, chunker, embedder);
  CHECK(refined.sample.responses[1].rank == 0);
  CHECK(refined.sample.responses[2].rank == 1);
  CHECK(refined.sample.responses[0].rank == 2);
  CHECK(validate_sample(refined.sample).empty());
  const auto j = report_to_json("x", refined);
  CHECK(j["ranks"] == Json::array({2, 0, 1}));
}

}
