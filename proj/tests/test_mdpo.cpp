#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mlpref/error.hpp"
#include "mlpref/mdpo.hpp"
#include "mlpref/random.hpp"
#include "scratch.hpp"

using namespace mlpref;

namespace {

const double kLn2 = std::log(2.0);

LogProbRecord rec(std::vector<double> p, std::vector<double> q) { return {"s", 0, std::move(p), std::move(q)}; }

std::vector<double> random_r(SplitMix64& rng, std::size_t k, double span = 3.0) {
  std::vector<double> r(k);
  for (auto& v : r) v = span * (2.0 * rng.uniform() - 1.0);
  return r;
}

}  // namespace

TEST_SUITE("mdpo") {

TEST_CASE("sequence log-ratio") {
  CHECK(sequence_log_ratio(rec({-0.3, -2.0}, {-0.3, -2.0})) == 0.0);
  CHECK(sequence_log_ratio(rec({-1.0, -1.0}, {-1.5, -1.5})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sequence_log_ratio(rec({-0.1}, {-0.1})) == 0.0);
  CHECK_THROWS_AS(sequence_log_ratio(rec({}, {})), DataError);
  CHECK_THROWS_AS(sequence_log_ratio(rec({-1.0}, {-1.0, -2.0})), DataError);
  CHECK_THROWS_AS(sequence_log_ratio(rec({0.5}, {-1.0})), DataError);
  CHECK_THROWS_AS(sequence_log_ratio(rec({-INFINITY}, {-1.0})), DataError);
}

TEST_CASE("dpo pair values") {
  CHECK(std::fabs(dpo_pair_loss(0.3, 0.3, 0.1).loss - kLn2) <= 1e-12);
  CHECK(std::fabs(dpo_pair_loss(1.0, 0.0, 1.0).loss - 0.313262) <= 1e-6);
  const auto g = dpo_pair_loss(2.0, 2.0, 0.1);
  CHECK(g.grad_winner == doctest::Approx(-0.05).epsilon(1e-15));
  CHECK(g.grad_loser == doctest::Approx(0.05).epsilon(1e-15));
  CHECK_THROWS_AS(dpo_pair_loss(0, 0, 0.0), UsageError);
}

TEST_CASE("dpo-p pair values") {
  for (double rl : {-2.0, 0.0, 3.5}) {
    const auto a = dpo_p_pair_loss(0.0, rl, 0.3), b = dpo_pair_loss(0.0, rl, 0.3);
    CHECK(a.loss == b.loss);
    CHECK(a.grad_loser == b.grad_loser);
  }
  CHECK(std::fabs(dpo_p_pair_loss(0.5, 0.5, 0.1).loss - 0.193147) <= 1e-6);
  CHECK(dpo_p_pair_loss(1.0, 1.0, 0.1).grad_winner == doctest::Approx(-1.05).epsilon(1e-15));
  CHECK(dpo_p_pair_loss(1.0, 1.0, 0.1, 2.0).grad_winner == doctest::Approx(-2.05).epsilon(1e-15));
}

TEST_CASE("comparison pairs") {
  CHECK(comparison_pairs(2, PairSet::all_pairs) == std::vector<Pair>{{0, 1}});
  CHECK(comparison_pairs(4, PairSet::all_pairs) ==
        std::vector<Pair>{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  CHECK(comparison_pairs(5, PairSet::all_pairs).size() == 10);
  for (std::size_t k = 2; k <= 8; ++k) CHECK(comparison_pairs(k, PairSet::all_pairs).size() == k * (k - 1) / 2);
  CHECK(comparison_pairs(4, PairSet::adjacent_only) == std::vector<Pair>{{0, 1}, {1, 2}, {2, 3}});
  const std::vector<Pair> custom{{2, 3}, {0, 2}};
  CHECK(comparison_pairs(4, PairSet::custom, custom) == custom);
  const std::vector<Pair> bad{{2, 1}};
  CHECK_THROWS_AS(comparison_pairs(4, PairSet::custom, bad), UsageError);
  const std::vector<Pair> out_of_range{{0, 4}};
  CHECK_THROWS_AS(comparison_pairs(4, PairSet::custom, out_of_range), UsageError);
  CHECK_THROWS_AS(comparison_pairs(1, PairSet::all_pairs), UsageError);
}

TEST_CASE("K=2 best_only reduces to dpo-p exactly") {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = random_r(rng, 2);
    LossConfig c{.beta = 0.05 + rng.uniform(), .levels = 2};
    const auto rep = mdpo_loss(r, c);
    const auto p = dpo_p_pair_loss(r[0], r[1], c.beta);
    CHECK(rep.total == p.loss);
    CHECK(rep.grad[0] == p.grad_winner);
    CHECK(rep.grad[1] == p.grad_loser);
  }
}

TEST_CASE("K=3 at zero") {
  LossConfig c{.levels = 3};
  CHECK(mdpo_loss(std::vector<double>{0, 0, 0}, c).total == doctest::Approx(3 * kLn2).epsilon(1e-15));
}

TEST_CASE("K=4 without penalty matches the pairwise sum") {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_r(rng, 4, 10.0);
    LossConfig c{.beta = 0.5, .levels = 4, .penalty = Penalty::none};
    const auto rep = mdpo_loss(r, c);
    double brute = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j) brute += std::log1p(std::exp(-0.5 * (r[i] - r[j])));
    CHECK(rep.total == doctest::Approx(brute).epsilon(1e-12));
    double pairs = 0.0;
    for (const auto& p : rep.pairs) pairs += p.loss;
    CHECK(rep.total == doctest::Approx(pairs).epsilon(1e-14));
    CHECK(std::accumulate(rep.grad.begin(), rep.grad.end(), 0.0) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("penalty flags follow the mode") {
  const std::vector<double> r{0.1, 0.2, 0.3, 0.4};
  auto flags = [&](Penalty p) {
    std::vector<bool> out;
    for (const auto& pr : mdpo_loss(r, {.levels = 4, .penalty = p}).pairs) out.push_back(pr.penalized);
    return out;
  };
  CHECK(flags(Penalty::best_only) == std::vector<bool>{true, true, true, false, false, false});
  CHECK(flags(Penalty::none) == std::vector<bool>(6, false));
  CHECK(flags(Penalty::all_winners) == std::vector<bool>(6, true));
}

TEST_CASE("shifting every log-ratio") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(7);
    const auto r = random_r(rng, k);
    const double c = 4.0 * rng.uniform() - 2.0;
    auto shifted = r;
    for (auto& v : shifted) v += c;
    LossConfig none{.beta = 0.2, .levels = k, .penalty = Penalty::none};
    LossConfig best{.beta = 0.2, .levels = k, .penalty = Penalty::best_only};
    CHECK(mdpo_loss(shifted, none).total == doctest::Approx(mdpo_loss(r, none).total).epsilon(1e-12));
    const double delta = mdpo_loss(shifted, best).total - mdpo_loss(r, best).total;
    CHECK(delta == doctest::Approx(-static_cast<double>(k - 1) * c).epsilon(1e-9));
  }
}

TEST_CASE("swapping winner and loser") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = 6 * rng.uniform() - 3, b = 6 * rng.uniform() - 3, beta = 0.05 + rng.uniform();
    const auto x = dpo_pair_loss(a, b, beta), y = dpo_pair_loss(b, a, beta);
    const double z = beta * (a - b);
    const double expected = -std::log(1.0 / (1.0 + std::exp(-z)) * (1.0 / (1.0 + std::exp(z))));
    CHECK(x.loss + y.loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(x.grad_winner + x.grad_loser == 0.0);
    CHECK(y.grad_winner + y.grad_loser == 0.0);
    // d/da of the summed pair losses is beta * (2 sigma(z) - 1).
    CHECK(x.grad_winner + y.grad_loser == doctest::Approx(beta * (2.0 / (1.0 + std::exp(-z)) - 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("loss falls as the margin grows") {
  double prev = INFINITY;
  for (double d = -50.0; d <= 50.0; d += 0.5) {
    const double l = dpo_pair_loss(d, 0.0, 1.0).loss;
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("finite across the whole margin range") {
  for (double z = -700.0; z <= 700.0; z += 7.0) {
    const auto p = dpo_pair_loss(z, 0.0, 1.0);
    CHECK(std::isfinite(p.loss));
    CHECK(std::isfinite(p.grad_winner));
    CHECK(p.loss >= 0.0);
  }
  CHECK(dpo_pair_loss(-700.0, 0.0, 1.0).loss == doctest::Approx(700.0));
  CHECK(dpo_pair_loss(700.0, 0.0, 1.0).loss > 0.0);
}

TEST_CASE("batch totals do not depend on order or threads") {
  SplitMix64 rng(5);
  std::vector<SampleLogRatios> batch;
  for (int i = 0; i < 257; ++i) batch.push_back({"s" + std::to_string(i), random_r(rng, 5)});
  LossConfig c{.levels = 5};
  const double base = mdpo_batch_loss(batch, c, 1).total;
  CHECK(mdpo_batch_loss(batch, c, 4).total == base);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(batch);
    CHECK(std::fabs(mdpo_batch_loss(batch, c, 1 + rng.below(4)).total - base) <= 1e-9);
  }
}

TEST_CASE("grouping log-prob records") {
  std::vector<LogProbRecord> recs{{"a", 1, {-1.0}, {-1.0}}, {"a", 0, {-1.0}, {-2.0}}, {"b", 0, {-1.0}, {-1.0}},
                                  {"b", 1, {-3.0}, {-1.0}}};
  const auto g = group_log_ratios(recs, 2);
  REQUIRE(g.size() == 2);
  CHECK(g[0].sample_id == "a");
  CHECK(g[0].log_ratios == std::vector<double>{1.0, 0.0});
  CHECK(g[1].log_ratios == std::vector<double>{0.0, -2.0});

  recs.pop_back();
  CHECK_THROWS_AS(group_log_ratios(recs, 2), DataError);
  recs.push_back({"b", 0, {-1.0}, {-1.0}});
  CHECK_THROWS_AS(group_log_ratios(recs, 2), DataError);
}

TEST_CASE("log-prob file errors carry the line") {
  Scratch s("logprobs");
  const auto p = s.write("lp.jsonl",
                         R"({"sample_id":"a","response_rank":0,"policy_token_logprobs":[-1],"ref_token_logprobs":[-1]})"
                         "\n"
                         R"({"sample_id":"a","response_rank":1,"policy_token_logprobs":[0.2],"ref_token_logprobs":[-1]})"
                         "\n");
  try {
    load_logprobs(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("pair list parsing") {
  CHECK(parse_pairs("0-1,1-2") == std::vector<Pair>{{0, 1}, {1, 2}});
  CHECK_THROWS_AS(parse_pairs("0:1"), UsageError);
  CHECK_THROWS_AS(parse_pairs("a-b"), UsageError);
  CHECK(parse_penalty("none") == Penalty::none);
  CHECK_THROWS_AS(parse_penalty("some"), UsageError);
}

}
