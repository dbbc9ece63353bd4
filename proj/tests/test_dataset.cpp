#include <doctest.h>

#include <algorithm>
#include <set>

#include "mlpref/dataset.hpp"
#include "mlpref/error.hpp"
#include "mlpref/random.hpp"
#include "scratch.hpp"

using namespace mlpref;

namespace {

Manifest make_manifest(std::size_t n) {
  Manifest m;
  for (std::size_t i = 0; i < n; ++i) m.items.push_back({"img" + std::to_string(i), "describe", "std"});
  return m;
}

PreferenceSample four_level() {
  return {"s1", "img1", "what is shown?",
          {{"best", "standard", 0}, {"good", "34B", 1}, {"ok", "13B", 2}, {"poor", "7B", 3}}};
}

bool has_message(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const auto& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("load_candidates on an empty file") {
  Scratch s("empty_candidates");
  CHECK(load_candidates(s.write("c.jsonl", "")).empty());
}

TEST_CASE("load_candidates reads one 4-response record in order") {
  Scratch s("one_candidate");
  const auto p = s.write("c.jsonl",
                         R"({"sample_id":"a","image_ref":"i","prompt":"p","responses":[)"
                         R"({"text":"w","tag":"standard"},{"text":"x","tag":"34B"},)"
                         R"({"text":"y","tag":"13B"},{"text":"z","tag":"7B"}]})"
                         "\n");
  const auto samples = load_candidates(p);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].levels() == 4);
  for (int k = 0; k < 4; ++k) CHECK(samples[0].responses[k].rank == k);
  CHECK(samples[0].responses[2].tag == "13B");
}

TEST_CASE("load_candidates rejects a duplicate sample id by name") {
  Scratch s("dup_candidates");
  const std::string rec = R"({"sample_id":"dup-7","image_ref":"i","prompt":"p","responses":[{"text":"a","tag":"standard"},{"text":"b","tag":"7B"}]})";
  const auto p = s.write("c.jsonl", rec + "\n" + rec + "\n");
  try {
    load_candidates(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("dup-7") != std::string::npos);
  }
}

TEST_CASE("load_candidates reports the line of a malformed record") {
  Scratch s("bad_candidates");
  const auto p = s.write("c.jsonl", "{\"sample_id\":\"a\"}\n");
  try {
    load_candidates(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  CHECK_THROWS_AS(load_candidates(s.path("missing.jsonl")), DataError);
}

TEST_CASE("serialize then load reproduces the samples") {
  Scratch s("roundtrip");
  std::vector<PreferenceSample> samples{four_level(), four_level()};
  samples[1].sample_id = "s2";
  samples[1].prompt = "line\nbreak \"quoted\" ünïcode";
  std::swap(samples[1].responses[1].rank, samples[1].responses[2].rank);
  const auto p = s.write("c.jsonl", serialize_candidates(samples));
  CHECK(load_candidates(p) == samples);
}

TEST_CASE("MEG orders by the size pool") {
  const std::vector<SizedCandidate> all{{"t2", "2B"}, {"t7", "7B"}, {"t13", "13B"}, {"t34", "34B"}};
  const auto s = assemble_meg_sample("gt", all);
  REQUIRE(s.levels() == 5);
  const std::vector<std::string> expected{"standard", "34B", "13B", "7B", "2B"};
  for (std::size_t k = 0; k < 5; ++k) {
    const auto it = std::find_if(s.responses.begin(), s.responses.end(),
                                 [&](const Response& r) { return r.rank == static_cast<int>(k); });
    REQUIRE(it != s.responses.end());
    CHECK(it->tag == expected[k]);
  }
  CHECK(validate_sample(s).empty());
}

TEST_CASE("MEG with out-of-order labels") {
  const std::vector<SizedCandidate> c{{"t7", "7B"}, {"t34", "34B"}};
  const auto s = assemble_meg_sample("gt", c);
  auto rank_of = [&](const std::string& tag) {
    for (const auto& r : s.responses)
      if (r.tag == tag) return r.rank;
    return -1;
  };
  CHECK(rank_of("standard") == 0);
  CHECK(rank_of("34B") == 1);
  CHECK(rank_of("7B") == 2);
}

TEST_CASE("MEG with a single candidate") {
  const std::vector<SizedCandidate> c{{"t", "13B"}};
  const auto s = assemble_meg_sample("gt", c);
  CHECK(s.levels() == 2);
  CHECK(s.responses[0].tag == "standard");
  CHECK(s.responses[0].rank == 0);
}

TEST_CASE("MEG rejects unknown and duplicate labels") {
  const std::vector<SizedCandidate> unknown{{"t", "70B"}};
  const std::vector<SizedCandidate> dup{{"a", "7B"}, {"b", "7B"}};
  CHECK_THROWS_AS(assemble_meg_sample("gt", unknown), UsageError);
  CHECK_THROWS_AS(assemble_meg_sample("gt", dup), UsageError);
}

TEST_CASE("MEG output always validates") {
  SplitMix64 rng(3);
  const auto pool = SizePool::default_pool();
  for (int trial = 0; trial < 200; ++trial) {
    auto labels = pool.labels;
    rng.shuffle(labels);
    labels.resize(1 + rng.below(labels.size()));
    std::vector<SizedCandidate> c;
    for (const auto& l : labels) c.push_back({"text " + l, l});
    CHECK(validate_sample(assemble_meg_sample("gt", c)).empty());
  }
}

TEST_CASE("validate_sample verdicts") {
  CHECK(validate_sample(four_level()).empty());

  PreferenceSample dup_ranks{"s", "i", "p", {{"a", "standard", 0}, {"b", "7B", 0}, {"c", "2B", 1}}};
  CHECK(has_message(validate_sample(dup_ranks), "ranks not a permutation"));

  PreferenceSample nine{"s", "i", "p", {}};
  for (int k = 0; k < 9; ++k) nine.responses.push_back({"t", k == 0 ? "standard" : "m", k});
  CHECK(has_message(validate_sample(nine), "level count out of range"));

  PreferenceSample one{"s", "i", "p", {{"a", "standard", 0}}};
  CHECK(has_message(validate_sample(one), "level count out of range"));

  PreferenceSample two_std{"s", "i", "p", {{"a", "standard", 0}, {"b", "standard", 1}}};
  CHECK_FALSE(validate_sample(two_std).empty());
}

TEST_CASE("IG plan for 100 items and K=4") {
  const auto plan = plan_incremental_generation(make_manifest(100), 4, 0);
  CHECK(plan.part_sizes == std::vector<std::size_t>{50, 50});
  REQUIRE(plan.subsets.size() == 2);
  CHECK(plan.subsets[0].size() == 50);
  CHECK(plan.subsets[1].size() == 100);
  REQUIRE(plan.slots.size() == 4);
  CHECK(plan.slots[0].source == SlotSource::standard);
  CHECK(plan.slots[1].source == SlotSource::subset_model);
  CHECK(plan.slots[2].source == SlotSource::subset_model);
  CHECK(plan.slots[3].source == SlotSource::pretrained);
  CHECK(plan.slots[1].provisional_rank == 2);
  CHECK(plan.slots[2].provisional_rank == 1);
}

TEST_CASE("IG plan for K=3 is one subset covering everything") {
  const auto plan = plan_incremental_generation(make_manifest(17), 3, 5);
  REQUIRE(plan.subsets.size() == 1);
  std::vector<std::size_t> all = plan.subsets[0];
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 17; ++i) CHECK(all[i] == i);
}

TEST_CASE("IG plan errors") {
  CHECK_THROWS_AS(plan_incremental_generation(make_manifest(10), 2, 0), UsageError);
  CHECK_THROWS_AS(plan_incremental_generation(make_manifest(10), 9, 0), UsageError);
  CHECK_THROWS_AS(plan_incremental_generation(make_manifest(2), 5, 0), DataError);
  CHECK_NOTHROW(plan_incremental_generation(make_manifest(3), 5, 0));
}

TEST_CASE("IG plans are deterministic and balanced") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 3 + rng.below(6);
    const std::size_t n = (k - 2) + rng.below(500);
    const auto seed = rng.next();
    const auto m = make_manifest(n);
    const auto a = plan_incremental_generation(m, k, seed);
    const auto b = plan_incremental_generation(m, k, seed);
    CHECK(plan_to_json(a).dump() == plan_to_json(b).dump());

    const auto [lo, hi] = std::minmax_element(a.part_sizes.begin(), a.part_sizes.end());
    CHECK(*hi - *lo <= 1);
    for (std::size_t i = 0; i < a.subsets.size(); ++i) {
      const double exact = static_cast<double>((i + 1) * n) / static_cast<double>(k - 2);
      const auto size = static_cast<double>(a.subsets[i].size());
      CHECK((size == std::floor(exact) || size == std::ceil(exact)));
      if (i > 0) {
        CHECK(a.subsets[i].size() > a.subsets[i - 1].size());
        CHECK(std::equal(a.subsets[i - 1].begin(), a.subsets[i - 1].end(), a.subsets[i].begin()));
      }
    }
    CHECK(a.subsets.back().size() == n);
  }
}

TEST_CASE("IG sample assembly follows the slots") {
  const auto m = make_manifest(10);
  const auto plan = plan_incremental_generation(m, 4, 1);
  const std::vector<std::string> outs{"from S1", "from S2"};
  const auto s = assemble_ig_sample(plan, "x", {"img", "p", "gt"}, outs, "pretrained");
  REQUIRE(s.levels() == 4);
  CHECK(s.responses[0].text == "gt");
  CHECK(s.responses[0].rank == 0);
  CHECK(s.responses[3].text == "pretrained");
  CHECK(s.responses[3].rank == 3);
  CHECK(validate_sample(s).empty());
}

TEST_CASE("manifest checks") {
  Manifest dup = make_manifest(3);
  dup.items[2] = dup.items[0];
  CHECK_THROWS_AS(check_manifest(dup), DataError);
  CHECK_THROWS_AS(check_manifest(Manifest{}), DataError);
  CHECK_NOTHROW(check_manifest(make_manifest(3)));
}

}
