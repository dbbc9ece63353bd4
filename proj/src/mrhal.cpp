#include "mlpref/mrhal.hpp"

#include <algorithm>
#include <cmath>

#include "mlpref/error.hpp"

namespace mlpref {

namespace {

void check(std::span<const DialogueMetrics> dialogues) {
  if (dialogues.empty()) throw DataError("no dialogues");
  for (const auto& d : dialogues) {
    if (d.values.empty()) throw DataError("dialogue '" + d.dialogue_id + "' has no rounds");
    for (double v : d.values) {
      if (!std::isfinite(v)) throw DataError("dialogue '" + d.dialogue_id + "' has a non-finite value");
    }
  }
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

double cumulative_metric(std::span<const DialogueMetrics> dialogues) {
  check(dialogues);
  double total = 0.0;
  std::size_t rounds = 0;
  for (const auto& d : dialogues) {
    total += sum(d.values);
    rounds += d.values.size();
  }
  return total / static_cast<double>(rounds);
}

double mean_metric(std::span<const DialogueMetrics> dialogues) {
  check(dialogues);
  double total = 0.0;
  for (const auto& d : dialogues) total += sum(d.values) / static_cast<double>(d.values.size());
  return total / static_cast<double>(dialogues.size());
}

const std::vector<std::string>& bench_categories() {
  static const std::vector<std::string> c{"attribute", "description", "existence",
                                          "counting",  "reasoning",   "spatial relation"};
  return c;
}

std::vector<BenchDialogue> load_bench(const std::filesystem::path& path) {
  std::vector<BenchDialogue> out;
  for_each_jsonl(path, [&](const Json& rec, std::size_t line) {
    const auto where = path.string() + ": line " + std::to_string(line);
    BenchDialogue d;
    d.dialogue_id = require_field<std::string>(rec, "dialogue_id", line);
    d.category = require_field<std::string>(rec, "category", line);
    std::string normalized = d.category;
    std::replace(normalized.begin(), normalized.end(), '_', ' ');
    const auto& cats = bench_categories();
    if (std::find(cats.begin(), cats.end(), normalized) == cats.end()) {
      throw DataError(where + ": unknown category '" + d.category + "'");
    }
    d.category = normalized;
    const auto rounds = rec.find("rounds");
    if (rounds == rec.end() || !rounds->is_array() || rounds->empty()) {
      throw DataError(where + ": 'rounds' must be a non-empty array");
    }
    for (const auto& r : *rounds) {
      if (!r.is_object()) throw DataError(where + ": round entries must be objects");
      const auto score = require_field<double>(r, "score", line);
      if (!(score >= 0.0 && score <= 10.0)) {
        throw DataError(where + ": field 'score' must lie in [0, 10]");
      }
      const auto flag = require_field<double>(r, "hallucination_flag", line);
      if (flag != 0.0 && flag != 1.0) {
        throw DataError(where + ": field 'hallucination_flag' must be 0 or 1");
      }
      d.scores.push_back(score);
      d.flags.push_back(flag);
    }
    out.push_back(std::move(d));
  });
  return out;
}

std::vector<DialogueMetrics> score_metrics(std::span<const BenchDialogue> bench) {
  std::vector<DialogueMetrics> out;
  for (const auto& d : bench) out.push_back({d.dialogue_id, d.scores});
  return out;
}

std::vector<DialogueMetrics> flag_metrics(std::span<const BenchDialogue> bench) {
  std::vector<DialogueMetrics> out;
  for (const auto& d : bench) out.push_back({d.dialogue_id, d.flags});
  return out;
}

BenchReport bench_report(std::span<const DialogueMetrics> dialogues) {
  BenchReport r;
  r.cumulative = cumulative_metric(dialogues);
  r.mean = mean_metric(dialogues);
  r.dialogue_count = dialogues.size();
  for (const auto& d : dialogues) r.round_count += d.values.size();
  return r;
}

Json bench_to_json(const BenchReport& scores, const BenchReport& hallucination) {
  return Json{{"dialogue_count", scores.dialogue_count},
              {"round_count", scores.round_count},
              {"mean_rounds", static_cast<double>(scores.round_count) / static_cast<double>(scores.dialogue_count)},
              {"score", Json{{"cumulative", scores.cumulative}, {"mean", scores.mean}}},
              {"hallucination", Json{{"cumulative", hallucination.cumulative}, {"mean", hallucination.mean}}}};
}

}  // namespace mlpref
