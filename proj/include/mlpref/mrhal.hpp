#pragma once

// Multi-round dialogue benchmark metrics.
//   cumulative = sum of all round values / total round count
//   mean       = average over dialogues of each dialogue's round average
// The same formulas serve judge scores and 0/1 hallucination flags.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlpref/jsonl.hpp"

namespace mlpref {

struct DialogueMetrics {
  std::string dialogue_id;
  std::vector<double> values;  // one entry per round
};

// Throws DataError on an empty list or a dialogue without rounds.
double cumulative_metric(std::span<const DialogueMetrics> dialogues);
double mean_metric(std::span<const DialogueMetrics> dialogues);

struct BenchDialogue {
  std::string dialogue_id;
  std::string category;
  std::vector<double> scores;  // judge score per round, in [0, 10]
  std::vector<double> flags;   // hallucination flag per round, 0 or 1
};

const std::vector<std::string>& bench_categories();

// Line-delimited {dialogue_id, category, rounds: [{score, hallucination_flag}]}.
std::vector<BenchDialogue> load_bench(const std::filesystem::path& path);

std::vector<DialogueMetrics> score_metrics(std::span<const BenchDialogue> bench);
std::vector<DialogueMetrics> flag_metrics(std::span<const BenchDialogue> bench);

struct BenchReport {
  double cumulative = 0.0;
  double mean = 0.0;
  std::size_t dialogue_count = 0;
  std::size_t round_count = 0;
};

BenchReport bench_report(std::span<const DialogueMetrics> dialogues);

Json bench_to_json(const BenchReport& scores, const BenchReport& hallucination);

}  // namespace mlpref
