#pragma once

// Pairwise preference losses over policy/reference log-ratios and their
// closed-form gradients.
//
// Notation: r = log pi_theta(y|x) - log pi_ref(y|x), summed over tokens.
// For a winner w and loser l with margin z = beta * (r_w - r_l):
//   dpo      = -log sigmoid(z)
//   dpo-p    = -log sigmoid(z) - weight * r_w
// The multi-level total sums one term per compared pair (i, j), i better
// than j; with Penalty::best_only only pairs won by response 0 carry the
// penalty.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlpref/jsonl.hpp"

namespace mlpref {

// Not a published value: common DPO practice.
inline constexpr double kDefaultBeta = 0.1;

double softplus(double x);
double sigmoid(double x);

struct PairTerm {
  double loss = 0.0;
  double grad_winner = 0.0;  // dL/dr_w
  double grad_loser = 0.0;   // dL/dr_l
};

PairTerm dpo_pair_loss(double r_w, double r_l, double beta);
PairTerm dpo_p_pair_loss(double r_w, double r_l, double beta, double penalty_weight = 1.0);

struct LogProbRecord {
  std::string sample_id;
  std::size_t response_rank = 0;
  std::vector<double> policy_token_logprobs;
  std::vector<double> ref_token_logprobs;
};

// Token-summed policy minus reference log-probability. Throws DataError on
// empty or mismatched vectors, positive or non-finite entries.
double sequence_log_ratio(const LogProbRecord& record);

enum class PairSet { all_pairs, adjacent_only, custom };
enum class Penalty { best_only, none, all_winners };

using Pair = std::pair<std::size_t, std::size_t>;

struct LossConfig {
  double beta = kDefaultBeta;
  std::size_t levels = 2;
  PairSet pair_set = PairSet::all_pairs;
  std::vector<Pair> custom_pairs;
  Penalty penalty = Penalty::best_only;
  double penalty_weight = 1.0;
};

// Throws UsageError when beta <= 0, K < 2 or a custom pair is out of order
// or out of range.
void validate(const LossConfig& config);

// all_pairs: lexicographic (i, j), i < j. adjacent_only: (i, i + 1).
std::vector<Pair> comparison_pairs(std::size_t levels, PairSet set,
                                   std::span<const Pair> custom = {});

struct PairReport {
  std::size_t winner = 0;
  std::size_t loser = 0;
  double loss = 0.0;
  bool penalized = false;
};

struct LossReport {
  double total = 0.0;
  std::vector<PairReport> pairs;
  std::vector<double> grad;  // dL/dr_i
};

// `log_ratios` is ordered best first and must have config.levels entries.
LossReport mdpo_loss(std::span<const double> log_ratios, const LossConfig& config);

// ---- batches ----------------------------------------------------------------

struct SampleLogRatios {
  std::string sample_id;
  std::vector<double> log_ratios;  // index = rank
};

// Groups records by sample_id (first-seen order) and checks that every rank
// 0..K-1 appears exactly once per sample.
std::vector<SampleLogRatios> group_log_ratios(std::span<const LogProbRecord> records,
                                              std::size_t levels);

std::vector<LogProbRecord> load_logprobs(const std::filesystem::path& path);

struct BatchReport {
  double total = 0.0;
  std::vector<LossReport> samples;
};

// Per-sample reports are computed on up to `jobs` threads; the total is
// reduced in sample order.
BatchReport mdpo_batch_loss(std::span<const SampleLogRatios> samples, const LossConfig& config,
                            std::size_t jobs = 1);

Json loss_report_to_json(const std::string& sample_id, const LossReport& report);

const char* to_string(PairSet set);
const char* to_string(Penalty penalty);
PairSet parse_pair_set(const std::string& name);
Penalty parse_penalty(const std::string& name);
// "0-1,1-2" -> {(0,1), (1,2)}
std::vector<Pair> parse_pairs(const std::string& spec);

}  // namespace mlpref
