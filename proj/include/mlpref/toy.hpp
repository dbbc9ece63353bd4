#pragma once

// Desk-scale testbed for multi-level preference learning: a prompt-conditioned
// unigram language model (one logit row per prompt) trained by plain gradient
// descent on the MDPO objective, with a frozen reference copy.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mlpref/jsonl.hpp"
#include "mlpref/mdpo.hpp"

namespace mlpref {

class ToyModel {
 public:
  // Uniform model: every logit zero. Reference equals policy.
  ToyModel(std::size_t vocab_size, std::size_t prompt_count);
  // Explicit initial table (row-major prompt x vocab), copied into the reference.
  ToyModel(std::size_t vocab_size, std::size_t prompt_count, std::vector<double> logits);

  // Logits drawn uniformly from [-scale, scale].
  static ToyModel random(std::size_t vocab_size, std::size_t prompt_count, double scale,
                         std::uint64_t seed);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t prompt_count() const { return prompts_; }

  std::span<const double> policy_row(std::size_t prompt) const;
  std::span<const double> reference_row(std::size_t prompt) const;
  std::span<double> policy_row(std::size_t prompt);

  const std::vector<double>& policy() const { return policy_; }
  std::vector<double>& policy() { return policy_; }
  const std::vector<double>& reference() const { return *reference_; }

 private:
  std::size_t vocab_;
  std::size_t prompts_;
  std::vector<double> policy_;
  std::shared_ptr<const std::vector<double>> reference_;
};

using TokenSeq = std::vector<std::uint32_t>;

// Log-softmax of one row, computed with a max shift.
std::vector<double> log_softmax(std::span<const double> row);

// Per-token policy and reference log-probabilities of `tokens` under
// `prompt`. Throws UsageError on out-of-range ids or an empty sequence.
LogProbRecord toy_log_prob(const ToyModel& model, std::size_t prompt, const TokenSeq& tokens,
                           const std::string& sample_id = {}, std::size_t rank = 0);

struct ToySample {
  std::size_t prompt = 0;
  std::vector<TokenSeq> levels;  // best first
};

struct ToyRecipe {
  std::size_t vocab_size = 64;
  std::size_t prompt_count = 200;
  std::size_t samples_per_prompt = 4;
  std::size_t sequence_length = 64;
  std::size_t support_size = 8;  // distinct clean tokens per prompt
  std::vector<double> corruption_rates{0.0, 0.1, 0.3, 0.6};
  std::uint64_t seed = 0;

  std::size_t levels() const { return corruption_rates.size(); }
};

struct ToyDataset {
  ToyRecipe recipe;
  std::vector<TokenSeq> targets;           // clean target per prompt
  std::vector<std::vector<std::uint32_t>> supports;  // clean token set per prompt
  std::vector<ToySample> samples;
};

// Level 0 is the prompt's clean target; level k replaces each position
// independently with probability rates[k] by a token outside the prompt's
// clean support. Throws UsageError unless rates start at 0, increase
// strictly and stay below 1.
ToyDataset synthesize_dataset(const ToyRecipe& recipe);

// Rates used when only a level count is given; K = 4 gives 0/0.1/0.3/0.6.
std::vector<double> default_corruption_rates(std::size_t levels);

Json recipe_to_json(const ToyRecipe& recipe);

struct ObjectiveValue {
  double mean_loss = 0.0;
  double mean_r0 = 0.0;
  std::vector<double> grad;  // d mean_loss / d policy logit, row-major
};

// Mean MDPO loss over `samples` and its gradient with respect to every
// policy logit, chained through the softmax Jacobian.
ObjectiveValue toy_objective(const ToyModel& model, std::span<const ToySample> samples,
                             const LossConfig& loss, bool with_grad = true);

struct OrderingMetrics {
  double full_order_accuracy = 0.0;
  double pairwise_accuracy = 0.0;           // over all (i, j), i < j
  std::vector<std::vector<double>> pairwise;  // [i][j] for i < j
};

// Policy sequence log-probabilities per level. Full order means strictly
// decreasing with level; pairwise ties are settled by a seeded coin flip.
OrderingMetrics evaluate_ordering(const ToyModel& model, std::span<const ToySample> samples,
                                  std::uint64_t seed = 0);

struct TrainConfig {
  double learning_rate = 1.0;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  LossConfig loss;
  double eval_fraction = 0.25;
};

struct EpochStats {
  double mean_loss = 0.0;   // before the epoch's update
  double mean_r0 = 0.0;     // before the epoch's update
  double full_order_accuracy = 0.0;  // eval split, after the update
  double pairwise_accuracy = 0.0;    // eval split, after the update
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> eval_indices;
  OrderingMetrics initial_eval;
  OrderingMetrics final_eval;
  ToyModel model;
};

// Splits every prompt's samples by `config.seed` (each prompt keeps at
// least one training sample), then runs full-batch gradient descent
// on the mean MDPO loss of the training split. Throws DataError if the mean
// absolute logit exceeds 1e6.
TrainTrace train(ToyModel model, const ToyDataset& dataset, const TrainConfig& config);

Json trace_to_json(const TrainTrace& trace, const TrainConfig& config, const ToyRecipe& recipe,
                   const std::string& preset);

// ---- ablation presets -------------------------------------------------------

struct Preset {
  std::string name;
  std::string label;  // row label of the corresponding ablation table entry
  std::size_t levels = 4;
  PairSet pair_set = PairSet::all_pairs;
  std::vector<Pair> custom_pairs;
  Penalty penalty = Penalty::best_only;
  std::vector<std::string> model_pool;  // metadata only
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name_or_label);
LossConfig loss_config_for(const Preset& preset, double beta);

}  // namespace mlpref
