#include "mlpref/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlpref/error.hpp"
#include "mlpref/random.hpp"

namespace mlpref {

ToyModel::ToyModel(std::size_t vocab_size, std::size_t prompt_count)
    : ToyModel(vocab_size, prompt_count, std::vector<double>(vocab_size * prompt_count, 0.0)) {}

ToyModel::ToyModel(std::size_t vocab_size, std::size_t prompt_count, std::vector<double> logits)
    : vocab_(vocab_size), prompts_(prompt_count), policy_(std::move(logits)) {
  if (vocab_ == 0 || prompts_ == 0) throw UsageError("toy model needs a non-empty vocabulary and prompt set");
  if (policy_.size() != vocab_ * prompts_) throw UsageError("logit table has the wrong size");
  for (double v : policy_) {
    if (!std::isfinite(v)) throw UsageError("non-finite initial logit");
  }
  reference_ = std::make_shared<const std::vector<double>>(policy_);
}

ToyModel ToyModel::random(std::size_t vocab_size, std::size_t prompt_count, double scale,
                          std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> logits(vocab_size * prompt_count);
  for (auto& v : logits) v = scale * (2.0 * rng.uniform() - 1.0);
  return ToyModel(vocab_size, prompt_count, std::move(logits));
}

std::span<const double> ToyModel::policy_row(std::size_t prompt) const {
  return std::span<const double>(policy_).subspan(prompt * vocab_, vocab_);
}

std::span<double> ToyModel::policy_row(std::size_t prompt) {
  return std::span<double>(policy_).subspan(prompt * vocab_, vocab_);
}

std::span<const double> ToyModel::reference_row(std::size_t prompt) const {
  return std::span<const double>(*reference_).subspan(prompt * vocab_, vocab_);
}

std::vector<double> log_softmax(std::span<const double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
  return out;
}

LogProbRecord toy_log_prob(const ToyModel& model, std::size_t prompt, const TokenSeq& tokens,
                           const std::string& sample_id, std::size_t rank) {
  if (prompt >= model.prompt_count()) throw UsageError("prompt id " + std::to_string(prompt) + " out of range");
  if (tokens.empty()) throw UsageError("empty token sequence");
  const auto pol = log_softmax(model.policy_row(prompt));
  const auto ref = log_softmax(model.reference_row(prompt));
  LogProbRecord rec;
  rec.sample_id = sample_id;
  rec.response_rank = rank;
  for (auto t : tokens) {
    if (t >= model.vocab_size()) throw UsageError("token id " + std::to_string(t) + " out of range");
    rec.policy_token_logprobs.push_back(pol[t]);
    rec.ref_token_logprobs.push_back(ref[t]);
  }
  return rec;
}

// ---- synthetic data ---------------------------------------------------------

std::vector<double> default_corruption_rates(std::size_t levels) {
  switch (levels) {
    case 2: return {0.0, 0.3};
    case 3: return {0.0, 0.15, 0.45};
    case 4: return {0.0, 0.1, 0.3, 0.6};
    case 5: return {0.0, 0.1, 0.2, 0.4, 0.6};
    default: break;
  }
  if (levels < 2) throw UsageError("level count must be >= 2");
  std::vector<double> out;
  for (std::size_t k = 0; k < levels; ++k) out.push_back(0.7 * static_cast<double>(k) / (levels - 1));
  return out;
}

ToyDataset synthesize_dataset(const ToyRecipe& recipe) {
  const auto& rates = recipe.corruption_rates;
  if (rates.size() < 2) throw UsageError("need at least two corruption rates");
  if (rates.front() != 0.0) throw UsageError("first corruption rate must be 0");
  for (std::size_t k = 1; k < rates.size(); ++k) {
    if (!(rates[k] > rates[k - 1]) || !(rates[k] < 1.0)) {
      throw UsageError("corruption rates must increase strictly and stay below 1");
    }
  }
  if (recipe.support_size == 0 || recipe.support_size >= recipe.vocab_size) {
    throw UsageError("support size must lie in [1, vocab_size)");
  }
  if (recipe.prompt_count == 0 || recipe.samples_per_prompt == 0 || recipe.sequence_length == 0) {
    throw UsageError("prompt count, samples per prompt and sequence length must be positive");
  }

  ToyDataset ds;
  ds.recipe = recipe;
  SplitMix64 rng(recipe.seed);
  const auto vocab = static_cast<std::uint32_t>(recipe.vocab_size);

  std::vector<std::vector<std::uint32_t>> outside(recipe.prompt_count);
  for (std::size_t p = 0; p < recipe.prompt_count; ++p) {
    std::vector<std::uint32_t> all(vocab);
    std::iota(all.begin(), all.end(), 0u);
    rng.shuffle(all);
    std::vector<std::uint32_t> support(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(recipe.support_size));
    outside[p].assign(all.begin() + static_cast<std::ptrdiff_t>(recipe.support_size), all.end());
    std::sort(support.begin(), support.end());
    std::sort(outside[p].begin(), outside[p].end());
    TokenSeq target(recipe.sequence_length);
    for (auto& t : target) t = support[rng.below(support.size())];
    ds.supports.push_back(std::move(support));
    ds.targets.push_back(std::move(target));
  }

  for (std::size_t p = 0; p < recipe.prompt_count; ++p) {
    for (std::size_t n = 0; n < recipe.samples_per_prompt; ++n) {
      ToySample s;
      s.prompt = p;
      for (double rate : rates) {
        TokenSeq seq = ds.targets[p];
        for (auto& t : seq) {
          if (rng.uniform() < rate) t = outside[p][rng.below(outside[p].size())];
        }
        s.levels.push_back(std::move(seq));
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Json recipe_to_json(const ToyRecipe& recipe) {
  return Json{{"vocab_size", recipe.vocab_size},
              {"prompt_count", recipe.prompt_count},
              {"samples_per_prompt", recipe.samples_per_prompt},
              {"sequence_length", recipe.sequence_length},
              {"support_size", recipe.support_size},
              {"corruption_rates", recipe.corruption_rates},
              {"seed", recipe.seed}};
}

// ---- objective --------------------------------------------------------------

namespace {

// Sequence log-probability under one row's log-softmax.
double seq_logprob(std::span<const double> logp, const TokenSeq& seq) {
  double s = 0.0;
  for (auto t : seq) s += logp[t];
  return s;
}

void check_sample(const ToyModel& model, const ToySample& s, std::size_t levels) {
  if (s.prompt >= model.prompt_count()) throw UsageError("sample prompt out of range");
  if (s.levels.size() != levels) {
    throw UsageError("sample has " + std::to_string(s.levels.size()) + " levels, loss expects " +
                     std::to_string(levels));
  }
  for (const auto& seq : s.levels) {
    if (seq.empty()) throw UsageError("empty sequence in sample");
    for (auto t : seq) {
      if (t >= model.vocab_size()) throw UsageError("token id out of range");
    }
  }
}

}  // namespace

ObjectiveValue toy_objective(const ToyModel& model, std::span<const ToySample> samples,
                             const LossConfig& loss, bool with_grad) {
  validate(loss);
  ObjectiveValue out;
  if (samples.empty()) return out;
  const std::size_t vocab = model.vocab_size();
  if (with_grad) out.grad.assign(model.policy().size(), 0.0);

  // Row log-softmaxes are shared by every sample of a prompt.
  std::vector<std::vector<double>> pol_cache(model.prompt_count()), ref_cache(model.prompt_count());
  std::vector<double> r(loss.levels);
  const double inv_n = 1.0 / static_cast<double>(samples.size());

  for (const auto& s : samples) {
    check_sample(model, s, loss.levels);
    auto& pol = pol_cache[s.prompt];
    auto& ref = ref_cache[s.prompt];
    if (pol.empty()) {
      pol = log_softmax(model.policy_row(s.prompt));
      ref = log_softmax(model.reference_row(s.prompt));
    }
    for (std::size_t k = 0; k < loss.levels; ++k) r[k] = seq_logprob(pol, s.levels[k]) - seq_logprob(ref, s.levels[k]);
    const LossReport rep = mdpo_loss(r, loss);
    out.mean_loss += rep.total * inv_n;
    out.mean_r0 += r[0] * inv_n;
    if (!with_grad) continue;

    // d r_k / d logit[v] = count_k[v] - len_k * softmax[v]
    double* g = out.grad.data() + s.prompt * vocab;
    double len_weight = 0.0;
    for (std::size_t k = 0; k < loss.levels; ++k) {
      const double gk = rep.grad[k] * inv_n;
      if (gk == 0.0) continue;
      for (auto t : s.levels[k]) g[t] += gk;
      len_weight += gk * static_cast<double>(s.levels[k].size());
    }
    if (len_weight != 0.0) {
      for (std::size_t v = 0; v < vocab; ++v) g[v] -= len_weight * std::exp(pol[v]);
    }
  }
  return out;
}

OrderingMetrics evaluate_ordering(const ToyModel& model, std::span<const ToySample> samples,
                                  std::uint64_t seed) {
  OrderingMetrics m;
  if (samples.empty()) return m;
  const std::size_t levels = samples.front().levels.size();
  m.pairwise.assign(levels, std::vector<double>(levels, 0.0));
  SplitMix64 coin(seed);
  std::vector<std::vector<double>> row_cache(model.prompt_count());
  std::size_t fully_ordered = 0;
  std::vector<double> lp(levels);
  for (const auto& s : samples) {
    check_sample(model, s, levels);
    auto& row = row_cache[s.prompt];
    if (row.empty()) row = log_softmax(model.policy_row(s.prompt));
    for (std::size_t k = 0; k < levels; ++k) lp[k] = seq_logprob(row, s.levels[k]);
    bool ordered = true;
    for (std::size_t k = 0; k + 1 < levels; ++k) ordered = ordered && lp[k] > lp[k + 1];
    if (ordered) ++fully_ordered;
    for (std::size_t i = 0; i < levels; ++i) {
      for (std::size_t j = i + 1; j < levels; ++j) {
        if (lp[i] > lp[j] || (lp[i] == lp[j] && (coin.next() & 1u))) m.pairwise[i][j] += 1.0;
      }
    }
  }
  const double n = static_cast<double>(samples.size());
  m.full_order_accuracy = static_cast<double>(fully_ordered) / n;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < levels; ++i) {
    for (std::size_t j = i + 1; j < levels; ++j) {
      m.pairwise[i][j] /= n;
      total += m.pairwise[i][j];
      ++pairs;
    }
  }
  m.pairwise_accuracy = pairs ? total / static_cast<double>(pairs) : 0.0;
  return m;
}

// ---- training ---------------------------------------------------------------

TrainTrace train(ToyModel model, const ToyDataset& dataset, const TrainConfig& config) {
  validate(config.loss);
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw UsageError("learning rate must be a non-negative finite number");
  }
  if (config.epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(config.eval_fraction >= 0.0 && config.eval_fraction < 1.0)) {
    throw UsageError("eval fraction must lie in [0, 1)");
  }
  if (dataset.recipe.levels() != config.loss.levels) {
    throw UsageError("dataset has " + std::to_string(dataset.recipe.levels()) + " levels but the loss expects " +
                     std::to_string(config.loss.levels));
  }
  if (model.vocab_size() != dataset.recipe.vocab_size || model.prompt_count() != dataset.recipe.prompt_count) {
    throw UsageError("model shape does not match the dataset");
  }

  // Stratified by prompt so every prompt keeps training samples.
  std::vector<std::vector<std::size_t>> by_prompt(dataset.recipe.prompt_count);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) by_prompt.at(dataset.samples[i].prompt).push_back(i);
  TrainTrace trace{.epochs = {}, .train_indices = {}, .eval_indices = {}, .initial_eval = {}, .final_eval = {},
                   .model = std::move(model)};
  SplitMix64 rng(config.seed);
  for (auto& group : by_prompt) {
    rng.shuffle(group);
    const auto n_eval = std::min(
        group.size() > 0 ? group.size() - 1 : 0,
        static_cast<std::size_t>(std::floor(config.eval_fraction * static_cast<double>(group.size()))));
    trace.eval_indices.insert(trace.eval_indices.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_eval));
    trace.train_indices.insert(trace.train_indices.end(), group.begin() + static_cast<std::ptrdiff_t>(n_eval), group.end());
  }
  std::sort(trace.train_indices.begin(), trace.train_indices.end());
  std::sort(trace.eval_indices.begin(), trace.eval_indices.end());
  if (trace.train_indices.empty()) throw UsageError("training split is empty");

  std::vector<ToySample> train_set, eval_set;
  for (auto i : trace.train_indices) train_set.push_back(dataset.samples[i]);
  for (auto i : trace.eval_indices) eval_set.push_back(dataset.samples[i]);

  const std::uint64_t eval_seed = config.seed ^ 0x5eedULL;
  trace.initial_eval = evaluate_ordering(trace.model, eval_set, eval_seed);

  auto& logits = trace.model.policy();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto obj = toy_objective(trace.model, train_set, config.loss);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits[i] -= config.learning_rate * obj.grad[i];
      abs_sum += std::abs(logits[i]);
    }
    const double mean_abs = abs_sum / static_cast<double>(logits.size());
    if (!(mean_abs <= 1e6)) {
      throw DataError("training diverged at epoch " + std::to_string(epoch + 1) +
                      ": mean |logit| = " + std::to_string(mean_abs));
    }
    const auto ev = evaluate_ordering(trace.model, eval_set, eval_seed);
    trace.epochs.push_back({obj.mean_loss, obj.mean_r0, ev.full_order_accuracy, ev.pairwise_accuracy});
  }
  trace.final_eval = evaluate_ordering(trace.model, eval_set, eval_seed);
  return trace;
}

namespace {

Json metrics_to_json(const OrderingMetrics& m) {
  Json pairs = Json::array();
  for (std::size_t i = 0; i < m.pairwise.size(); ++i) {
    for (std::size_t j = i + 1; j < m.pairwise.size(); ++j) {
      pairs.push_back(Json{{"i", i}, {"j", j}, {"accuracy", m.pairwise[i][j]}});
    }
  }
  return Json{{"full_order_accuracy", m.full_order_accuracy},
              {"pairwise_accuracy", m.pairwise_accuracy},
              {"pairwise", std::move(pairs)}};
}

}  // namespace

Json trace_to_json(const TrainTrace& trace, const TrainConfig& config, const ToyRecipe& recipe,
                   const std::string& preset) {
  Json j;
  j["preset"] = preset;
  j["recipe"] = recipe_to_json(recipe);
  Json pairs = Json::array();
  for (const auto& [a, b] : comparison_pairs(config.loss.levels, config.loss.pair_set, config.loss.custom_pairs)) {
    pairs.push_back(Json::array({a, b}));
  }
  j["config"] = Json{{"learning_rate", config.learning_rate},
                     {"epochs", config.epochs},
                     {"seed", config.seed},
                     {"eval_fraction", config.eval_fraction},
                     {"beta", config.loss.beta},
                     {"levels", config.loss.levels},
                     {"pair_set", to_string(config.loss.pair_set)},
                     {"pairs", std::move(pairs)},
                     {"penalty", to_string(config.loss.penalty)},
                     {"penalty_weight", config.loss.penalty_weight}};
  j["train_samples"] = trace.train_indices.size();
  j["eval_samples"] = trace.eval_indices.size();
  Json epochs = Json::array();
  for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
    const auto& s = trace.epochs[e];
    epochs.push_back(Json{{"epoch", e + 1},
                          {"mean_loss", s.mean_loss},
                          {"mean_r0", s.mean_r0},
                          {"full_order_accuracy", s.full_order_accuracy},
                          {"pairwise_accuracy", s.pairwise_accuracy}});
  }
  j["epochs"] = std::move(epochs);
  j["initial_eval"] = metrics_to_json(trace.initial_eval);
  j["final_eval"] = metrics_to_json(trace.final_eval);
  const auto& pol = trace.model.policy();
  j["final_logits_fnv1a"] = fnv1a(pol.data(), pol.size() * sizeof(double));
  return j;
}

// ---- presets ----------------------------------------------------------------

const std::vector<Preset>& presets() {
  // Levels are S > A > B > C (indices 0..3).
  static const std::vector<Preset> all = {
      {"binary", "S>A", 4, PairSet::custom, {{0, 1}}, Penalty::best_only, {}},
      {"wide_binary", "S>B", 4, PairSet::custom, {{0, 2}}, Penalty::best_only, {}},
      {"low_wide", "A>C", 4, PairSet::custom, {{1, 3}}, Penalty::best_only, {}},
      {"low_narrow", "B>C", 4, PairSet::custom, {{2, 3}}, Penalty::best_only, {}},
      {"adjacent_3", "S>A & A>B", 4, PairSet::custom, {{0, 1}, {1, 2}}, Penalty::best_only, {}},
      {"adjacent_3_cross", "S>A & A>B + cross-level", 4, PairSet::custom, {{0, 1}, {0, 2}, {1, 2}},
       Penalty::best_only, {}},
      {"adjacent", "S>A & A>B & B>C", 4, PairSet::adjacent_only, {}, Penalty::best_only, {}},
      {"adjacent_cross", "S>A & A>B & B>C + cross-level", 4, PairSet::all_pairs, {}, Penalty::best_only, {}},
      {"level2", "2-level preference", 2, PairSet::all_pairs, {}, Penalty::best_only, {"GT", "LLaVA-34B"}},
      {"level3", "3-level preference", 3, PairSet::all_pairs, {}, Penalty::best_only,
       {"GT", "LLaVA-34B", "LLaVA-13B"}},
      {"level4", "4-level preference", 4, PairSet::all_pairs, {}, Penalty::best_only,
       {"GT", "LLaVA-13B", "LLaVA-7B", "LLaVA-2B"}},
      {"level5", "5-level preference", 5, PairSet::all_pairs, {}, Penalty::best_only,
       {"GT", "LLaVA-34B", "LLaVA-13B", "LLaVA-7B", "LLaVA-2B"}},
  };
  return all;
}

const Preset& find_preset(const std::string& name_or_label) {
  for (const auto& p : presets()) {
    if (p.name == name_or_label || p.label == name_or_label) return p;
  }
  throw UsageError("unknown preset '" + name_or_label + "'");
}

LossConfig loss_config_for(const Preset& preset, double beta) {
  LossConfig c;
  c.beta = beta;
  c.levels = preset.levels;
  c.pair_set = preset.pair_set;
  c.custom_pairs = preset.custom_pairs;
  c.penalty = preset.penalty;
  return c;
}

}  // namespace mlpref
