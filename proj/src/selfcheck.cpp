#include "mlpref/selfcheck.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "mlpref/autocheck.hpp"
#include "mlpref/chunker.hpp"
#include "mlpref/dataset.hpp"
#include "mlpref/mdpo.hpp"
#include "mlpref/mrhal.hpp"
#include "mlpref/random.hpp"
#include "mlpref/toy.hpp"

namespace mlpref {

namespace {

constexpr long double kStep = 1e-5L;

long double ld_neg_log_sigmoid(long double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

// Multi-level loss recomputed in extended precision straight from the
// pairwise definition; used only as a finite-difference reference.
long double ld_mdpo(const std::vector<long double>& r, const LossConfig& c) {
  long double total = 0;
  for (const auto& [i, j] : comparison_pairs(c.levels, c.pair_set, c.custom_pairs)) {
    total += ld_neg_log_sigmoid(static_cast<long double>(c.beta) * (r[i] - r[j]));
    const bool pen = c.penalty == Penalty::all_winners || (c.penalty == Penalty::best_only && i == 0);
    if (pen) total -= static_cast<long double>(c.penalty_weight) * r[i];
  }
  return total;
}

double rel_err(double analytic, long double numeric) {
  const long double diff = std::fabs(static_cast<long double>(analytic) - numeric);
  const long double scale = std::max(std::fabs(static_cast<long double>(analytic)), std::fabs(numeric));
  return scale == 0 ? 0.0 : static_cast<double>(diff / scale);
}

std::string fmt(const char* f, double a, double b = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

CheckResult check_mdpo_gradients(std::uint64_t seed) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    LossConfig c;
    c.levels = 2 + rng.below(4);
    c.beta = 0.05 + 0.95 * rng.uniform();
    c.penalty = static_cast<Penalty>(rng.below(3));
    std::vector<double> r(c.levels);
    for (auto& v : r) v = 6.0 * rng.uniform() - 3.0;
    const auto rep = mdpo_loss(r, c);
    for (std::size_t k = 0; k < c.levels; ++k) {
      std::vector<long double> up(r.begin(), r.end()), dn(r.begin(), r.end());
      up[k] += kStep;
      dn[k] -= kStep;
      const long double fd = (ld_mdpo(up, c) - ld_mdpo(dn, c)) / (2 * kStep);
      worst = std::max(worst, rel_err(rep.grad[k], fd));
    }
  }
  return {"mdpo_gradient_fd", worst < 1e-6, fmt("max relative error %.3g over 200 batches", worst)};
}

CheckResult check_pair_counts() {
  for (std::size_t k = 2; k <= kMaxLevels; ++k) {
    const auto n = comparison_pairs(k, PairSet::all_pairs).size();
    if (n != k * (k - 1) / 2) return {"pair_counts", false, "wrong count at K=" + std::to_string(k)};
  }
  const bool ten = comparison_pairs(5, PairSet::all_pairs).size() == 10;
  return {"pair_counts", ten, ten ? "K(K-1)/2 for K=2..8" : "K=5 does not give 10 pairs"};
}

CheckResult check_reductions(std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (int trial = 0; trial < 100; ++trial) {
    const double rw = 6.0 * rng.uniform() - 3.0, rl = 6.0 * rng.uniform() - 3.0;
    const double beta = 0.05 + rng.uniform();
    LossConfig c;
    c.levels = 2;
    c.beta = beta;
    const auto rep = mdpo_loss(std::vector<double>{rw, rl}, c);
    const auto p = dpo_p_pair_loss(rw, rl, beta);
    if (rep.total != p.loss || rep.grad[0] != p.grad_winner || rep.grad[1] != p.grad_loser) {
      return {"reduction_identities", false, "K=2 best_only differs from dpo-p"};
    }
    const auto d = dpo_pair_loss(0.0, rl, beta);
    const auto dp = dpo_p_pair_loss(0.0, rl, beta);
    if (d.loss != dp.loss || d.grad_loser != dp.grad_loser) {
      return {"reduction_identities", false, "dpo-p at r_w = 0 differs from dpo"};
    }
  }
  return {"reduction_identities", true, "bit-identical"};
}

CheckResult check_closed_forms(const SelfcheckFixtures& fx) {
  const double at_zero = dpo_pair_loss(0.4, 0.4, 1.0).loss;
  const double at_one = dpo_pair_loss(1.0, 0.0, 1.0).loss;
  const std::vector<double> s{0.9, 0.8, 0.9};
  const double acc = accuracy(s, 0.85);
  const bool ok = std::fabs(at_zero - fx.ln2) <= 1e-12 && std::fabs(at_one - fx.neg_log_sigmoid_one) <= 1e-6 &&
                  acc == fx.accuracy_example;
  return {"closed_form_values", ok, fmt("loss(0)=%.15g loss(1)=%.9g", at_zero, at_one)};
}

CheckResult check_toy_gradient(std::uint64_t seed) {
  ToyRecipe recipe;
  recipe.vocab_size = 12;
  recipe.prompt_count = 3;
  recipe.samples_per_prompt = 2;
  recipe.sequence_length = 10;
  recipe.support_size = 4;
  recipe.seed = seed;
  const auto ds = synthesize_dataset(recipe);
  ToyModel model = ToyModel::random(recipe.vocab_size, recipe.prompt_count, 0.5, seed + 1);
  // Move the policy away from the reference so every term is active.
  SplitMix64 rng(seed + 2);
  for (auto& v : model.policy()) v += 0.3 * (2.0 * rng.uniform() - 1.0);
  LossConfig c;
  c.levels = recipe.levels();
  c.beta = 0.5;
  const auto obj = toy_objective(model, ds.samples, c);
  double worst = 0.0;
  for (std::size_t idx = 0; idx < model.policy().size(); ++idx) {
    ToyModel up = model, dn = model;
    up.policy()[idx] += 1e-5;
    dn.policy()[idx] -= 1e-5;
    const double fd = (toy_objective(up, ds.samples, c, false).mean_loss -
                       toy_objective(dn, ds.samples, c, false).mean_loss) / 2e-5;
    if (std::fabs(obj.grad[idx]) < 1e-6 && std::fabs(fd) < 1e-6) continue;
    worst = std::max(worst, rel_err(obj.grad[idx], fd));
  }
  return {"toy_gradient_fd", worst < 1e-5, fmt("max relative error %.3g", worst)};
}

CheckResult check_mrhal(const SelfcheckFixtures& fx, std::uint64_t seed) {
  const std::vector<DialogueMetrics> worked{{"a", {4.0}}, {"b", {2.0, 4.0}}};
  const double c = cumulative_metric(worked), m = mean_metric(worked);
  if (std::fabs(c - fx.two_dialogue_cumulative) > 1e-4 || m != fx.two_dialogue_mean) {
    return {"mrhal_oracle", false, fmt("worked example gave %.6g / %.6g", c, m)};
  }
  SplitMix64 rng(seed);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DialogueMetrics> ds(1 + rng.below(20));
    double flat = 0.0;
    std::size_t n = 0;
    for (auto& d : ds) {
      d.values.resize(1 + rng.below(5));
      for (auto& v : d.values) {
        v = 10.0 * rng.uniform();
        flat += v;
        ++n;
      }
    }
    if (std::fabs(cumulative_metric(ds) - flat / static_cast<double>(n)) > 1e-12) {
      return {"mrhal_oracle", false, "cumulative differs from flattened average"};
    }
  }
  return {"mrhal_oracle", true, "worked example and 100 random fixtures"};
}

CheckResult check_ig_split(const SelfcheckFixtures& fx) {
  Manifest m;
  m.items.reserve(90000);
  for (std::size_t i = 0; i < 90000; ++i) m.items.push_back({"img" + std::to_string(i), "p", "r"});
  const auto plan = plan_incremental_generation(m, 5, 0);
  std::vector<std::size_t> sizes;
  for (const auto& s : plan.subsets) sizes.push_back(s.size());
  return {"ig_split", sizes == fx.ig_sizes_90k_k5, "cumulative subset sizes for 90000 items, K=5"};
}

CheckResult check_chunker(const SelfcheckFixtures& fx) {
  HeuristicChunker chunker;
  const auto ann = chunker.annotate(fx.chunk_phrase);
  const bool ok = ann.chunks.size() == 1 && ann.chunks[0].text == fx.chunk_phrase;
  return {"chunker_fixture", ok, ok ? "one maximal chunk" : std::to_string(ann.chunks.size()) + " chunk(s)"};
}

CheckResult check_self_match(std::uint64_t seed) {
  HeuristicChunker chunker;
  HashEmbedder embedder(128, seed);
  const std::string standard = "A red car sits near a blue tree. A small dog sleeps on a wooden bench.";
  const std::vector<std::string> candidates{"A green lamp sits near a blue tree.", standard};
  const auto rep = rank_responses(standard, candidates, chunker, embedder);
  const bool ok = rep.order.front() == 1 && rep.candidates[1].acc_final == 1.0;
  return {"autocheck_self_match", ok, "identical candidate ranks first with accuracy 1"};
}

}  // namespace

std::vector<CheckResult> run_selfcheck(const SelfcheckFixtures& fx) {
  std::vector<CheckResult> out;
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("mdpo_gradient_fd", [&] { return check_mdpo_gradients(fx.seed); });
  guarded("pair_counts", [&] { return check_pair_counts(); });
  guarded("reduction_identities", [&] { return check_reductions(fx.seed); });
  guarded("closed_form_values", [&] { return check_closed_forms(fx); });
  guarded("toy_gradient_fd", [&] { return check_toy_gradient(fx.seed); });
  guarded("mrhal_oracle", [&] { return check_mrhal(fx, fx.seed); });
  guarded("ig_split", [&] { return check_ig_split(fx); });
  guarded("chunker_fixture", [&] { return check_chunker(fx); });
  guarded("autocheck_self_match", [&] { return check_self_match(fx.seed); });
  return out;
}

}  // namespace mlpref
