#include "mlpref/mdpo.hpp"

#include <cmath>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "mlpref/error.hpp"

namespace mlpref {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

PairTerm dpo_pair_loss(double r_w, double r_l, double beta) {
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  if (!std::isfinite(r_w) || !std::isfinite(r_l)) throw DataError("non-finite log-ratio");
  const double z = beta * (r_w - r_l);
  const double g = beta * sigmoid(-z);
  return {softplus(-z), -g, g};
}

PairTerm dpo_p_pair_loss(double r_w, double r_l, double beta, double penalty_weight) {
  PairTerm t = dpo_pair_loss(r_w, r_l, beta);
  t.loss -= penalty_weight * r_w;
  t.grad_winner -= penalty_weight;
  return t;
}

double sequence_log_ratio(const LogProbRecord& record) {
  const auto& p = record.policy_token_logprobs;
  const auto& q = record.ref_token_logprobs;
  if (p.empty() || q.empty()) throw DataError("empty token log-probability vector");
  if (p.size() != q.size()) {
    throw DataError("policy and reference token counts differ (" + std::to_string(p.size()) + " vs " +
                    std::to_string(q.size()) + ")");
  }
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || !std::isfinite(q[i])) throw DataError("non-finite token log-probability");
    if (p[i] > 0.0 || q[i] > 0.0) throw DataError("token log-probability above zero");
    sp += p[i];
    sq += q[i];
  }
  return sp - sq;
}

void validate(const LossConfig& config) {
  if (!(config.beta > 0.0) || !std::isfinite(config.beta)) throw UsageError("beta must be positive");
  if (config.levels < 2) throw UsageError("level count K must be >= 2");
  if (!std::isfinite(config.penalty_weight)) throw UsageError("penalty weight must be finite");
  if (config.pair_set == PairSet::custom) {
    if (config.custom_pairs.empty()) throw UsageError("custom pair set is empty");
    for (const auto& [i, j] : config.custom_pairs) {
      if (!(i < j && j < config.levels)) {
        throw UsageError("invalid pair (" + std::to_string(i) + "," + std::to_string(j) +
                         ") for K = " + std::to_string(config.levels));
      }
    }
  }
}

std::vector<Pair> comparison_pairs(std::size_t levels, PairSet set, std::span<const Pair> custom) {
  if (levels < 2) throw UsageError("level count K must be >= 2");
  std::vector<Pair> out;
  switch (set) {
    case PairSet::all_pairs:
      for (std::size_t i = 0; i < levels; ++i) {
        for (std::size_t j = i + 1; j < levels; ++j) out.emplace_back(i, j);
      }
      break;
    case PairSet::adjacent_only:
      for (std::size_t i = 0; i + 1 < levels; ++i) out.emplace_back(i, i + 1);
      break;
    case PairSet::custom:
      for (const auto& [i, j] : custom) {
        if (!(i < j && j < levels)) {
          throw UsageError("invalid pair (" + std::to_string(i) + "," + std::to_string(j) +
                           ") for K = " + std::to_string(levels));
        }
        out.emplace_back(i, j);
      }
      break;
  }
  return out;
}

LossReport mdpo_loss(std::span<const double> log_ratios, const LossConfig& config) {
  validate(config);
  if (log_ratios.size() != config.levels) {
    throw DataError("expected " + std::to_string(config.levels) + " log-ratios, got " +
                    std::to_string(log_ratios.size()));
  }
  LossReport rep;
  rep.grad.assign(config.levels, 0.0);
  for (const auto& [i, j] : comparison_pairs(config.levels, config.pair_set, config.custom_pairs)) {
    const bool penalized = config.penalty == Penalty::all_winners ||
                           (config.penalty == Penalty::best_only && i == 0);
    const PairTerm t = penalized
                           ? dpo_p_pair_loss(log_ratios[i], log_ratios[j], config.beta, config.penalty_weight)
                           : dpo_pair_loss(log_ratios[i], log_ratios[j], config.beta);
    rep.total += t.loss;
    rep.grad[i] += t.grad_winner;
    rep.grad[j] += t.grad_loser;
    rep.pairs.push_back({i, j, t.loss, penalized});
  }
  return rep;
}

std::vector<SampleLogRatios> group_log_ratios(std::span<const LogProbRecord> records, std::size_t levels) {
  std::vector<SampleLogRatios> out;
  std::vector<std::vector<bool>> seen;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& rec : records) {
    auto [it, fresh] = index.emplace(rec.sample_id, out.size());
    if (fresh) {
      out.push_back({rec.sample_id, std::vector<double>(levels, 0.0)});
      seen.emplace_back(levels, false);
    }
    const std::size_t s = it->second;
    if (rec.response_rank >= levels) {
      throw DataError("sample '" + rec.sample_id + "': rank " + std::to_string(rec.response_rank) +
                      " outside 0.." + std::to_string(levels - 1));
    }
    if (seen[s][rec.response_rank]) {
      throw DataError("sample '" + rec.sample_id + "': rank " + std::to_string(rec.response_rank) +
                      " appears twice");
    }
    seen[s][rec.response_rank] = true;
    out[s].log_ratios[rec.response_rank] = sequence_log_ratio(rec);
  }
  for (std::size_t s = 0; s < out.size(); ++s) {
    for (std::size_t k = 0; k < levels; ++k) {
      if (!seen[s][k]) {
        throw DataError("sample '" + out[s].sample_id + "': rank " + std::to_string(k) + " missing");
      }
    }
  }
  return out;
}

std::vector<LogProbRecord> load_logprobs(const std::filesystem::path& path) {
  std::vector<LogProbRecord> out;
  for_each_jsonl(path, [&](const Json& rec, std::size_t line) {
    LogProbRecord r;
    r.sample_id = require_field<std::string>(rec, "sample_id", line);
    r.response_rank = require_field<std::size_t>(rec, "response_rank", line);
    r.policy_token_logprobs = require_field<std::vector<double>>(rec, "policy_token_logprobs", line);
    r.ref_token_logprobs = require_field<std::vector<double>>(rec, "ref_token_logprobs", line);
    try {
      (void)sequence_log_ratio(r);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(std::move(r));
  });
  return out;
}

BatchReport mdpo_batch_loss(std::span<const SampleLogRatios> samples, const LossConfig& config,
                            std::size_t jobs) {
  validate(config);
  BatchReport out;
  out.samples.resize(samples.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, samples.size()));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) out.samples[s] = mdpo_loss(samples[s].log_ratios, config);
  };
  if (jobs == 1) {
    work(0, samples.size());
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    const std::size_t per = (samples.size() + jobs - 1) / jobs;
    for (std::size_t t = 0; t < jobs; ++t) {
      const std::size_t b = std::min(samples.size(), t * per);
      const std::size_t e = std::min(samples.size(), b + per);
      pool.emplace_back([&, t, b, e] {
        try {
          work(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  for (const auto& r : out.samples) out.total += r.total;
  return out;
}

Json loss_report_to_json(const std::string& sample_id, const LossReport& report) {
  Json j;
  j["sample_id"] = sample_id;
  j["total"] = report.total;
  Json pairs = Json::array();
  for (const auto& p : report.pairs) {
    pairs.push_back(Json{{"winner", p.winner}, {"loser", p.loser}, {"loss", p.loss}, {"penalized", p.penalized}});
  }
  j["pairs"] = std::move(pairs);
  j["grad"] = report.grad;
  return j;
}

const char* to_string(PairSet set) {
  switch (set) {
    case PairSet::all_pairs: return "all_pairs";
    case PairSet::adjacent_only: return "adjacent_only";
    case PairSet::custom: return "custom";
  }
  return "?";
}

const char* to_string(Penalty penalty) {
  switch (penalty) {
    case Penalty::best_only: return "best_only";
    case Penalty::none: return "none";
    case Penalty::all_winners: return "all_winners";
  }
  return "?";
}

PairSet parse_pair_set(const std::string& name) {
  if (name == "all_pairs" || name == "all") return PairSet::all_pairs;
  if (name == "adjacent_only" || name == "adjacent") return PairSet::adjacent_only;
  if (name == "custom") return PairSet::custom;
  throw UsageError("unknown pair set '" + name + "'");
}

Penalty parse_penalty(const std::string& name) {
  if (name == "best_only") return Penalty::best_only;
  if (name == "none") return Penalty::none;
  if (name == "all_winners") return Penalty::all_winners;
  throw UsageError("unknown penalty mode '" + name + "'");
}

std::vector<Pair> parse_pairs(const std::string& spec) {
  std::vector<Pair> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw UsageError("pair '" + item + "' is not of the form i-j");
    try {
      std::size_t used_a = 0, used_b = 0;
      const std::string a = item.substr(0, dash), b = item.substr(dash + 1);
      const auto i = std::stoul(a, &used_a);
      const auto j = std::stoul(b, &used_b);
      if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument(item);
      out.emplace_back(i, j);
    } catch (const std::logic_error&) {
      throw UsageError("pair '" + item + "' is not of the form i-j");
    }
  }
  return out;
}

}  // namespace mlpref
