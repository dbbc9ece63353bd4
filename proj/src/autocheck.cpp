#include "mlpref/autocheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "mlpref/error.hpp"

namespace mlpref {

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dimension() != b.dimension()) {
    throw DataError("dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                    std::to_string(b.dimension()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw DataError("cosine of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

SimilarityResult similarity_scores(std::span<const Embedding> standard,
                                   std::span<const Embedding> generated) {
  if (standard.empty() || generated.empty()) {
    throw DataError("similarity needs non-empty standard and generated sets");
  }
  SimilarityResult r;
  r.rows = standard.size();
  r.cols = generated.size();
  r.matrix.resize(r.rows * r.cols);
  r.scores.assign(r.rows, -1.0);
  for (std::size_t m = 0; m < r.rows; ++m) {
    for (std::size_t n = 0; n < r.cols; ++n) {
      const double c = cosine(standard[m], generated[n]);
      r.matrix[m * r.cols + n] = c;
      r.scores[m] = std::max(r.scores[m], c);
    }
  }
  return r;
}

double accuracy(std::span<const double> scores, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw UsageError("threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  if (scores.empty()) return 1.0;
  const auto hits = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > threshold; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

namespace {

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Local units are chunk texts; global units are the distinct sentences that
// host at least one chunk.
struct Units {
  std::vector<std::string> local;
  std::vector<std::string> global;
};

Units units_of(const ChunkAnnotation& ann) {
  Units u;
  std::set<std::size_t> hosts;
  for (const auto& c : ann.chunks) {
    u.local.push_back(c.text);
    hosts.insert(c.sentence);
  }
  for (std::size_t s : hosts) u.global.push_back(ann.sentences.at(s));
  return u;
}

class EmbeddingCache {
 public:
  EmbeddingCache(const std::vector<Units>& all, const EmbeddingProvider& provider) {
    std::vector<std::string> texts;
    for (const auto& u : all) {
      for (const auto* list : {&u.local, &u.global}) {
        for (const auto& t : *list) {
          if (index_.emplace(t, texts.size()).second) texts.push_back(t);
        }
      }
    }
    if (!texts.empty()) vectors_ = mlpref::embed(texts, provider);
  }

  std::vector<Embedding> lookup(const std::vector<std::string>& texts) const {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(vectors_[index_.at(t)]);
    return out;
  }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<Embedding> vectors_;
};

// (acc, score) at one granularity. An empty generated set scores (0, 0).
std::pair<double, double> granular(const std::vector<Embedding>& standard,
                                   const std::vector<Embedding>& generated, double threshold) {
  if (generated.empty()) return {0.0, 0.0};
  const auto sim = similarity_scores(standard, generated);
  return {accuracy(sim.scores, threshold), mean(sim.scores)};
}

RankingReport score_and_rank(const std::string& standard, std::span<const std::string> candidates,
                             const Chunker& chunker, const EmbeddingProvider& provider,
                             const AutocheckOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) {
    throw UsageError("threshold must lie in (0, 1), got " + std::to_string(options.threshold));
  }
  RankingReport report;
  report.threshold = options.threshold;

  std::vector<Units> units;
  units.push_back(units_of(chunker.annotate(standard)));
  for (const auto& c : candidates) units.push_back(units_of(chunker.annotate(c)));
  const Units& ref = units.front();

  report.candidates.resize(candidates.size());
  if (ref.local.empty()) {
    report.warnings.push_back(
        "standard response has no noun chunks; accuracy set to 1 and provisional order kept");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto& m = report.candidates[i];
      m.acc_local = m.acc_global = m.acc_final = 1.0;
      m.provisional_rank = i;
    }
  } else {
    EmbeddingCache cache(units, provider);
    const auto ref_local = cache.lookup(ref.local);
    const auto ref_global = cache.lookup(ref.global);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const Units& u = units[i + 1];
      auto& m = report.candidates[i];
      m.provisional_rank = i;
      std::tie(m.acc_local, m.score_local) = granular(ref_local, cache.lookup(u.local), options.threshold);
      std::tie(m.acc_global, m.score_global) =
          granular(ref_global, cache.lookup(u.global), options.threshold);
      m.acc_final = (m.acc_local + m.acc_global) / 2.0;
      m.score_final = (m.score_local + m.score_global) / 2.0;
    }
  }

  report.order.resize(candidates.size());
  std::iota(report.order.begin(), report.order.end(), std::size_t{0});
  std::stable_sort(report.order.begin(), report.order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = report.candidates[a];
    const auto& y = report.candidates[b];
    if (x.acc_final != y.acc_final) return x.acc_final > y.acc_final;
    return x.score_final > y.score_final;
  });
  for (std::size_t r = 0; r < report.order.size(); ++r) report.candidates[report.order[r]].final_rank = r;
  return report;
}

}  // namespace

RankingReport rank_responses(const std::string& standard, std::span<const std::string> candidates,
                             const Chunker& chunker, const EmbeddingProvider& provider,
                             const AutocheckOptions& options) {
  if (candidates.size() < 2) {
    throw UsageError("ranking needs at least two candidates, got " + std::to_string(candidates.size()));
  }
  return score_and_rank(standard, candidates, chunker, provider, options);
}

RefinedSample refine_sample(const PreferenceSample& sample, const Chunker& chunker,
                            const EmbeddingProvider& provider, const AutocheckOptions& options) {
  if (sample.responses.size() < 2) {
    throw DataError("sample '" + sample.sample_id + "' has fewer than two responses");
  }
  // Responses in provisional rank order.
  std::vector<std::size_t> by_rank(sample.responses.size());
  std::iota(by_rank.begin(), by_rank.end(), std::size_t{0});
  std::stable_sort(by_rank.begin(), by_rank.end(), [&](std::size_t a, std::size_t b) {
    return sample.responses[a].rank < sample.responses[b].rank;
  });
  std::size_t std_pos = by_rank.front();
  for (std::size_t i : by_rank) {
    if (sample.responses[i].tag == kStandardTag) {
      std_pos = i;
      break;
    }
  }

  RefinedSample out;
  std::vector<std::string> texts;
  for (std::size_t i : by_rank) {
    if (i == std_pos) continue;
    out.candidate_positions.push_back(i);
    texts.push_back(sample.responses[i].text);
  }
  out.report = score_and_rank(sample.responses[std_pos].text, texts, chunker, provider, options);

  out.sample = sample;
  out.sample.responses[std_pos].rank = 0;
  for (std::size_t c = 0; c < texts.size(); ++c) {
    out.sample.responses[out.candidate_positions[c]].rank =
        static_cast<int>(out.report.candidates[c].final_rank + 1);
  }
  return out;
}

Json report_to_json(const std::string& sample_id, const RefinedSample& refined) {
  Json j;
  j["sample_id"] = sample_id;
  j["threshold"] = refined.report.threshold;
  Json cands = Json::array();
  for (std::size_t c = 0; c < refined.report.candidates.size(); ++c) {
    const auto& m = refined.report.candidates[c];
    const auto& resp = refined.sample.responses[refined.candidate_positions[c]];
    cands.push_back(Json{{"tag", resp.tag},
                         {"provisional_rank", m.provisional_rank + 1},
                         {"final_rank", m.final_rank + 1},
                         {"acc_local", m.acc_local},
                         {"acc_global", m.acc_global},
                         {"acc_final", m.acc_final},
                         {"score_local", m.score_local},
                         {"score_global", m.score_global},
                         {"score_final", m.score_final}});
  }
  j["candidates"] = std::move(cands);
  Json ranks = Json::array();
  for (const auto& r : refined.sample.responses) ranks.push_back(r.rank);
  j["ranks"] = std::move(ranks);
  j["warnings"] = refined.report.warnings;
  return j;
}

}  // namespace mlpref
