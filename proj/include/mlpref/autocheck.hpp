#pragma once

// Ranking refinement: each candidate is scored against the standard response
// on noun chunks (local) and on the sentences hosting them (global).

#include <span>
#include <string>
#include <vector>

#include "mlpref/chunker.hpp"
#include "mlpref/dataset.hpp"
#include "mlpref/embedding.hpp"
#include "mlpref/jsonl.hpp"

namespace mlpref {

inline constexpr double kDefaultThreshold = 0.85;

struct SimilarityResult {
  std::size_t rows = 0;  // standard units (M)
  std::size_t cols = 0;  // generated units (N)
  std::vector<double> matrix;  // row-major M x N cosine similarities
  std::vector<double> scores;  // per-row maximum

  double at(std::size_t m, std::size_t n) const { return matrix[m * cols + n]; }
};

double cosine(const Embedding& a, const Embedding& b);

// Throws DataError on empty inputs, dimension mismatch or zero vectors.
SimilarityResult similarity_scores(std::span<const Embedding> standard,
                                   std::span<const Embedding> generated);

// Fraction of scores strictly above `threshold`. An empty score vector
// yields 1 (nothing in the standard to miss). Threshold must lie in (0, 1).
double accuracy(std::span<const double> scores, double threshold = kDefaultThreshold);

struct CandidateMetrics {
  double acc_local = 0.0;
  double acc_global = 0.0;
  double acc_final = 0.0;
  double score_local = 0.0;
  double score_global = 0.0;
  double score_final = 0.0;
  std::size_t provisional_rank = 0;
  std::size_t final_rank = 0;
};

struct RankingReport {
  double threshold = kDefaultThreshold;
  std::vector<CandidateMetrics> candidates;  // input order
  std::vector<std::size_t> order;            // candidate indices, best first
  std::vector<std::string> warnings;
};

struct AutocheckOptions {
  double threshold = kDefaultThreshold;
};

// Candidates are given in provisional order (index = provisional rank).
// Needs at least two candidates.
RankingReport rank_responses(const std::string& standard, std::span<const std::string> candidates,
                             const Chunker& chunker, const EmbeddingProvider& provider,
                             const AutocheckOptions& options = {});

// Re-ranks every non-standard response of `sample` against its standard
// response (the one tagged "standard", else the provisional rank 0). The
// standard keeps rank 0.
struct RefinedSample {
  PreferenceSample sample;
  RankingReport report;
  std::vector<std::size_t> candidate_positions;  // report index -> response index
};

RefinedSample refine_sample(const PreferenceSample& sample, const Chunker& chunker,
                            const EmbeddingProvider& provider, const AutocheckOptions& options = {});

Json report_to_json(const std::string& sample_id, const RefinedSample& refined);

}  // namespace mlpref
