#pragma once

// Multi-level preference dataset assembly: candidate ingestion, size-ordered
// expert samples, and incremental-generation split planning.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlpref/jsonl.hpp"

namespace mlpref {

inline constexpr std::size_t kMinLevels = 2;
inline constexpr std::size_t kMaxLevels = 8;
inline constexpr const char* kStandardTag = "standard";

struct Response {
  std::string text;
  std::string tag;  // provenance: "standard", a size label such as "13B", a slot name, ...
  int rank = 0;     // 0 = best

  bool operator==(const Response&) const = default;
};

struct PreferenceSample {
  std::string sample_id;
  std::string image_ref;
  std::string prompt;
  std::vector<Response> responses;

  std::size_t levels() const { return responses.size(); }
  bool operator==(const PreferenceSample&) const = default;
};

// Reads line-delimited candidate records. Provisional ranks follow record
// order. Throws DataError on a missing file, malformed line or duplicate id.
std::vector<PreferenceSample> load_candidates(const std::filesystem::path& path);

Json sample_to_json(const PreferenceSample& sample);
std::string serialize_candidates(std::span<const PreferenceSample> samples);

// Ordered pool of model-size labels, largest (best) first.
struct SizePool {
  std::vector<std::string> labels;

  static SizePool default_pool() { return {{"34B", "13B", "7B", "2B"}}; }
};

struct SizedCandidate {
  std::string text;
  std::string size_label;
};

// Rank 0 is the standard response; candidates follow by descending model
// size. Throws UsageError on unknown or duplicate labels.
PreferenceSample assemble_meg_sample(const std::string& standard,
                                     std::span<const SizedCandidate> candidates,
                                     const SizePool& pool = SizePool::default_pool());

// Violated invariants as human-readable strings; empty when valid.
std::vector<std::string> validate_sample(const PreferenceSample& sample,
                                         std::size_t max_levels = kMaxLevels);

// ---- incremental generation -------------------------------------------------

struct ManifestItem {
  std::string image_ref;
  std::string prompt;
  std::string standard_response;
};

// Used for both the fine-tuning corpus and the annotated set.
struct Manifest {
  std::vector<ManifestItem> items;
};

// Throws DataError on malformed records, an empty manifest, or a repeated
// (image_ref, prompt) pair.
Manifest load_manifest(const std::filesystem::path& path);
void check_manifest(const Manifest& manifest);

enum class SlotSource { standard, subset_model, pretrained };

struct ResponseSlot {
  std::size_t index = 0;        // position R_index in the K-level output
  SlotSource source = SlotSource::standard;
  std::size_t subset = 0;       // 1-based subset for subset_model slots, else 0
  std::size_t provisional_rank = 0;
  std::string tag;
};

struct IgPlan {
  std::size_t levels = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> part_sizes;               // K-2 entries
  std::vector<std::vector<std::size_t>> subsets;     // cumulative manifest indices
  std::vector<ResponseSlot> slots;                   // K entries
};

// Shuffles the manifest with `seed`, splits it into K-2 near-equal parts
// (cumulative boundary i at ceil(i*n/(K-2))) and returns the cumulative subsets
// plus the K response slots.
IgPlan plan_incremental_generation(const Manifest& manifest, std::size_t levels,
                                   std::uint64_t seed);

Json plan_to_json(const IgPlan& plan);

// Builds the K-level sample for one annotated item from generated outputs:
// `subset_outputs[i]` comes from the model trained on subset i+1.
PreferenceSample assemble_ig_sample(const IgPlan& plan, const std::string& sample_id,
                                    const ManifestItem& annotated,
                                    std::span<const std::string> subset_outputs,
                                    const std::string& pretrained_output);

const char* to_string(SlotSource source);

}  // namespace mlpref
