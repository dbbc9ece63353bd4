#include "mlpref/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_set>

#include "mlpref/error.hpp"
#include "mlpref/random.hpp"

namespace mlpref {

namespace fs = std::filesystem;

std::vector<PreferenceSample> load_candidates(const fs::path& path) {
  std::vector<PreferenceSample> out;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const Json& rec, std::size_t line) {
    PreferenceSample s;
    s.sample_id = require_field<std::string>(rec, "sample_id", line);
    s.image_ref = require_field<std::string>(rec, "image_ref", line);
    s.prompt = require_field<std::string>(rec, "prompt", line);
    const auto it = rec.find("responses");
    if (it == rec.end() || !it->is_array()) {
      throw DataError("line " + std::to_string(line) + ": 'responses' must be an array");
    }
    int order = 0;
    for (const auto& r : *it) {
      if (!r.is_object()) {
        throw DataError("line " + std::to_string(line) + ": response entries must be objects");
      }
      Response resp;
      resp.text = require_field<std::string>(r, "text", line);
      resp.tag = require_field<std::string>(r, "tag", line);
      resp.rank = r.contains("rank") ? require_field<int>(r, "rank", line) : order;
      s.responses.push_back(std::move(resp));
      ++order;
    }
    if (!seen.insert(s.sample_id).second) {
      throw DataError("line " + std::to_string(line) + ": duplicate sample_id '" + s.sample_id + "'");
    }
    out.push_back(std::move(s));
  });
  return out;
}

Json sample_to_json(const PreferenceSample& sample) {
  Json j;
  j["sample_id"] = sample.sample_id;
  j["image_ref"] = sample.image_ref;
  j["prompt"] = sample.prompt;
  Json arr = Json::array();
  for (const auto& r : sample.responses) {
    arr.push_back(Json{{"text", r.text}, {"tag", r.tag}, {"rank", r.rank}});
  }
  j["responses"] = std::move(arr);
  return j;
}

std::string serialize_candidates(std::span<const PreferenceSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    out += dump_line(sample_to_json(s));
    out += '\n';
  }
  return out;
}

PreferenceSample assemble_meg_sample(const std::string& standard,
                                     std::span<const SizedCandidate> candidates,
                                     const SizePool& pool) {
  std::vector<std::pair<std::size_t, const SizedCandidate*>> ordered;
  std::set<std::string> labels;
  for (const auto& c : candidates) {
    auto pos = std::find(pool.labels.begin(), pool.labels.end(), c.size_label);
    if (pos == pool.labels.end()) {
      throw UsageError("unknown size label '" + c.size_label + "'");
    }
    if (!labels.insert(c.size_label).second) {
      throw UsageError("duplicate size label '" + c.size_label + "'");
    }
    ordered.emplace_back(static_cast<std::size_t>(pos - pool.labels.begin()), &c);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  PreferenceSample s;
  s.responses.push_back({standard, kStandardTag, 0});
  int rank = 1;
  for (const auto& [pos, c] : ordered) {
    s.responses.push_back({c->text, c->size_label, rank++});
  }
  return s;
}

std::vector<std::string> validate_sample(const PreferenceSample& sample, std::size_t max_levels) {
  std::vector<std::string> violations;
  const std::size_t k = sample.responses.size();
  if (k < kMinLevels || k > max_levels) {
    violations.push_back("level count out of range: " + std::to_string(k) + " not in [" +
                         std::to_string(kMinLevels) + ", " + std::to_string(max_levels) + "]");
  }
  std::vector<int> ranks;
  for (const auto& r : sample.responses) ranks.push_back(r.rank);
  std::sort(ranks.begin(), ranks.end());
  bool perm = true;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] != static_cast<int>(i)) perm = false;
  }
  if (!perm) violations.push_back("ranks not a permutation of 0..K-1");

  const auto standards = std::count_if(sample.responses.begin(), sample.responses.end(),
                                       [](const Response& r) { return r.tag == kStandardTag; });
  if (standards > 1) violations.push_back("more than one response tagged 'standard'");
  return violations;
}

// ---- incremental generation -------------------------------------------------

void check_manifest(const Manifest& manifest) {
  if (manifest.items.empty()) {
    throw DataError("manifest is empty");
  }
  std::set<std::pair<std::string, std::string>> keys;
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    const auto& it = manifest.items[i];
    if (!keys.emplace(it.image_ref, it.prompt).second) {
      throw DataError("manifest item " + std::to_string(i) + ": duplicate (image_ref, prompt) pair for '" +
                      it.image_ref + "'");
    }
  }
}

Manifest load_manifest(const fs::path& path) {
  Manifest m;
  for_each_jsonl(path, [&](const Json& rec, std::size_t line) {
    m.items.push_back({require_field<std::string>(rec, "image_ref", line),
                       require_field<std::string>(rec, "prompt", line),
                       require_field<std::string>(rec, "standard_response", line)});
  });
  check_manifest(m);
  return m;
}

const char* to_string(SlotSource source) {
  switch (source) {
    case SlotSource::standard: return "standard";
    case SlotSource::subset_model: return "subset_model";
    case SlotSource::pretrained: return "pretrained";
  }
  return "?";
}

IgPlan plan_incremental_generation(const Manifest& manifest, std::size_t levels, std::uint64_t seed) {
  if (levels < 3) {
    throw UsageError("incremental generation needs K >= 3 (K-2 training subsets), got " +
                     std::to_string(levels));
  }
  if (levels > kMaxLevels) {
    throw UsageError("K = " + std::to_string(levels) + " exceeds the maximum of " +
                     std::to_string(kMaxLevels));
  }
  const std::size_t parts = levels - 2;
  const std::size_t n = manifest.items.size();
  if (n < parts) {
    throw DataError("manifest has " + std::to_string(n) + " items, fewer than the " +
                    std::to_string(parts) + " parts required");
  }
  check_manifest(manifest);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed);
  rng.shuffle(order);

  IgPlan plan;
  plan.levels = levels;
  plan.seed = seed;
  // Cumulative boundary i is ceil(i * n / parts): parts stay within one item
  // of each other and the first part takes the extra item when n % parts != 0.
  std::size_t offset = 0;
  for (std::size_t i = 1; i <= parts; ++i) {
    const std::size_t end = (i * n + parts - 1) / parts;
    plan.part_sizes.push_back(end - offset);
    offset = end;
    plan.subsets.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(offset));
  }

  plan.slots.push_back({0, SlotSource::standard, 0, 0, "R0:standard"});
  for (std::size_t i = 1; i <= parts; ++i) {
    // More training data is assumed better, so the largest subset ranks first.
    plan.slots.push_back({i, SlotSource::subset_model, i, levels - 1 - i,
                          "R" + std::to_string(i) + ":M" + std::to_string(i)});
  }
  plan.slots.push_back({levels - 1, SlotSource::pretrained, 0, levels - 1,
                        "R" + std::to_string(levels - 1) + ":M"});
  return plan;
}

Json plan_to_json(const IgPlan& plan) {
  Json j;
  j["levels"] = plan.levels;
  j["seed"] = plan.seed;
  j["part_sizes"] = plan.part_sizes;
  Json subsets = Json::array();
  for (std::size_t i = 0; i < plan.subsets.size(); ++i) {
    subsets.push_back(Json{{"index", i + 1}, {"size", plan.subsets[i].size()}, {"items", plan.subsets[i]}});
  }
  j["subsets"] = std::move(subsets);
  Json slots = Json::array();
  for (const auto& s : plan.slots) {
    slots.push_back(Json{{"index", s.index},
                         {"source", to_string(s.source)},
                         {"subset", s.subset},
                         {"provisional_rank", s.provisional_rank},
                         {"tag", s.tag}});
  }
  j["slots"] = std::move(slots);
  return j;
}

PreferenceSample assemble_ig_sample(const IgPlan& plan, const std::string& sample_id,
                                    const ManifestItem& annotated,
                                    std::span<const std::string> subset_outputs,
                                    const std::string& pretrained_output) {
  if (subset_outputs.size() != plan.subsets.size()) {
    throw UsageError("expected " + std::to_string(plan.subsets.size()) + " subset outputs, got " +
                     std::to_string(subset_outputs.size()));
  }
  PreferenceSample s;
  s.sample_id = sample_id;
  s.image_ref = annotated.image_ref;
  s.prompt = annotated.prompt;
  for (const auto& slot : plan.slots) {
    Response r;
    r.rank = static_cast<int>(slot.provisional_rank);
    switch (slot.source) {
      case SlotSource::standard:
        r.text = annotated.standard_response;
        r.tag = kStandardTag;
        break;
      case SlotSource::subset_model:
        r.text = subset_outputs[slot.subset - 1];
        r.tag = "M" + std::to_string(slot.subset);
        break;
      case SlotSource::pretrained:
        r.text = pretrained_output;
        r.tag = "M";
        break;
    }
    s.responses.push_back(std::move(r));
  }
  return s;
}

}  // namespace mlpref
