#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mlpref {

struct Embedding {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

double l2_norm(const Embedding& e);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  // One vector per text, in order. Implementations must be safe to call from
  // several threads at once.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) const = 0;
};

// Rejects empty batches, zero vectors and mixed dimensions (DataError). All
// callers go through this rather than calling the provider directly.
std::vector<Embedding> embed(std::span<const std::string> texts, const EmbeddingProvider& provider);

// Seeded bag-of-words feature hashing: each lowercased word maps to a
// pseudo-random direction, a text is the normalized sum of its words. Equal
// texts give equal vectors, texts without shared words are near-orthogonal.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0);
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

  Embedding embed_one(const std::string& text) const;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Lookup table of precomputed vectors. Two on-disk formats are accepted:
//
//  binary (little-endian):
//    magic "MLPEMB01" | u32 dimension | u64 count |
//    count x ( u32 byte_length | UTF-8 text | dimension x f64 )
//
//  text (JSONL, detected when the magic is absent):
//    {"text": "...", "vector": [..]}
//
// Loading builds an in-memory hash index keyed by exact text.
class PrecomputedEmbeddings final : public EmbeddingProvider {
 public:
  explicit PrecomputedEmbeddings(const std::filesystem::path& path);
  PrecomputedEmbeddings(std::size_t dimension, std::unordered_map<std::string, Embedding> table);

  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, Embedding> table_;
};

struct EmbeddingEntry {
  std::string text;
  Embedding vector;
};

// Writes the binary format above. Entries must share one dimension.
void write_embeddings_binary(const std::filesystem::path& path, std::span<const EmbeddingEntry> entries);

struct ServiceConfig {
  std::string url;  // e.g. http://127.0.0.1:8080/embed
  std::chrono::milliseconds timeout{5000};
  int retries = 2;
  std::size_t batch_size = 64;
};

// Applies MLPREF_EMBED_URL and MLPREF_EMBED_TIMEOUT_MS when set.
ServiceConfig apply_env_overrides(ServiceConfig config);

// HTTP client for a remote embedding service.
//   request:  POST <path>  {"texts": ["...", ...]}
//   response: 200          {"embeddings": [[...], ...]}   (same length)
// Requests are serialized per client; failed attempts are retried up to
// `retries` extra times before a DataError is raised.
class EmbeddingServiceClient final : public EmbeddingProvider {
 public:
  explicit EmbeddingServiceClient(ServiceConfig config);
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

 private:
  std::vector<Embedding> request_batch(std::span<const std::string> texts) const;

  ServiceConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  mutable std::mutex mu_;
};

}  // namespace mlpref
