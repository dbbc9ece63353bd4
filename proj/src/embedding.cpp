#include "mlpref/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "mlpref/error.hpp"
#include "mlpref/jsonl.hpp"
#include "mlpref/random.hpp"

namespace mlpref {

namespace fs = std::filesystem;

double l2_norm(const Embedding& e) {
  double s = 0.0;
  for (double v : e.values) s += v * v;
  return std::sqrt(s);
}

std::vector<Embedding> embed(std::span<const std::string> texts, const EmbeddingProvider& provider) {
  if (texts.empty()) throw DataError("embedding batch is empty");
  auto out = provider.embed(texts);
  if (out.size() != texts.size()) {
    throw DataError("provider returned " + std::to_string(out.size()) + " vectors for " +
                    std::to_string(texts.size()) + " texts");
  }
  const std::size_t dim = out.front().dimension();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].dimension() != dim || dim == 0) {
      throw DataError("dimension mismatch in embedding batch at \"" + texts[i] + "\"");
    }
    const double n = l2_norm(out[i]);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DataError("zero or non-finite embedding for \"" + texts[i] + "\"");
    }
  }
  return out;
}

// ---- hash embedder ----------------------------------------------------------

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw UsageError("hash embedder dimension must be positive");
}

Embedding HashEmbedder::embed_one(const std::string& text) const {
  Embedding e{std::vector<double>(dimension_, 0.0)};
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    SplitMix64 rng(fnv1a(word.data(), word.size(), 0xcbf29ce484222325ULL ^ seed_));
    for (auto& v : e.values) v += 2.0 * rng.uniform() - 1.0;
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  const double n = l2_norm(e);
  if (n > 0.0) {
    for (auto& v : e.values) v /= n;
  }
  return e;
}

std::vector<Embedding> HashEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

// ---- precomputed table ------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'L', 'P', 'E', 'M', 'B', '0', '1'};

template <typename T>
T read_le(std::istream& in, const fs::path& path) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw DataError(path.string() + ": truncated embedding file");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t{buf[i]} << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  } else {
    return static_cast<T>(bits);
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    std::memcpy(&bits, &value, sizeof value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

}  // namespace

PrecomputedEmbeddings::PrecomputedEmbeddings(std::size_t dimension,
                                             std::unordered_map<std::string, Embedding> table)
    : dimension_(dimension), table_(std::move(table)) {
  for (const auto& [text, e] : table_) {
    if (e.dimension() != dimension_) throw DataError("dimension mismatch for \"" + text + "\"");
  }
}

PrecomputedEmbeddings::PrecomputedEmbeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (in.gcount() == sizeof magic && std::memcmp(magic, kMagic, sizeof magic) == 0) {
    dimension_ = read_le<std::uint32_t>(in, path);
    const auto count = read_le<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto len = read_le<std::uint32_t>(in, path);
      std::string text(len, '\0');
      if (!in.read(text.data(), len)) throw DataError(path.string() + ": truncated embedding file");
      Embedding e{std::vector<double>(dimension_)};
      for (auto& v : e.values) v = read_le<double>(in, path);
      table_[std::move(text)] = std::move(e);
    }
    return;
  }
  in.close();
  for_each_jsonl(path, [&](const Json& rec, std::size_t line) {
    auto text = require_field<std::string>(rec, "text", line);
    Embedding e{require_field<std::vector<double>>(rec, "vector", line)};
    if (dimension_ == 0) dimension_ = e.dimension();
    if (e.dimension() != dimension_) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": dimension mismatch");
    }
    table_[std::move(text)] = std::move(e);
  });
}

std::vector<Embedding> PrecomputedEmbeddings::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = table_.find(t);
    if (it == table_.end()) throw DataError("text missing from embedding table: \"" + t + "\"");
    out.push_back(it->second);
  }
  return out;
}

void write_embeddings_binary(const fs::path& path, std::span<const EmbeddingEntry> entries) {
  const std::size_t dim = entries.empty() ? 0 : entries.front().vector.dimension();
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  write_le<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    if (e.vector.dimension() != dim) throw DataError("dimension mismatch for \"" + e.text + "\"");
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.text.size()));
    out.write(e.text.data(), static_cast<std::streamsize>(e.text.size()));
    for (double v : e.vector.values) write_le<double>(out, v);
  }
  write_file_atomic(path, out.str());
}

// ---- remote service ---------------------------------------------------------

ServiceConfig apply_env_overrides(ServiceConfig config) {
  if (const char* url = std::getenv("MLPREF_EMBED_URL"); url && *url) config.url = url;
  if (const char* t = std::getenv("MLPREF_EMBED_TIMEOUT_MS"); t && *t) {
    char* end = nullptr;
    const long ms = std::strtol(t, &end, 10);
    if (*end != '\0' || ms <= 0) throw UsageError("MLPREF_EMBED_TIMEOUT_MS must be a positive integer");
    config.timeout = std::chrono::milliseconds(ms);
  }
  return config;
}

EmbeddingServiceClient::EmbeddingServiceClient(ServiceConfig config) : config_(std::move(config)) {
  const auto scheme = config_.url.find("://");
  if (scheme == std::string::npos) throw UsageError("embedding service URL needs a scheme: " + config_.url);
  const auto slash = config_.url.find('/', scheme + 3);
  scheme_host_port_ = config_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.url.substr(slash);
  if (config_.retries < 0) throw UsageError("retry count must be >= 0");
  if (config_.batch_size == 0) throw UsageError("batch size must be positive");
}

std::vector<Embedding> EmbeddingServiceClient::request_batch(std::span<const std::string> texts) const {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  Json body;
  body["texts"] = Json::array();
  for (const auto& t : texts) body["texts"].push_back(t);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const auto reply = Json::parse(res->body);
      std::vector<Embedding> out;
      for (const auto& v : reply.at("embeddings")) out.push_back({v.get<std::vector<double>>()});
      if (out.size() != texts.size()) {
        throw DataError("embedding service returned " + std::to_string(out.size()) + " vectors for " +
                        std::to_string(texts.size()) + " texts");
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed embedding service reply: ") + e.what());
    }
  }
  throw DataError("embedding service unreachable at " + config_.url + " after " +
                  std::to_string(config_.retries + 1) + " attempt(s): " + last_error);
}

std::vector<Embedding> EmbeddingServiceClient::embed(std::span<const std::string> texts) const {
  std::lock_guard lock(mu_);
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += config_.batch_size) {
    const auto n = std::min(config_.batch_size, texts.size() - i);
    auto part = request_batch(texts.subspan(i, n));
    for (auto& e : part) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mlpref
