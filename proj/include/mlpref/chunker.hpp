#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mlpref {

struct Chunk {
  std::string text;
  std::size_t sentence = 0;

  bool operator==(const Chunk&) const = default;
};

struct ChunkAnnotation {
  std::vector<Chunk> chunks;
  std::vector<std::string> sentences;
};

using Stoplist = std::set<std::string>;

// Abstract and high-frequency nouns that never head a chunk.
Stoplist default_stoplist();

// One lowercase noun per line; '#' starts a comment.
Stoplist load_stoplist(const std::filesystem::path& path);

class Chunker {
 public:
  virtual ~Chunker() = default;
  virtual ChunkAnnotation annotate(std::string_view text) const = 0;
};

// Deterministic lexicon-driven noun-phrase chunker. A chunk is a determiner /
// modifier / noun run ending in a noun, extended through attached
// prepositional phrases and ", which/that/who ..." relative clauses.
class HeuristicChunker final : public Chunker {
 public:
  explicit HeuristicChunker(Stoplist stoplist = default_stoplist());
  ChunkAnnotation annotate(std::string_view text) const override;

  const Stoplist& stoplist() const { return stoplist_; }

 private:
  Stoplist stoplist_;
};

// Returns annotations produced by an external parser. File format (JSONL):
//   {"text": "...", "sentences": ["..."], "chunks": [{"text": "...", "sentence": 0}]}
// Lookup is by exact response text; unknown texts throw DataError.
class PrecomputedChunker final : public Chunker {
 public:
  explicit PrecomputedChunker(const std::filesystem::path& path);
  ChunkAnnotation annotate(std::string_view text) const override;

 private:
  std::unordered_map<std::string, ChunkAnnotation> table_;
};

// Sentence splitter shared by the chunkers: breaks after '.', '!' or '?'
// followed by whitespace or end of text. Returned sentences are trimmed.
std::vector<std::string> split_sentences(std::string_view text);

}  // namespace mlpref
