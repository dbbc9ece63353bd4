#include "mlpref/chunker.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <unordered_set>

#include "mlpref/error.hpp"
#include "mlpref/jsonl.hpp"

namespace mlpref {

namespace fs = std::filesystem;

Stoplist default_stoplist() {
  return {"time",  "effect", "image",     "photo",  "picture", "photograph", "scene",
          "view",  "type",   "kind",      "sort",   "lot",     "thing",      "things",
          "way",   "part",   "number",    "amount", "sense",   "feeling",    "moment",
          "atmosphere", "overall", "detail", "details", "something", "anything",
          "everything", "nothing", "someone", "anyone", "everyone", "frame"};
}

Stoplist load_stoplist(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stoplist " + path.string());
  Stoplist out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::string word = line.substr(b, e - b + 1);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(std::move(word));
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

enum class Tag { det, num, adj, noun, prep, rel, aux, verb, participle, pron, conj, adv, punct, comma };

struct Token {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string lower;
  Tag tag = Tag::noun;
};

using WordSet = std::unordered_set<std::string_view>;

const WordSet& determiners() {
  static const WordSet s{"a",    "an",   "the",   "this",    "these", "those", "some",  "any",
                         "each", "every", "no",   "another", "his",   "her",   "its",   "their",
                         "my",   "our",  "your",  "several", "many",  "few",   "both",  "all",
                         "much", "more", "most",  "that"};
  return s;
}

const WordSet& numbers() {
  static const WordSet s{"one",   "two",   "three", "four",   "five",   "six",   "seven",
                         "eight", "nine",  "ten",   "eleven", "twelve", "twenty", "dozen",
                         "hundred", "first", "second", "third"};
  return s;
}

const WordSet& adjectives() {
  static const WordSet s{
      "white",  "black",   "red",     "blue",   "green",  "yellow", "orange",   "purple", "pink",
      "brown",  "gray",    "grey",    "silver", "golden", "gold",   "big",      "small",  "large",
      "little", "tall",    "short",   "long",   "old",    "new",    "young",    "dark",   "bright",
      "light",  "wooden",  "metal",   "empty",  "open",   "closed", "full",     "busy",   "sunny",
      "cloudy", "clear",   "beautiful", "huge", "tiny",   "wide",   "narrow",   "round",  "square",
      "flat",   "high",    "low",     "wet",    "dry",    "hot",    "cold",     "warm",   "cool",
      "clean",  "dirty",   "fresh",   "ripe",   "green",  "striped", "plastic", "glass",  "stone",
      "brick",  "snowy",   "grassy",  "sandy",  "rocky",  "shiny",  "fluffy",   "furry",  "soft",
      "hard",   "heavy",   "thin",    "thick",  "various", "other", "same",     "different",
      "single", "double",  "main",    "modern", "ancient", "vintage", "colorful", "multiple",
      "nearby", "distant", "left",    "right",  "upper",  "lower",  "middle",   "front",  "rear",
      "pretty", "happy",   "sad",     "calm",   "quiet",  "crowded", "rural",   "urban",  "natural",
      "several", "large-scale", "wild", "domestic"};
  return s;
}

const WordSet& prepositions() {
  static const WordSet s{"on",      "in",      "at",     "with",    "near",     "under",  "over",
                         "of",      "behind",  "beside", "by",      "from",     "to",     "into",
                         "onto",    "across",  "along",  "around",  "above",    "below",  "between",
                         "inside",  "outside", "among",  "against", "through",  "toward", "towards",
                         "beneath", "underneath", "atop", "upon",   "within",   "without", "for",
                         "about",   "beyond",  "past",   "throughout", "amid"};
  return s;
}

const WordSet& relatives() {
  static const WordSet s{"which", "that", "who", "whose", "whom", "where"};
  return s;
}

const WordSet& auxiliaries() {
  static const WordSet s{"is",   "are",  "was",  "were",  "be",    "been",  "being", "am",
                         "has",  "have", "had",  "does",  "do",    "did",   "can",   "could",
                         "will", "would", "may", "might", "should", "must", "shall"};
  return s;
}

const WordSet& verbs() {
  static const WordSet s{
      "shows",   "show",    "depicts", "depict",  "features", "feature", "contains", "contain",
      "sits",    "sit",     "sat",     "stands",  "stand",    "stood",   "holds",    "hold",
      "held",    "wears",   "wear",    "wore",    "looks",    "look",    "appears",  "appear",
      "seems",   "seem",    "lies",    "lie",     "lay",      "walks",   "walk",     "runs",
      "run",     "ran",     "rides",   "ride",    "rode",     "plays",   "play",     "eats",
      "eat",     "ate",     "displays", "display", "includes", "include", "covers",  "cover",
      "hangs",   "hang",    "hung",    "flies",   "fly",      "rests",   "rest",     "waits",
      "wait",    "moves",   "move",    "crosses", "cross",    "drives",  "drive",    "carries",
      "carry",   "leans",   "lean",    "faces",   "face",     "points",  "point",    "grows",
      "grow",    "floats",  "float",   "surrounds", "surround", "fills",  "fill",    "lines",
      "reads",   "read",    "says",    "say",     "suggests", "suggest", "indicates", "indicate",
      "creates", "create",  "adds",    "add",     "gives",    "give",    "makes",    "make",
      "captures", "capture", "reveals", "reveal", "watches",  "watch",   "uses",     "use",
      "perches", "perch",   "sleeps",  "sleep",   "swims",    "swim",    "jumps",    "jump",
      "travels", "travel",  "approaches", "approach", "occupies", "occupy", "rises", "rise",
      "stretches", "stretch", "overlooks", "overlook", "enjoys", "enjoy", "poses", "pose"};
  return s;
}

const WordSet& pronouns() {
  static const WordSet s{"it",   "they", "he",  "she",  "we",    "i",     "you",  "there",
                         "here", "them", "him", "us",   "what",  "itself", "themselves", "me",
                         "one's", "someone", "somebody"};
  return s;
}

const WordSet& conjunctions() {
  static const WordSet s{"and",   "or",     "but",      "so",   "while", "as",     "because",
                         "although", "if", "then",     "than", "nor",   "yet",    "though",
                         "whereas", "when", "whether"};
  return s;
}

const WordSet& adverbs() {
  static const WordSet s{"very",   "also",  "not",  "just",   "only", "too",   "quite", "rather",
                         "almost", "still", "even", "perhaps", "maybe", "well", "there", "here",
                         "together", "away", "up",  "down",   "out",  "off",   "back", "currently",
                         "possibly", "likely", "slightly", "clearly", "partially", "mostly"};
  return s;
}

// Nouns that the -ing / -ed suffix rules would otherwise misclassify.
const WordSet& suffix_nouns() {
  static const WordSet s{"building", "buildings", "ceiling", "clothing", "painting", "paintings",
                         "ring",     "rings",     "wing",    "wings",    "string",   "strings",
                         "thing",    "king",      "spring",  "morning",  "evening",  "railing",
                         "swing",    "bed",       "shed",    "sled",     "seed",     "sibling",
                         "pudding",  "wedding",   "feeling", "sing",     "sapling",  "parking",
                         "bedding",  "lighting",  "awning",  "awnings",  "icing",    "stuffing",
                         "sweed",    "steed",     "reed",    "weed"};
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) || c == '.' || c == ',';
  });
}

Tag classify(std::string_view w, Tag prev) {
  if (w == "that") {
    // "that" after a noun phrase opens a relative clause; elsewhere it is a
    // determiner.
    return (prev == Tag::noun || prev == Tag::comma) ? Tag::rel : Tag::det;
  }
  if (determiners().contains(w)) return Tag::det;
  if (all_digits(w) || numbers().contains(w)) return Tag::num;
  if (relatives().contains(w)) return Tag::rel;
  if (auxiliaries().contains(w)) return Tag::aux;
  if (prepositions().contains(w)) return Tag::prep;
  if (conjunctions().contains(w)) return Tag::conj;
  if (pronouns().contains(w)) return Tag::pron;
  if (adverbs().contains(w)) return Tag::adv;
  if (adjectives().contains(w)) return Tag::adj;
  if (verbs().contains(w)) return Tag::verb;
  if (suffix_nouns().contains(w)) return Tag::noun;
  if (ends_with(w, "ing") || ends_with(w, "ed") || (ends_with(w, "en") && w.size() > 5)) {
    return Tag::participle;
  }
  if (ends_with(w, "ly")) return Tag::adv;
  if (ends_with(w, "ous") || ends_with(w, "ful") || ends_with(w, "less") || ends_with(w, "ive") ||
      ends_with(w, "ish")) {
    return Tag::adj;
  }
  return Tag::noun;
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  Tag prev = Tag::punct;
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    Token t;
    t.begin = i;
    if (is_word(c)) {
      std::size_t j = i + 1;
      while (j < s.size()) {
        const unsigned char d = static_cast<unsigned char>(s[j]);
        if (is_word(d)) {
          ++j;
        } else if ((d == '\'' || d == '-') && j + 1 < s.size() &&
                   is_word(static_cast<unsigned char>(s[j + 1]))) {
          j += 2;
        } else {
          break;
        }
      }
      t.end = j;
      t.lower.assign(s.substr(i, j - i));
      std::transform(t.lower.begin(), t.lower.end(), t.lower.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      t.tag = classify(t.lower, prev);
      if (ends_with(t.lower, "'s") && t.tag != Tag::pron) t.tag = Tag::noun;
    } else {
      t.end = i + 1;
      t.lower.assign(1, static_cast<char>(c));
      t.tag = c == ',' ? Tag::comma : Tag::punct;
    }
    prev = t.tag;
    i = t.end;
    out.push_back(std::move(t));
  }
  return out;
}

struct Span {
  std::size_t first = 0;  // token indices, inclusive
  std::size_t last = 0;
  std::size_t head = 0;
};

class SentenceParser {
 public:
  SentenceParser(const std::vector<Token>& toks, const Stoplist& stop) : toks_(toks), stop_(stop) {}

  // Noun-phrase core starting at `i`: determiners, then modifiers, ending on
  // the last noun of the modifier run.
  std::optional<Span> core(std::size_t i) const {
    std::size_t j = i;
    while (j < toks_.size() && (toks_[j].tag == Tag::det || toks_[j].tag == Tag::num)) ++j;
    std::optional<std::size_t> head;
    while (j < toks_.size()) {
      const Tag t = toks_[j].tag;
      if (t == Tag::noun) {
        head = j;
      } else if (t == Tag::adj || t == Tag::num) {
      } else if (t == Tag::adv && j + 1 < toks_.size() && toks_[j + 1].tag == Tag::adj) {
      } else {
        break;
      }
      ++j;
    }
    if (!head) return std::nullopt;
    return Span{i, *head, *head};
  }

  bool stoplisted(const Span& s) const { return stop_.contains(toks_[s.head].lower); }

  // Longest extension of `np` through attached prepositional phrases,
  // participial modifiers and relative clauses.
  std::size_t extend(Span np, int depth = 0) const {
    std::size_t last = np.last;
    if (depth > 8) return last;
    for (;;) {
      const std::size_t k = last + 1;
      if (k >= toks_.size()) return last;
      const Tag t = toks_[k].tag;
      if (t == Tag::prep) {
        auto inner = core(k + 1);
        if (!inner || stoplisted(*inner)) return last;
        last = extend(*inner, depth + 1);
        continue;
      }
      if (t == Tag::participle) {
        last = clause_end(k, depth);
        continue;
      }
      if (t == Tag::rel) {
        last = clause_end(k + 1, depth);
        continue;
      }
      if (t == Tag::comma && k + 1 < toks_.size() && toks_[k + 1].tag == Tag::rel) {
        last = clause_end(k + 2, depth);
        continue;
      }
      return last;
    }
  }

 private:
  // A relative or participial clause runs to the next comma, conjunction or
  // sentence punctuation. Returns the index of its last token.
  std::size_t clause_end(std::size_t k, int depth) const {
    std::size_t last = k - 1;
    while (k < toks_.size()) {
      const Tag t = toks_[k].tag;
      if (t == Tag::comma || t == Tag::punct || t == Tag::conj || t == Tag::rel) break;
      if (t == Tag::det || t == Tag::noun || t == Tag::adj || t == Tag::num) {
        if (auto np = core(k)) {
          last = extend(*np, depth + 1);
          k = last + 1;
          continue;
        }
      }
      last = k;
      ++k;
    }
    return last;
  }

  const std::vector<Token>& toks_;
  const Stoplist& stop_;
};

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool boundary =
        i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (!boundary) continue;
    auto s = trim(text.substr(start, i + 1 - start));
    if (!s.empty()) out.emplace_back(s);
    start = i + 1;
  }
  auto tail = trim(text.substr(std::min(start, text.size())));
  if (!tail.empty()) out.emplace_back(tail);
  return out;
}

HeuristicChunker::HeuristicChunker(Stoplist stoplist) : stoplist_(std::move(stoplist)) {}

ChunkAnnotation HeuristicChunker::annotate(std::string_view text) const {
  ChunkAnnotation ann;
  ann.sentences = split_sentences(text);
  for (std::size_t si = 0; si < ann.sentences.size(); ++si) {
    const std::string& sentence = ann.sentences[si];
    const auto toks = tokenize(sentence);
    SentenceParser parser(toks, stoplist_);
    std::size_t i = 0;
    while (i < toks.size()) {
      const Tag t = toks[i].tag;
      if (t != Tag::det && t != Tag::num && t != Tag::adj && t != Tag::noun &&
          !(t == Tag::adv && i + 1 < toks.size() && toks[i + 1].tag == Tag::adj)) {
        ++i;
        continue;
      }
      auto np = parser.core(i);
      if (!np) {
        ++i;
        continue;
      }
      if (parser.stoplisted(*np)) {
        i = np->head + 1;
        continue;
      }
      const std::size_t last = parser.extend(*np);
      ann.chunks.push_back(
          {sentence.substr(toks[np->first].begin, toks[last].end - toks[np->first].begin), si});
      i = last + 1;
    }
  }
  return ann;
}

PrecomputedChunker::PrecomputedChunker(const fs::path& path) {
  for_each_jsonl(path, [&](const Json& rec, std::size_t line) {
    ChunkAnnotation ann;
    const auto text = require_field<std::string>(rec, "text", line);
    ann.sentences = require_field<std::vector<std::string>>(rec, "sentences", line);
    const auto chunks = rec.find("chunks");
    if (chunks == rec.end() || !chunks->is_array()) {
      throw DataError("line " + std::to_string(line) + ": 'chunks' must be an array");
    }
    for (const auto& c : *chunks) {
      Chunk chunk{require_field<std::string>(c, "text", line),
                  require_field<std::size_t>(c, "sentence", line)};
      if (chunk.text.empty() || chunk.sentence >= ann.sentences.size()) {
        throw DataError("line " + std::to_string(line) + ": chunk '" + chunk.text +
                        "' is empty or references a missing sentence");
      }
      ann.chunks.push_back(std::move(chunk));
    }
    table_[text] = std::move(ann);
  });
}

ChunkAnnotation PrecomputedChunker::annotate(std::string_view text) const {
  if (trim(text).empty()) return {};
  auto it = table_.find(std::string(text));
  if (it == table_.end()) {
    throw DataError("no precomputed chunk annotation for text: \"" + std::string(text) + "\"");
  }
  return it->second;
}

}  // namespace mlpref
