#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "phrasedec/common.hpp"

namespace phrasedec {

// Token/id bijection with reserved symbols at fixed ids.
class Vocab {
  public:
    static constexpr int kUnk = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kPad = 3;
    static constexpr int kNumReserved = 4;

    Vocab();

    // id lookup with UNK fallback for out-of-shortlist tokens.
    int id(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    // Appends a non-reserved token; returns its id (existing id if present).
    int add(const std::string& token);

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    std::vector<int> ids(const std::vector<std::string>& tokens) const;

  private:
    void add_reserved_internal(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct ChunkSpan {
    int start = 0;  // inclusive
    int end = 0;    // exclusive
    std::string category;

    int length() const { return end - start; }
    bool operator==(const ChunkSpan&) const = default;
};

// Tokenized source sentence with chunk spans and per-token chunk tags.
// A chunk's first token is tagged CATEGORY_B, the rest CATEGORY; all other
// tokens carry the default tag "O". Spans are sorted and non-overlapping.
struct TaggedSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
    std::vector<ChunkSpan> chunks;

    static constexpr const char* kDefaultTag = "O";

    // Builds tags from spans; validates bounds/overlap. DataError on violation.
    static TaggedSentence from_chunks(std::vector<std::string> tokens,
                                      std::vector<ChunkSpan> chunks);

    bool operator==(const TaggedSentence&) const = default;
};

struct ParallelExample {
    TaggedSentence source;
    std::vector<std::string> target;

    bool operator==(const ParallelExample&) const = default;
};

struct LoadResult {
    std::vector<ParallelExample> examples;
    size_t dropped_over_length = 0;
};

// Line-aligned UTF-8 corpora, whitespace tokenized. Chunk file (optional):
// per line, semicolon-separated "start end CATEGORY" triples, end exclusive;
// blank line = no chunks. Pairs longer than max_len on either side are
// dropped and counted.
LoadResult load_parallel(const std::string& src_path, const std::string& tgt_path,
                         const std::optional<std::string>& chunk_path = std::nullopt,
                         size_t max_len = 50);

// Source-only variant for translation input.
std::vector<TaggedSentence> load_source(
    const std::string& src_path,
    const std::optional<std::string>& chunk_path = std::nullopt);

void write_corpus(const std::vector<ParallelExample>& examples,
                  const std::string& src_path, const std::string& tgt_path,
                  const std::optional<std::string>& chunk_path = std::nullopt);

enum class Side { Source, Target };

// Frequency-ranked vocabulary (ties broken lexicographically); max_size = 0
// means no cutoff. max_size counts non-reserved entries.
Vocab build_vocab(const std::vector<ParallelExample>& examples, Side side,
                  size_t max_size = 0);

// Tag vocabulary over the chunk-tag strings observed in the data.
Vocab build_tag_vocab(const std::vector<ParallelExample>& examples);

struct ChunkLexiconEntry {
    std::vector<std::string> pattern;
    std::string category;
};

// Leftmost-longest lexicon matching; unmatched tokens tagged "O".
TaggedSentence fallback_chunker(const std::vector<std::string>& tokens,
                                const std::vector<ChunkLexiconEntry>& lexicon);

}  // namespace phrasedec
