#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phrasedec/data.hpp"

namespace phrasedec {

// One idiom: a short source span that translates as an unsplittable
// multi-word target phrase.
struct Idiom {
    std::vector<std::string> src;  // 1-2 tokens
    std::vector<std::string> tgt;  // 2-4 tokens
    std::string category;          // chunk category (NP/VP/QP)
};

using IdiomTable = std::vector<Idiom>;

struct ToyCorpus {
    std::vector<ParallelExample> train, dev, test;
};

struct ToyGenConfig {
    uint64_t seed = 1;
    size_t n_pairs = 2000;       // training pairs; dev/test sized at ~10% each
    size_t vocab_size = 50;      // approximate per-side token inventory
    size_t n_dev = 200;
    size_t n_test = 200;
    size_t min_len = 3;          // regular-word slots per sentence
    size_t max_len = 8;
    double idiom_prob = 0.85;    // chance a sentence carries >= 1 idiom
    double second_idiom_prob = 0.35;
};

// Builds an idiom inventory over the toy vocabulary. Source spans are
// prefix-free so lexicon chunking is unambiguous. ConfigError when the
// vocabulary is too small to host the table.
IdiomTable default_idiom_table(uint64_t seed, size_t vocab_size, size_t n_idioms);

// Deterministic synthetic parallel corpus: word-for-word tokens interleaved
// with idiom spans, gold chunk annotations on idiom spans, and splits with
// no test source string occurring in train.
ToyCorpus generate_idiom_corpus(const ToyGenConfig& cfg, const IdiomTable& idioms);

// Lexicon view of the table, usable with fallback_chunker.
std::vector<ChunkLexiconEntry> idiom_lexicon(const IdiomTable& idioms);

void write_idiom_table(const IdiomTable& idioms, const std::string& path);
IdiomTable load_idiom_table(const std::string& path);

}  // namespace phrasedec
