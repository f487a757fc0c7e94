#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phrasedec/data.hpp"
#include "phrasedec/smt.hpp"

namespace phrasedec {

// Bitset over source positions marking spans already translated by adopted
// phrases. Copied on hypothesis branch.
class Coverage {
  public:
    Coverage() = default;
    explicit Coverage(int length) : bits_(static_cast<size_t>(length), false) {}

    int length() const { return static_cast<int>(bits_.size()); }
    bool test(int i) const { return bits_[static_cast<size_t>(i)]; }
    void set(int i) { bits_[static_cast<size_t>(i)] = true; }
    int popcount() const;
    bool intersects(int start, int end) const;  // [start, end)

    bool operator==(const Coverage&) const = default;

  private:
    std::vector<bool> bits_;
};

// One candidate target phrase in the per-step memory.
struct MemoryEntry {
    TokenSeq tgt_tokens;  // length >= 2
    std::vector<int> tgt_ids;
    ChunkSpan span;
    std::array<double, SmtFeatureWeights::kNumFeatures> features{};
    double score = 0.0;
};

// Score-sorted, deduplicated, at most K entries.
struct PhraseMemory {
    std::vector<MemoryEntry> entries;

    bool empty() const { return entries.empty(); }
    size_t size() const { return entries.size(); }
};

// Decoding-state inputs to a memory write.
struct HypothesisState {
    std::vector<int> target_history;  // generated target ids so far
    Coverage coverage;
    int attn_argmax = -1;  // source position attended when the previous
                           // output token was produced; -1 at the first step
};

struct SmtSystem {
    const PhraseTable* table = nullptr;
    const NGramLM* lm = nullptr;
    const Vocab* tgt_vocab = nullptr;
    SmtFeatureWeights weights;
    int top_translations = 5;  // per-chunk candidates kept before filtering
    int memory_size = 7;       // K
};

// Exact-match table lookup for one chunk: rank by the sum of both
// translation log-probs, keep the top candidates, then drop single-word
// targets. Absent chunk -> empty list.
std::vector<const PhraseTableEntry*> candidates_for_chunk(const PhraseTable& table,
                                                          const TokenSeq& chunk_tokens,
                                                          int top_translations);

// Candidates resolved once per sentence; per-step writes recompute only the
// history/position-dependent features and the coverage filter.
struct ChunkCandidates {
    ChunkSpan span;
    std::vector<const PhraseTableEntry*> phrases;
};
struct SentenceCandidates {
    std::vector<ChunkCandidates> chunks;
};

SentenceCandidates precompute_candidates(const SmtSystem& smt,
                                         const TaggedSentence& sentence);

// Erase-and-rewrite: a pure function of (candidates, hypothesis state).
PhraseMemory write_memory(const SmtSystem& smt, const SentenceCandidates& candidates,
                          const HypothesisState& state);

// Reference path that calls candidates_for_chunk afresh; must match
// write_memory exactly.
PhraseMemory write_memory_uncached(const SmtSystem& smt, const TaggedSentence& sentence,
                                   const HypothesisState& state);

// Persistent coverage update; the entry span must be disjoint from coverage.
Coverage apply_phrase(const Coverage& coverage, const MemoryEntry& entry);

}  // namespace phrasedec
