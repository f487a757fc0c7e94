#include "phrasedec/phrase_memory.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace phrasedec {

int Coverage::popcount() const {
    int n = 0;
    for (bool b : bits_)
        if (b) ++n;
    return n;
}

bool Coverage::intersects(int start, int end) const {
    for (int i = start; i < end && i < length(); ++i)
        if (test(i)) return true;
    return false;
}

std::vector<const PhraseTableEntry*> candidates_for_chunk(const PhraseTable& table,
                                                          const TokenSeq& chunk_tokens,
                                                          int top_translations) {
    const std::vector<PhraseTableEntry>* entries = table.lookup(chunk_tokens);
    std::vector<const PhraseTableEntry*> out;
    if (!entries) return out;
    std::vector<const PhraseTableEntry*> ranked;
    ranked.reserve(entries->size());
    for (const PhraseTableEntry& e : *entries) ranked.push_back(&e);
    std::sort(ranked.begin(), ranked.end(),
              [](const PhraseTableEntry* a, const PhraseTableEntry* b) {
                  double sa = a->logp_tgt_src + a->logp_src_tgt;
                  double sb = b->logp_tgt_src + b->logp_src_tgt;
                  if (sa != sb) return sa > sb;
                  return a->tgt < b->tgt;
              });
    if (static_cast<int>(ranked.size()) > top_translations)
        ranked.resize(static_cast<size_t>(top_translations));
    for (const PhraseTableEntry* e : ranked)
        if (e->tgt.size() >= 2) out.push_back(e);
    return out;
}

SentenceCandidates precompute_candidates(const SmtSystem& smt,
                                         const TaggedSentence& sentence) {
    SentenceCandidates out;
    if (!smt.table) return out;
    for (const ChunkSpan& span : sentence.chunks) {
        TokenSeq chunk(sentence.tokens.begin() + span.start,
                       sentence.tokens.begin() + span.end);
        ChunkCandidates cc;
        cc.span = span;
        cc.phrases = candidates_for_chunk(*smt.table, chunk, smt.top_translations);
        if (!cc.phrases.empty()) out.chunks.push_back(std::move(cc));
    }
    return out;
}

PhraseMemory write_memory(const SmtSystem& smt, const SentenceCandidates& candidates,
                          const HypothesisState& state) {
    PhraseMemory memory;
    if (!smt.lm || !smt.tgt_vocab) return memory;
    std::set<std::pair<std::string, std::pair<int, int>>> seen;
    for (const ChunkCandidates& cc : candidates.chunks) {
        if (state.coverage.intersects(cc.span.start, cc.span.end)) continue;
        for (const PhraseTableEntry* phrase : cc.phrases) {
            std::string key = join(phrase->tgt);
            if (!seen.insert({key, {cc.span.start, cc.span.end}}).second) continue;
            MemoryEntry entry;
            entry.tgt_tokens = phrase->tgt;
            entry.tgt_ids = smt.tgt_vocab->ids(phrase->tgt);
            entry.span = cc.span;
            entry.features[0] = phrase->logp_tgt_src;
            entry.features[1] = phrase->logp_src_tgt;
            entry.features[2] = smt.lm->phrase_logprob(state.target_history,
                                                       entry.tgt_ids);
            entry.features[3] = static_cast<double>(phrase->tgt.size());
            entry.features[4] =
                -std::abs(static_cast<double>(cc.span.start - state.attn_argmax - 1));
            entry.features[5] = 1.0;
            entry.score = smt_score(entry.features, smt.weights.w);
            memory.entries.push_back(std::move(entry));
        }
    }
    std::sort(memory.entries.begin(), memory.entries.end(),
              [](const MemoryEntry& a, const MemoryEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.tgt_tokens != b.tgt_tokens) return a.tgt_tokens < b.tgt_tokens;
                  if (a.span.start != b.span.start) return a.span.start < b.span.start;
                  return a.span.end < b.span.end;
              });
    if (static_cast<int>(memory.entries.size()) > smt.memory_size)
        memory.entries.resize(static_cast<size_t>(smt.memory_size));
    return memory;
}

PhraseMemory write_memory_uncached(const SmtSystem& smt, const TaggedSentence& sentence,
                                   const HypothesisState& state) {
    return write_memory(smt, precompute_candidates(smt, sentence), state);
}

Coverage apply_phrase(const Coverage& coverage, const MemoryEntry& entry) {
    if (coverage.intersects(entry.span.start, entry.span.end))
        throw std::invalid_argument("apply_phrase: span overlaps existing coverage");
    Coverage out = coverage;
    for (int i = entry.span.start; i < entry.span.end; ++i) out.set(i);
    return out;
}

}  // namespace phrasedec
