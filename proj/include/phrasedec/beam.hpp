#pragma once

#include <memory>
#include <vector>

#include "phrasedec/model.hpp"
#include "phrasedec/phrase_memory.hpp"

namespace phrasedec {

struct BeamConfig {
    int width = 10;
    int max_output_len = 80;
};

struct TraceFragment {
    bool is_phrase = false;
    std::vector<int> token_ids;
    ChunkSpan span;      // phrase provenance
    double score = 0.0;  // log-prob contribution of this fragment
};

// Partial translation. `state` is the decoder state computed at the step
// that emitted the last token; the next expansion consumes y_prev.
struct Hypothesis {
    std::vector<int> tokens;
    std::vector<TraceFragment> fragments;
    std::shared_ptr<const Tensor> state;
    int y_prev = Vocab::kBos;
    Coverage coverage;
    int attn_argmax = -1;
    double logprob = 0.0;
    bool finished = false;
    bool truncated = false;

    int word_count() const { return static_cast<int>(tokens.size()); }
    double normalized_score() const {
        return logprob / std::max(1, word_count());
    }
};

struct DecodeInput {
    TaggedSentence sentence;
    std::vector<int> src_ids, tag_ids;
};

DecodeInput make_decode_input(const TaggedSentence& sentence, const Vocab& src_vocab,
                              const Vocab& tag_vocab);

// One decoder step plus a fresh memory write; scores for every word in the
// vocabulary and every memory entry, normalized over the concatenation.
struct ExpandResult {
    DecoderStep step;
    PhraseMemory memory;
    double lambda = 0.0;          // meaningful when memory nonempty
    Tensor word_logp;             // per vocab id
    std::vector<double> phrase_logp;  // per memory entry
};

ExpandResult expand(const Model& model, const SmtSystem& smt,
                    const SentenceCandidates& candidates, const EncodedSource& enc,
                    const Hypothesis& hyp);

// Advances the decoder one step per phrase word (teacher-forcing the phrase),
// appends the tokens, updates coverage, and adds delta_logprob.
Hypothesis consume_phrase(const Model& model, const EncodedSource& enc,
                          const Hypothesis& hyp, const MemoryEntry& entry,
                          double delta_logprob);

struct SearchResult {
    Hypothesis best;
    std::vector<Hypothesis> nbest;  // finished, best first
};

// Beam search with beams indexed by generated-word count; final ranking by
// length-normalized log-probability with a lexicographic token tie-break.
// With no finished hypothesis within max_output_len, returns the best
// unfinished one flagged truncated.
SearchResult search(const Model& model, const SmtSystem& smt, const DecodeInput& input,
                    const BeamConfig& config);

}  // namespace phrasedec
