#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "phrasedec/data.hpp"

namespace phrasedec {

// Word-alignment links for one sentence pair, as (source index, target index).
struct AlignmentMatrix {
    int src_len = 0;
    int tgt_len = 0;
    std::set<std::pair<int, int>> links;

    bool operator==(const AlignmentMatrix&) const = default;
};

using TokenSeq = std::vector<std::string>;
using SentencePair = std::pair<TokenSeq, TokenSeq>;  // (source, target)

// Sparse lexical translation table t(target word | source word).
class LexicalTable {
  public:
    double prob(const std::string& src, const std::string& tgt) const;
    // EM over co-occurring pairs, no null word.
    static LexicalTable train(const std::vector<SentencePair>& corpus, int iterations);

  private:
    std::unordered_map<std::string, std::unordered_map<std::string, double>> t_;
};

// Per target position, the best-scoring source position (ties -> lowest index).
std::vector<std::pair<int, int>> viterbi_links(const LexicalTable& table,
                                               const TokenSeq& src, const TokenSeq& tgt);

// Symmetrization: intersection, grow-diag over the 8-neighborhood restricted
// to union links touching an uncovered word, then a final sweep over each
// directional set for still-uncovered words.
AlignmentMatrix grow_diag_final(int src_len, int tgt_len,
                                const std::set<std::pair<int, int>>& src_to_tgt,
                                const std::set<std::pair<int, int>>& tgt_to_src);

// Full alignment pipeline: EM in both directions, Viterbi links, grow-diag-final.
std::vector<AlignmentMatrix> ibm1_align(const std::vector<SentencePair>& corpus,
                                        int iterations);

// Pharaoh format: per line, space-separated "i-j" pairs (source-target).
void write_alignments(const std::vector<AlignmentMatrix>& alignments,
                      const std::string& path);
std::vector<AlignmentMatrix> load_alignments(const std::string& path,
                                             const std::vector<SentencePair>& corpus);

// Inclusive spans into the source/target sentences.
struct PhraseSpanPair {
    int src_start, src_end, tgt_start, tgt_end;
    auto operator<=>(const PhraseSpanPair&) const = default;
};

// All phrase pairs consistent with the alignment: no link leaves the
// rectangle, at least one link inside, both spans <= max_len. Adjacent
// unaligned source words are absorbed into extended spans.
std::vector<PhraseSpanPair> extract_phrases(const AlignmentMatrix& alignment,
                                            int max_len);

struct PhraseTableEntry {
    TokenSeq tgt;
    double logp_tgt_src = 0.0;
    double logp_src_tgt = 0.0;
    long count = 0;
};

class PhraseTable {
  public:
    // nullptr when the source phrase is absent.
    const std::vector<PhraseTableEntry>* lookup(const TokenSeq& src) const;
    void add(const TokenSeq& src, PhraseTableEntry entry);
    size_t num_source_phrases() const { return table_.size(); }
    bool empty() const { return table_.empty(); }

    // "src ||| tgt ||| logp_t_given_s logp_s_given_t count" per line.
    void save(const std::string& path) const;
    static PhraseTable load(const std::string& path);

    // Static bilingual dictionary: "src ||| tgt" per line, entered with unit
    // translation probability so entries rank ahead of extracted phrases.
    void add_dictionary(const std::string& path);

    // Relative-frequency estimation from extracted phrase instances.
    static PhraseTable build(const std::vector<SentencePair>& corpus,
                             const std::vector<AlignmentMatrix>& alignments,
                             int max_len);

    const std::map<std::string, std::vector<PhraseTableEntry>>& raw() const {
        return table_;
    }

  private:
    std::map<std::string, std::vector<PhraseTableEntry>> table_;
};

// N-gram language model over vocabulary ids with interpolated absolute
// discounting; unseen contexts back off to the next lower order, ending at a
// unigram interpolated with the uniform distribution over the vocabulary.
class NGramLM {
  public:
    NGramLM() = default;
    NGramLM(int order, double discount) : order_(order), discount_(discount) {}

    void train(const std::vector<std::vector<int>>& sentences, int vocab_size);

    // history = preceding ids, most recent last; padded with BOS internally.
    double logprob(std::span<const int> history, int word) const;
    double prob(std::span<const int> history, int word) const;

    // Sum of logprob over the words of `phrase` continuing `history`.
    double phrase_logprob(std::span<const int> history,
                          std::span<const int> phrase) const;

    double sequence_logprob(std::span<const int> sentence, bool add_eos) const;

    int order() const { return order_; }
    int vocab_size() const { return vocab_size_; }

    void save(const std::string& path) const;
    static NGramLM load(const std::string& path);

  private:
    struct ContextStat {
        double total = 0.0;
        int distinct = 0;
    };

    static std::string pack(std::span<const int> ids);

    int order_ = 4;
    double discount_ = 0.75;
    int vocab_size_ = 0;
    // counts_[k]: (k+1)-gram counts; contexts_[k]: totals for k-length contexts.
    std::vector<std::unordered_map<std::string, double>> counts_;
    std::vector<std::unordered_map<std::string, ContextStat>> contexts_;
};

// Log-linear feature weights, ordered as the feature vector:
//   [log p(tgt|src), log p(src|tgt), LM log-prob, word penalty,
//    distortion penalty, phrase penalty]
struct SmtFeatureWeights {
    static constexpr size_t kNumFeatures = 6;
    std::array<double, kNumFeatures> w = {1.0, 1.0, 1.0, -0.3, 0.3, 0.0};
};

double smt_score(std::span<const double> features, std::span<const double> weights);

}  // namespace phrasedec
