#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phrasedec/data.hpp"
#include "phrasedec/model.hpp"

namespace phrasedec {

using Sentence = std::vector<std::string>;

struct BleuReport {
    double bleu = 0.0;  // in [0,1]
    std::vector<double> precisions;
    double brevity_penalty = 1.0;
    size_t hyp_length = 0;
    size_t ref_length = 0;
};

// Corpus BLEU with multi-reference clipping, geometric mean over n-gram
// precisions, and the closest-reference-length brevity penalty.
BleuReport bleu(const std::vector<Sentence>& hypotheses,
                const std::vector<std::vector<Sentence>>& references, int max_n = 4,
                bool case_insensitive = true);

// Decoded sentence with fragment provenance, as emitted by --trace.
struct SentenceTrace {
    Sentence tokens;
    struct Frag {
        bool is_phrase = false;
        Sentence tokens;
        int span_start = -1, span_end = -1;
        std::string category;
        double score = 0.0;
    };
    std::vector<Frag> fragments;
    double logprob = 0.0;
    bool truncated = false;
};

void write_traces(const std::vector<SentenceTrace>& traces, const std::string& path);
std::vector<SentenceTrace> load_traces(const std::string& path);

struct UsageCell {
    size_t total = 0;
    size_t correct = 0;
};

struct PhraseUsageReport {
    size_t num_sentences = 0;
    size_t sentences_with_phrase = 0;
    double pct_sentences_with_phrase = 0.0;
    size_t total_phrases = 0;
    // keyed by chunk category; "New" columns only with a baseline
    std::map<std::string, UsageCell> by_category, by_category_new;
    // keyed by wordcount bucket (2, 3, 4; 5 collects >=5)
    std::map<int, UsageCell> by_length, by_length_new;
    bool has_baseline = false;

    std::string to_text() const;
    std::string to_json() const;
};

// A phrase is fully correct iff its tokens appear contiguously in some
// reference; new iff it does not appear contiguously in the baseline output
// for the same sentence.
PhraseUsageReport phrase_usage(
    const std::vector<SentenceTrace>& traces,
    const std::vector<std::vector<Sentence>>& references,
    const std::optional<std::vector<Sentence>>& baseline_outputs = std::nullopt);

// Replaces each phrase fragment with the single token "NULL"; word fragments
// and sentence count are preserved.
std::vector<Sentence> null_ablation(const std::vector<SentenceTrace>& traces);

// Model variant with the balancer overridden by a constant gate value.
Model constant_lambda_mode(const Model& model, double value);

}  // namespace phrasedec
