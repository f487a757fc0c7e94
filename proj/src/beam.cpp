#include "phrasedec/beam.hpp"

#include <algorithm>
#include <cmath>

namespace phrasedec {

DecodeInput make_decode_input(const TaggedSentence& sentence, const Vocab& src_vocab,
                              const Vocab& tag_vocab) {
    DecodeInput input;
    input.sentence = sentence;
    input.src_ids = src_vocab.ids(sentence.tokens);
    input.tag_ids = tag_vocab.ids(sentence.tags);
    return input;
}

ExpandResult expand(const Model& model, const SmtSystem& smt,
                    const SentenceCandidates& candidates, const EncodedSource& enc,
                    const Hypothesis& hyp) {
    ExpandResult res;
    res.step = decoder_step(model, *hyp.state, hyp.y_prev, enc);

    HypothesisState state;
    state.target_history = hyp.tokens;
    state.coverage = hyp.coverage;
    state.attn_argmax = hyp.attn_argmax;
    res.memory = write_memory(smt, candidates, state);

    Tensor word_probs = word_distribution(model, res.step);
    res.word_logp = Tensor({word_probs.numel()});
    if (res.memory.empty()) {
        for (size_t w = 0; w < word_probs.numel(); ++w)
            res.word_logp[w] = std::log(word_probs[w]);
        return res;
    }

    res.lambda = balancer(model, res.step);
    const double log_word_mass = std::log(1.0 - res.lambda);
    for (size_t w = 0; w < word_probs.numel(); ++w)
        res.word_logp[w] = log_word_mass + std::log(word_probs[w]);

    std::vector<Tensor> reprs;
    reprs.reserve(res.memory.size());
    for (const MemoryEntry& entry : res.memory.entries)
        reprs.push_back(encode_phrase(model, entry.tgt_ids));
    Tensor phrase_probs = phrase_distribution(model, res.step, reprs);
    const double log_phrase_mass = std::log(res.lambda);
    res.phrase_logp.resize(phrase_probs.numel());
    for (size_t k = 0; k < phrase_probs.numel(); ++k)
        res.phrase_logp[k] = log_phrase_mass + std::log(phrase_probs[k]);
    return res;
}

Hypothesis consume_phrase(const Model& model, const EncodedSource& enc,
                          const Hypothesis& hyp, const MemoryEntry& entry,
                          double delta_logprob) {
    Hypothesis out = hyp;
    Tensor state = *hyp.state;
    int prev = hyp.y_prev;
    int attn_argmax = hyp.attn_argmax;
    for (int id : entry.tgt_ids) {
        DecoderStep step = decoder_step(model, state, prev, enc);
        state = step.state;
        attn_argmax = argmax(step.alpha);
        prev = id;
    }
    out.state = std::make_shared<const Tensor>(std::move(state));
    out.y_prev = entry.tgt_ids.back();
    out.attn_argmax = attn_argmax;
    out.tokens.insert(out.tokens.end(), entry.tgt_ids.begin(), entry.tgt_ids.end());
    out.coverage = apply_phrase(hyp.coverage, entry);
    out.logprob += delta_logprob;
    TraceFragment frag;
    frag.is_phrase = true;
    frag.token_ids = entry.tgt_ids;
    frag.span = entry.span;
    frag.score = delta_logprob;
    out.fragments.push_back(std::move(frag));
    return out;
}

namespace {

// Deterministic hypothesis ordering: higher accumulated log-prob first,
// token sequence as tie-break, then derivation size.
bool better_in_beam(const Hypothesis& a, const Hypothesis& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    if (a.tokens != b.tokens) return a.tokens < b.tokens;
    return a.fragments.size() < b.fragments.size();
}

bool better_final(const Hypothesis& a, const Hypothesis& b) {
    double na = a.normalized_score(), nb = b.normalized_score();
    if (na != nb) return na > nb;
    if (a.tokens != b.tokens) return a.tokens < b.tokens;
    return a.fragments.size() < b.fragments.size();
}

}  // namespace

SearchResult search(const Model& model, const SmtSystem& smt, const DecodeInput& input,
                    const BeamConfig& config) {
    if (config.width < 1) throw ConfigError("beam width must be >= 1");
    EncodedSource enc = encode(model, input.src_ids, input.tag_ids);
    SentenceCandidates candidates = precompute_candidates(smt, input.sentence);

    const int max_len = config.max_output_len;
    std::vector<std::vector<Hypothesis>> beams(static_cast<size_t>(max_len) + 1);
    Hypothesis init;
    init.state = std::make_shared<const Tensor>(enc.init_state);
    init.coverage = Coverage(enc.length());
    beams[0].push_back(std::move(init));

    std::vector<Hypothesis> finished;
    std::vector<Hypothesis> truncation_pool;

    for (int n = 0; n <= max_len; ++n) {
        auto& beam = beams[static_cast<size_t>(n)];
        if (beam.empty()) continue;
        std::sort(beam.begin(), beam.end(), better_in_beam);
        if (static_cast<int>(beam.size()) > config.width)
            beam.resize(static_cast<size_t>(config.width));
        if (n == max_len) {
            truncation_pool.insert(truncation_pool.end(), beam.begin(), beam.end());
            break;
        }
        for (const Hypothesis& hyp : beam) {
            ExpandResult res = expand(model, smt, candidates, enc, hyp);
            auto step_state = std::make_shared<const Tensor>(res.step.state);
            int step_argmax = argmax(res.step.alpha);
            for (size_t w = 0; w < res.word_logp.numel(); ++w) {
                double delta = res.word_logp[w];
                if (!std::isfinite(delta)) continue;  // underflowed successors
                if (static_cast<int>(w) == Vocab::kEos) {
                    Hypothesis done = hyp;
                    done.logprob += delta;
                    done.finished = true;
                    finished.push_back(std::move(done));
                    continue;
                }
                Hypothesis succ = hyp;
                succ.state = step_state;
                succ.y_prev = static_cast<int>(w);
                succ.attn_argmax = step_argmax;
                succ.tokens.push_back(static_cast<int>(w));
                succ.logprob += delta;
                TraceFragment frag;
                frag.is_phrase = false;
                frag.token_ids = {static_cast<int>(w)};
                frag.score = delta;
                succ.fragments.push_back(std::move(frag));
                beams[static_cast<size_t>(n) + 1].push_back(std::move(succ));
            }
            for (size_t k = 0; k < res.memory.size(); ++k) {
                const MemoryEntry& entry = res.memory.entries[k];
                int len = static_cast<int>(entry.tgt_ids.size());
                if (n + len > max_len || !std::isfinite(res.phrase_logp[k])) continue;
                beams[static_cast<size_t>(n + len)].push_back(
                    consume_phrase(model, enc, hyp, entry, res.phrase_logp[k]));
            }
        }
    }

    SearchResult result;
    if (!finished.empty()) {
        std::sort(finished.begin(), finished.end(), better_final);
        result.best = finished.front();
        result.nbest = std::move(finished);
    } else {
        std::sort(truncation_pool.begin(), truncation_pool.end(), better_final);
        if (truncation_pool.empty())
            throw NumericError("beam search produced no hypotheses");
        result.best = truncation_pool.front();
        result.best.truncated = true;
        result.nbest = {result.best};
    }
    return result;
}

}  // namespace phrasedec
