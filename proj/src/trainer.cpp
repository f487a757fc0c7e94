#include "phrasedec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace phrasedec {

std::vector<int> SegmentedReference::reassemble() const {
    std::vector<int> out;
    for (const Fragment& f : fragments) {
        if (f.type == Fragment::Type::Word && f.word_id == Vocab::kEos) continue;
        out.insert(out.end(), f.token_ids.begin(), f.token_ids.end());
    }
    return out;
}

TrainingExample prepare_example(const ParallelExample& ex, const Vocab& src_vocab,
                                const Vocab& tgt_vocab, const Vocab& tag_vocab,
                                const SmtSystem& smt) {
    TrainingExample out;
    out.source = ex.source;
    out.src_ids = src_vocab.ids(ex.source.tokens);
    out.tag_ids = tag_vocab.ids(ex.source.tags);
    out.tgt_ids = tgt_vocab.ids(ex.target);
    out.candidates = precompute_candidates(smt, ex.source);
    return out;
}

SegmentedReference segment_reference(const Model& model, const SmtSystem& smt,
                                     const TrainingExample& ex) {
    SegmentedReference seg;
    EncodedSource enc = encode(model, ex.src_ids, ex.tag_ids);
    Tensor state = enc.init_state;
    int y_prev = Vocab::kBos;
    int attn_argmax = -1;
    Coverage coverage(enc.length());
    const int ref_len = static_cast<int>(ex.tgt_ids.size());
    int pos = 0;
    int step_counter = 0;

    auto run_step = [&](int consume) {
        DecoderStep ds = decoder_step(model, state, y_prev, enc);
        state = ds.state;
        attn_argmax = argmax(ds.alpha);
        y_prev = consume;
        ++step_counter;
    };

    while (true) {
        HypothesisState hyp;
        hyp.target_history.assign(ex.tgt_ids.begin(), ex.tgt_ids.begin() + pos);
        hyp.coverage = coverage;
        hyp.attn_argmax = attn_argmax;
        PhraseMemory memory = write_memory(smt, ex.candidates, hyp);

        const bool eos_step = pos == ref_len;
        const MemoryEntry* match = nullptr;
        int match_index = -1;
        if (!eos_step) {
            for (size_t k = 0; k < memory.entries.size(); ++k) {
                const MemoryEntry& entry = memory.entries[k];
                const int len = static_cast<int>(entry.tgt_ids.size());
                if (pos + len > ref_len) continue;
                if (!std::equal(entry.tgt_ids.begin(), entry.tgt_ids.end(),
                                ex.tgt_ids.begin() + pos))
                    continue;
                // longest match; score order within a length comes for free
                if (!match || len > static_cast<int>(match->tgt_ids.size())) {
                    match = &entry;
                    match_index = static_cast<int>(k);
                }
            }
        }

        if (match) {
            Fragment frag;
            frag.type = Fragment::Type::Phrase;
            frag.step = step_counter;
            frag.entry_index = match_index;
            frag.token_ids = match->tgt_ids;
            frag.memory_nonempty = true;
            for (const MemoryEntry& entry : memory.entries)
                frag.memory_token_ids.push_back(entry.tgt_ids);
            coverage = apply_phrase(coverage, *match);
            const int len = static_cast<int>(match->tgt_ids.size());
            for (int k = 0; k < len; ++k) run_step(ex.tgt_ids[static_cast<size_t>(pos + k)]);
            pos += len;
            seg.fragments.push_back(std::move(frag));
        } else {
            Fragment frag;
            frag.type = Fragment::Type::Word;
            frag.step = step_counter;
            frag.word_id = eos_step ? Vocab::kEos : ex.tgt_ids[static_cast<size_t>(pos)];
            frag.token_ids = {frag.word_id};
            frag.memory_nonempty = !memory.empty();
            run_step(frag.word_id);
            seg.fragments.push_back(std::move(frag));
            if (eos_step) break;
            ++pos;
        }
    }
    return seg;
}

std::unique_ptr<SentenceGraph> sentence_loss_graph(Model& model,
                                                   const TrainingExample& ex,
                                                   const SegmentedReference& seg,
                                                   const LossOptions& opts) {
    auto graph = std::make_unique<SentenceGraph>(model, ex.src_ids, ex.tag_ids, opts);
    int y_prev = Vocab::kBos;
    for (const Fragment& frag : seg.fragments) {
        if (frag.type == Fragment::Type::Word) {
            int step = graph->advance(y_prev);
            if (frag.memory_nonempty) graph->add_gate_nll(step, false);
            graph->add_word_nll(step, frag.word_id);
            y_prev = frag.word_id;
        } else {
            int step = graph->advance(y_prev);
            graph->add_gate_nll(step, true);
            graph->add_phrase_nll(step, frag.memory_token_ids, frag.entry_index);
            y_prev = frag.token_ids[0];
            for (size_t k = 1; k < frag.token_ids.size(); ++k) {
                graph->advance(y_prev);
                y_prev = frag.token_ids[k];
            }
        }
    }
    return graph;
}

double sentence_loss(Model& model, const TrainingExample& ex,
                     const SegmentedReference& seg, const LossOptions& opts) {
    return sentence_loss_graph(model, ex, seg, opts)->loss();
}

Adadelta::Adadelta(ParamList params, double rho, double epsilon)
    : params_(std::move(params)), rho_(rho), epsilon_(epsilon) {
    for (Parameter* p : params_) {
        avg_sq_grad_.emplace_back(p->value.shape());
        avg_sq_delta_.emplace_back(p->value.shape());
    }
}

void Adadelta::step() {
    for (size_t n = 0; n < params_.size(); ++n) {
        Parameter* p = params_[n];
        Tensor& eg = avg_sq_grad_[n];
        Tensor& ed = avg_sq_delta_[n];
        for (size_t i = 0; i < p->value.numel(); ++i) {
            double g = p->grad[i];
            eg[i] = rho_ * eg[i] + (1.0 - rho_) * g * g;
            double delta = -std::sqrt(ed[i] + epsilon_) / std::sqrt(eg[i] + epsilon_) * g;
            ed[i] = rho_ * ed[i] + (1.0 - rho_) * delta * delta;
            p->value[i] += delta;
        }
    }
}

TrainResult train(Model& model, const SmtSystem& smt,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& dev_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    if (train_set.empty()) throw ConfigError("train: empty corpus");
    ParamList params = model.params();
    Adadelta optimizer(params, config.rho, config.epsilon);
    Rng shuffle_rng(config.seed ^ 0x5f0f1e2d3c4b5a69ULL);

    TrainResult result;
    std::vector<Tensor> best_values;
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double train_loss = 0.0;
        for (size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<size_t>(config.batch_size)) {
            size_t batch_end = std::min(order.size(),
                                        batch_start + static_cast<size_t>(config.batch_size));
            zero_grads(params);
            for (size_t b = batch_start; b < batch_end; ++b) {
                const TrainingExample& ex = train_set[order[b]];
                SegmentedReference seg = segment_reference(model, smt, ex);
                LossOptions opts;
                opts.dropout_rate = config.dropout;
                opts.dropout_seed = config.seed ^ (static_cast<uint64_t>(epoch) << 32) ^
                                    (order[b] * 0x9e3779b97f4a7c15ULL);
                auto graph = sentence_loss_graph(model, ex, seg, opts);
                double loss = graph->loss();
                if (!std::isfinite(loss))
                    throw NumericError("training diverged: non-finite loss at epoch " +
                                       std::to_string(epoch));
                train_loss += loss;
                graph->backward();
            }
            clip_grad_norm(params, config.clip_norm);
            optimizer.step();
        }

        double dev_loss = 0.0;
        for (const TrainingExample& ex : dev_set) {
            SegmentedReference seg = segment_reference(model, smt, ex);
            dev_loss += sentence_loss(model, ex, seg);
        }
        if (!std::isfinite(dev_loss))
            throw NumericError("training diverged: non-finite dev loss at epoch " +
                               std::to_string(epoch));

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss;
        stats.dev_loss = dev_loss;
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        result.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats);

        bool track_dev = !dev_set.empty();
        double key = track_dev ? dev_loss : train_loss;
        if (result.best_epoch < 0 || key < result.best_dev_loss) {
            result.best_epoch = epoch;
            result.best_dev_loss = key;
            best_values.clear();
            for (Parameter* p : params) best_values.push_back(p->value);
        }
    }

    if (!best_values.empty())
        for (size_t n = 0; n < params.size(); ++n) params[n]->value = best_values[n];
    return result;
}

}  // namespace phrasedec
