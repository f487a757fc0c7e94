#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "phrasedec/model.hpp"
#include "phrasedec/phrase_memory.hpp"

namespace phrasedec {

// One unit of the mixed derivation: a single word or a memory phrase.
struct Fragment {
    enum class Type { Word, Phrase };
    Type type = Type::Word;
    int step = 0;  // decoder step that emits this fragment
    int word_id = -1;
    int entry_index = -1;            // index into the step's memory (Phrase)
    std::vector<int> token_ids;      // Phrase tokens; Word: {word_id}
    bool memory_nonempty = false;    // gate term applies when true
    // snapshot of the step's memory for the phrase softmax (Phrase only)
    std::vector<std::vector<int>> memory_token_ids;
};

struct SegmentedReference {
    std::vector<Fragment> fragments;

    std::vector<int> reassemble() const;  // token ids, reference order
};

// Example with ids resolved and per-sentence chunk candidates precomputed.
struct TrainingExample {
    TaggedSentence source;
    std::vector<int> src_ids, tag_ids, tgt_ids;
    SentenceCandidates candidates;
};

TrainingExample prepare_example(const ParallelExample& ex, const Vocab& src_vocab,
                                const Vocab& tgt_vocab, const Vocab& tag_vocab,
                                const SmtSystem& smt);

// Greedy longest-match segmentation under teacher forcing: at each emission
// step the memory is rewritten for the gold prefix; the longest entry whose
// tokens equal the upcoming reference tokens becomes a Phrase fragment
// (score-sorted memory breaks length ties), otherwise a Word fragment.
SegmentedReference segment_reference(const Model& model, const SmtSystem& smt,
                                     const TrainingExample& ex);

// Negative log-likelihood of the segmented reference. The returned graph has
// run forward only; call backward() on it for gradients.
std::unique_ptr<SentenceGraph> sentence_loss_graph(Model& model,
                                                   const TrainingExample& ex,
                                                   const SegmentedReference& seg,
                                                   const LossOptions& opts = {});

double sentence_loss(Model& model, const TrainingExample& ex,
                     const SegmentedReference& seg, const LossOptions& opts = {});

struct TrainConfig {
    int batch_size = 16;
    int epochs = 10;
    double rho = 0.95;
    double epsilon = 1e-6;
    double clip_norm = 1.0;
    double dropout = 0.5;
    uint64_t seed = 1;
};

// Adadelta per-parameter updates over accumulated gradients.
class Adadelta {
  public:
    Adadelta(ParamList params, double rho, double epsilon);
    void step();

  private:
    ParamList params_;
    double rho_, epsilon_;
    std::vector<Tensor> avg_sq_grad_, avg_sq_delta_;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_dev_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Shuffled seeded minibatches, summed gradients, global-norm clipping,
// Adadelta updates; per-epoch dev loss; the model holds the best-dev weights
// on return. NumericError on divergence.
TrainResult train(Model& model, const SmtSystem& smt,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& dev_set,
                  const TrainConfig& config,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace phrasedec
