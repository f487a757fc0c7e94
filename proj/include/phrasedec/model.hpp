#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "phrasedec/numerics.hpp"

namespace phrasedec {

struct ModelConfig {
    int src_vocab_size = 0;
    int tgt_vocab_size = 0;
    int tag_vocab_size = 0;
    int embed_dim = 32;       // word embeddings, both sides
    int tag_embed_dim = 8;    // 0 disables the tag channel
    int hidden_dim = 64;      // encoder per-direction, decoder, phrase encoder
    int attn_dim = 64;
    int out_hidden_dim = 64;
    int balancer_hidden1 = 64;
    int balancer_hidden2 = 32;
    int scorer_hidden1 = 64;
    int scorer_hidden2 = 32;
    int max_phrase_len = 7;
    double constant_lambda = -1.0;  // in (0,1) overrides the balancer; <0 = dynamic

    int annotation_size() const { return 2 * hidden_dim; }
    int readout_size() const { return hidden_dim + embed_dim + annotation_size(); }
};

// Bidirectional GRU encoder over word+tag embeddings, attention GRU decoder
// with a word softmax, a balancer gate, a backward-RNN phrase encoder and a
// phrase scorer. All passes are hand-differentiated.
struct Model {
    ModelConfig cfg;

    Parameter emb_src;  // {V_src, dw}
    Parameter emb_tgt;  // {V_tgt, dw}, shared by decoder input & phrase encoder
    Parameter emb_tag;  // {V_tag, dt}
    GruCell enc_fwd, enc_bwd, dec, phrase_rnn;
    Parameter att_W, att_U, att_b, att_v;
    Parameter init_W, init_b;
    Parameter out_W1, out_b1, out_W2, out_b2;
    FeedForward balancer_net;  // readout -> 1 (two tanh hidden layers)
    FeedForward scorer_net;    // [e(p); readout] -> 1

    explicit Model(const ModelConfig& config);

    ParamList params();  // stable registration order
    void init_params(uint64_t seed);

    // Container checkpoint plus a text sidecar (path + ".meta") holding the
    // dimensions and any extra key=value entries supplied by the caller.
    void save(const std::string& path,
              const std::map<std::string, std::string>& extra_meta = {}) const;
    struct Loaded;
    static Loaded load(const std::string& path);

    Tensor embed(const Parameter& table, int id) const;
};

struct Model::Loaded {
    Model model;
    std::map<std::string, std::string> meta;
};

struct EncoderTape {
    std::vector<Tensor> inputs;  // u_j = [E_w x_j; E_t t_j]
    std::vector<GruCell::Cache> fwd, bwd;
    Tensor hb_first;  // backward state at position 0
};

struct EncodedSource {
    std::vector<Tensor> annotations;  // h_j = [fwd_j; bwd_j]
    std::vector<Tensor> att_pre;      // att_U * h_j, reused across steps
    Tensor init_state;                // s_0 = tanh(init_W * hb_first + init_b)
    std::vector<int> src_ids, tag_ids;
    std::unique_ptr<EncoderTape> tape;  // only with with_tape

    int length() const { return static_cast<int>(annotations.size()); }
};

EncodedSource encode(const Model& model, std::span<const int> src_ids,
                     std::span<const int> tag_ids, bool with_tape = false);

struct AttnCache {
    Tensor s_prev;
    std::vector<Tensor> tanh_pre;  // tanh(att_W s + att_U h_j + att_b) per j
    Tensor alpha;
};

// Additive attention: returns (context, alpha).
std::pair<Tensor, Tensor> attend(const Model& model, const Tensor& s_prev,
                                 const EncodedSource& enc, AttnCache* cache = nullptr);

struct DecoderStep {
    Tensor state;    // s_i
    Tensor context;  // c_i
    Tensor alpha;    // length T_x, sums to 1
    int y_prev = 0;
    double lambda = 0.0;  // filled by balancer()
};

struct StepTape {
    AttnCache attn;
    GruCell::Cache gru;
    int y_prev = 0;
};

// One decoder update: attention from s_prev, then GRU over [E y_prev; c].
DecoderStep decoder_step(const Model& model, const Tensor& s_prev, int y_prev,
                         const EncodedSource& enc, StepTape* tape = nullptr);

int argmax(const Tensor& t);

// P(word | step); inference path, no dropout.
Tensor word_distribution(const Model& model, const DecoderStep& step);

// Balancing weight in (0,1); honors cfg.constant_lambda.
double balancer(const Model& model, const DecoderStep& step);

// Backward GRU over the phrase's target embeddings; final state is e(p).
Tensor encode_phrase(const Model& model, std::span<const int> tgt_ids);

// Normalized distribution over the supplied phrase representations.
Tensor phrase_distribution(const Model& model, const DecoderStep& step,
                           const std::vector<Tensor>& phrase_reprs);

struct LossOptions {
    double dropout_rate = 0.0;  // output-layer dropout, training only
    uint64_t dropout_seed = 0;
};

// Unrolled teacher-forced computation for one sentence: decoder steps plus
// emission loss terms, with a reverse sweep producing exact gradients.
class SentenceGraph {
  public:
    SentenceGraph(Model& model, std::span<const int> src_ids,
                  std::span<const int> tag_ids, const LossOptions& opts = {});

    const EncodedSource& encoded() const { return enc_; }

    // Consumes y_prev from the current state; returns the new step index.
    int advance(int y_prev);

    int num_steps() const { return static_cast<int>(steps_.size()); }
    const Tensor& state(int step) const { return states_[static_cast<size_t>(step) + 1]; }
    Tensor context(int step) const;
    const Tensor& alpha(int step) const;
    int attn_argmax(int step) const;

    void add_word_nll(int step, int word_id);
    void add_gate_nll(int step, bool phrase_branch);
    void add_phrase_nll(int step, const std::vector<std::vector<int>>& entry_ids,
                        int chosen);

    double loss() const { return loss_; }
    void backward();

  private:
    Tensor readout(int step) const;
    void backward_readout(int step, const Tensor& d_readout);

    struct WordTerm {
        int step;
        int word;
        Tensor readout, hidden, mask_scale, probs;
    };
    struct GateTerm {
        int step;
        bool phrase;
        double lambda;
        Tensor readout;
        FeedForward::Cache cache;
    };
    struct PhraseEncTape {
        std::vector<int> ids;
        std::vector<GruCell::Cache> caches;  // processing order: last word first
        Tensor repr;
    };
    struct PhraseTerm {
        int step;
        int chosen;
        Tensor readout;
        std::vector<PhraseEncTape> entries;
        std::vector<FeedForward::Cache> scorer_caches;
        Tensor probs;
    };

    Model& model_;
    LossOptions opts_;
    Rng dropout_rng_;
    EncodedSource enc_;
    std::vector<Tensor> states_;  // states_[0] = init, states_[i+1] = s at step i
    std::vector<StepTape> steps_;
    std::vector<WordTerm> word_terms_;
    std::vector<GateTerm> gate_terms_;
    std::vector<PhraseTerm> phrase_terms_;
    double loss_ = 0.0;

    // per-step gradient accumulators used by backward()
    std::vector<Tensor> d_state_, d_context_, d_emb_prev_;
};

}  // namespace phrasedec
