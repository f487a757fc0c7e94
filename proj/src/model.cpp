#include "phrasedec/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "phrasedec/checkpoint.hpp"

namespace phrasedec {

namespace {

size_t su(int v) { return static_cast<size_t>(v); }

}  // namespace

Model::Model(const ModelConfig& config)
    : cfg(config),
      emb_src("emb.src", {su(config.src_vocab_size), su(config.embed_dim)}),
      emb_tgt("emb.tgt", {su(config.tgt_vocab_size), su(config.embed_dim)}),
      emb_tag("emb.tag", {su(config.tag_vocab_size), su(config.tag_embed_dim)}),
      enc_fwd("enc.fwd", su(config.embed_dim + config.tag_embed_dim), su(config.hidden_dim)),
      enc_bwd("enc.bwd", su(config.embed_dim + config.tag_embed_dim), su(config.hidden_dim)),
      dec("dec", su(config.embed_dim + config.annotation_size()), su(config.hidden_dim)),
      phrase_rnn("phrase.rnn", su(config.embed_dim), su(config.hidden_dim)),
      att_W("att.W", {su(config.attn_dim), su(config.hidden_dim)}),
      att_U("att.U", {su(config.attn_dim), su(config.annotation_size())}),
      att_b("att.b", {su(config.attn_dim)}),
      att_v("att.v", {su(config.attn_dim)}),
      init_W("init.W", {su(config.hidden_dim), su(config.hidden_dim)}),
      init_b("init.b", {su(config.hidden_dim)}),
      out_W1("out.W1", {su(config.out_hidden_dim), su(config.readout_size())}),
      out_b1("out.b1", {su(config.out_hidden_dim)}),
      out_W2("out.W2", {su(config.tgt_vocab_size), su(config.out_hidden_dim)}),
      out_b2("out.b2", {su(config.tgt_vocab_size)}),
      balancer_net("balancer",
                   {su(config.readout_size()), su(config.balancer_hidden1),
                    su(config.balancer_hidden2), 1},
                   {Activation::Tanh, Activation::Tanh, Activation::Identity}),
      scorer_net("scorer",
                 {su(config.hidden_dim + config.readout_size()),
                  su(config.scorer_hidden1), su(config.scorer_hidden2), 1},
                 {Activation::Tanh, Activation::Tanh, Activation::Identity}) {
    if (config.src_vocab_size <= 0 || config.tgt_vocab_size <= 0 ||
        config.tag_vocab_size <= 0)
        throw ConfigError("model: vocabulary sizes must be positive");
    if (config.embed_dim <= 0 || config.hidden_dim <= 0 || config.attn_dim <= 0 ||
        config.out_hidden_dim <= 0 || config.tag_embed_dim < 0)
        throw ConfigError("model: dimensions must be positive (tag_embed_dim may be 0)");
    if (config.constant_lambda >= 0.0 &&
        (config.constant_lambda <= 0.0 || config.constant_lambda >= 1.0))
        throw ConfigError("model: constant lambda must lie strictly inside (0,1)");
}

ParamList Model::params() {
    ParamList out;
    out.push_back(&emb_src);
    out.push_back(&emb_tgt);
    out.push_back(&emb_tag);
    enc_fwd.collect(out);
    enc_bwd.collect(out);
    dec.collect(out);
    phrase_rnn.collect(out);
    for (Parameter* p : {&att_W, &att_U, &att_b, &att_v, &init_W, &init_b, &out_W1,
                         &out_b1, &out_W2, &out_b2})
        out.push_back(p);
    balancer_net.collect(out);
    scorer_net.collect(out);
    return out;
}

void Model::init_params(uint64_t seed) {
    Rng rng(seed);
    for (Parameter* p : params()) {
        // weights uniform in [-0.08, 0.08], biases zero
        if (p->value.rank() == 1 && (p->name.find(".b") != std::string::npos ||
                                     p->name == "init.b")) {
            p->value.fill(0.0);
        } else {
            p->init_uniform(rng);
        }
        p->zero_grad();
    }
}

void Model::save(const std::string& path,
                 const std::map<std::string, std::string>& extra_meta) const {
    std::vector<std::pair<std::string, const Tensor*>> entries;
    Model& self = const_cast<Model&>(*this);
    for (Parameter* p : self.params()) entries.emplace_back(p->name, &p->value);
    save_container(path, entries);

    std::ofstream meta(path + ".meta", std::ios::trunc);
    if (!meta) throw DataError("cannot write model sidecar: " + path + ".meta");
    meta << "src_vocab_size = " << cfg.src_vocab_size << '\n';
    meta << "tgt_vocab_size = " << cfg.tgt_vocab_size << '\n';
    meta << "tag_vocab_size = " << cfg.tag_vocab_size << '\n';
    meta << "embed_dim = " << cfg.embed_dim << '\n';
    meta << "tag_embed_dim = " << cfg.tag_embed_dim << '\n';
    meta << "hidden_dim = " << cfg.hidden_dim << '\n';
    meta << "attn_dim = " << cfg.attn_dim << '\n';
    meta << "out_hidden_dim = " << cfg.out_hidden_dim << '\n';
    meta << "balancer_hidden1 = " << cfg.balancer_hidden1 << '\n';
    meta << "balancer_hidden2 = " << cfg.balancer_hidden2 << '\n';
    meta << "scorer_hidden1 = " << cfg.scorer_hidden1 << '\n';
    meta << "scorer_hidden2 = " << cfg.scorer_hidden2 << '\n';
    meta << "max_phrase_len = " << cfg.max_phrase_len << '\n';
    meta << "constant_lambda = " << cfg.constant_lambda << '\n';
    for (const auto& [k, v] : extra_meta) meta << k << " = " << v << '\n';
}

Model::Loaded Model::load(const std::string& path) {
    std::ifstream metafile(path + ".meta");
    if (!metafile) throw DataError("cannot open model sidecar: " + path + ".meta");
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(metafile, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto geti = [&](const std::string& key) {
        auto it = meta.find(key);
        if (it == meta.end()) throw DataError("model sidecar missing key: " + key);
        return std::stoi(it->second);
    };
    ModelConfig cfg;
    cfg.src_vocab_size = geti("src_vocab_size");
    cfg.tgt_vocab_size = geti("tgt_vocab_size");
    cfg.tag_vocab_size = geti("tag_vocab_size");
    cfg.embed_dim = geti("embed_dim");
    cfg.tag_embed_dim = geti("tag_embed_dim");
    cfg.hidden_dim = geti("hidden_dim");
    cfg.attn_dim = geti("attn_dim");
    cfg.out_hidden_dim = geti("out_hidden_dim");
    cfg.balancer_hidden1 = geti("balancer_hidden1");
    cfg.balancer_hidden2 = geti("balancer_hidden2");
    cfg.scorer_hidden1 = geti("scorer_hidden1");
    cfg.scorer_hidden2 = geti("scorer_hidden2");
    cfg.max_phrase_len = geti("max_phrase_len");
    cfg.constant_lambda = std::stod(meta.at("constant_lambda"));

    Loaded loaded{Model(cfg), std::move(meta)};
    auto tensors = load_container(path);
    for (Parameter* p : loaded.model.params()) {
        auto it = tensors.find(p->name);
        if (it == tensors.end())
            throw DataError("checkpoint missing parameter: " + p->name);
        if (it->second.shape() != p->value.shape())
            throw DataError("checkpoint shape mismatch for: " + p->name);
        p->value = std::move(it->second);
        p->zero_grad();
    }
    return loaded;
}

Tensor Model::embed(const Parameter& table, int id) const {
    if (id < 0 || su(id) >= table.value.extent(0))
        throw std::invalid_argument("embedding lookup: id out of range for " + table.name);
    size_t d = table.value.extent(1);
    Tensor out({d});
    const double* row = table.value.data() + su(id) * d;
    for (size_t k = 0; k < d; ++k) out[k] = row[k];
    return out;
}

namespace {

void scatter_row(Parameter& table, int id, const double* grad, size_t n) {
    double* row = table.grad.data() + su(id) * table.value.extent(1);
    for (size_t k = 0; k < n; ++k) row[k] += grad[k];
}

}  // namespace

EncodedSource encode(const Model& model, std::span<const int> src_ids,
                     std::span<const int> tag_ids, bool with_tape) {
    if (src_ids.empty()) throw std::invalid_argument("encode: empty sentence");
    if (tag_ids.size() != src_ids.size())
        throw std::invalid_argument("encode: token/tag length mismatch");
    const int n = static_cast<int>(src_ids.size());
    const size_t dh = su(model.cfg.hidden_dim);

    EncodedSource enc;
    enc.src_ids.assign(src_ids.begin(), src_ids.end());
    enc.tag_ids.assign(tag_ids.begin(), tag_ids.end());
    if (with_tape) enc.tape = std::make_unique<EncoderTape>();

    std::vector<Tensor> inputs(su(n));
    for (int j = 0; j < n; ++j) {
        Tensor word = model.embed(model.emb_src, src_ids[su(j)]);
        if (model.cfg.tag_embed_dim > 0) {
            Tensor tag = model.embed(model.emb_tag, tag_ids[su(j)]);
            inputs[su(j)] = concat(word, tag);
        } else {
            inputs[su(j)] = std::move(word);
        }
    }

    std::vector<Tensor> fwd(su(n)), bwd(su(n));
    if (with_tape) {
        enc.tape->fwd.resize(su(n));
        enc.tape->bwd.resize(su(n));
    }
    Tensor h({dh});
    for (int j = 0; j < n; ++j) {
        h = model.enc_fwd.step(inputs[su(j)], h,
                               with_tape ? &enc.tape->fwd[su(j)] : nullptr);
        fwd[su(j)] = h;
    }
    h = Tensor({dh});
    for (int j = n - 1; j >= 0; --j) {
        h = model.enc_bwd.step(inputs[su(j)], h,
                               with_tape ? &enc.tape->bwd[su(j)] : nullptr);
        bwd[su(j)] = h;
    }

    enc.annotations.resize(su(n));
    enc.att_pre.resize(su(n));
    for (int j = 0; j < n; ++j) {
        enc.annotations[su(j)] = concat(fwd[su(j)], bwd[su(j)]);
        enc.att_pre[su(j)] = matvec(model.att_U.value, enc.annotations[su(j)]);
    }

    Tensor pre = model.init_b.value;
    matvec_acc(model.init_W.value, bwd[0], pre);
    enc.init_state = Tensor({dh});
    for (size_t k = 0; k < dh; ++k) enc.init_state[k] = std::tanh(pre[k]);

    if (with_tape) {
        enc.tape->inputs = std::move(inputs);
        enc.tape->hb_first = bwd[0];
    }
    return enc;
}

std::pair<Tensor, Tensor> attend(const Model& model, const Tensor& s_prev,
                                 const EncodedSource& enc, AttnCache* cache) {
    const int n = enc.length();
    if (n == 0) throw std::invalid_argument("attend: empty annotations");
    Tensor ws = model.att_b.value;
    matvec_acc(model.att_W.value, s_prev, ws);

    Tensor energies({su(n)});
    std::vector<Tensor> tanh_pre;
    if (cache) tanh_pre.resize(su(n));
    const size_t da = su(model.cfg.attn_dim);
    for (int j = 0; j < n; ++j) {
        Tensor t({da});
        const Tensor& uh = enc.att_pre[su(j)];
        for (size_t k = 0; k < da; ++k) t[k] = std::tanh(ws[k] + uh[k]);
        energies[su(j)] = dot(model.att_v.value, t);
        if (cache) tanh_pre[su(j)] = std::move(t);
    }
    Tensor alpha = softmax(energies);

    Tensor context({su(model.cfg.annotation_size())});
    for (int j = 0; j < n; ++j)
        add_scaled(context, enc.annotations[su(j)], alpha[su(j)]);

    if (cache) {
        cache->s_prev = s_prev;
        cache->tanh_pre = std::move(tanh_pre);
        cache->alpha = alpha;
    }
    return {std::move(context), std::move(alpha)};
}

DecoderStep decoder_step(const Model& model, const Tensor& s_prev, int y_prev,
                         const EncodedSource& enc, StepTape* tape) {
    auto [context, alpha] = attend(model, s_prev, enc, tape ? &tape->attn : nullptr);
    Tensor x = concat(model.embed(model.emb_tgt, y_prev), context);
    Tensor state = model.dec.step(x, s_prev, tape ? &tape->gru : nullptr);
    if (tape) tape->y_prev = y_prev;
    DecoderStep step;
    step.state = std::move(state);
    step.context = std::move(context);
    step.alpha = std::move(alpha);
    step.y_prev = y_prev;
    return step;
}

int argmax(const Tensor& t) {
    int best = 0;
    for (size_t i = 1; i < t.numel(); ++i)
        if (t[i] > t[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

namespace {

Tensor make_readout(const Model& model, const DecoderStep& step) {
    Tensor emb = model.embed(model.emb_tgt, step.y_prev);
    return concat({&step.state, &emb, &step.context});
}

}  // namespace

Tensor word_distribution(const Model& model, const DecoderStep& step) {
    Tensor readout = make_readout(model, step);
    Tensor hidden = model.out_b1.value;
    matvec_acc(model.out_W1.value, readout, hidden);
    for (size_t k = 0; k < hidden.numel(); ++k) hidden[k] = std::tanh(hidden[k]);
    Tensor logits = model.out_b2.value;
    matvec_acc(model.out_W2.value, hidden, logits);
    return softmax(logits);
}

double balancer(const Model& model, const DecoderStep& step) {
    if (model.cfg.constant_lambda >= 0.0) return model.cfg.constant_lambda;
    Tensor readout = make_readout(model, step);
    Tensor z = model.balancer_net.forward(readout);
    return sigmoid(z[0]);
}

Tensor encode_phrase(const Model& model, std::span<const int> tgt_ids) {
    if (tgt_ids.size() < 2 || tgt_ids.size() > su(model.cfg.max_phrase_len))
        throw std::invalid_argument("encode_phrase: phrase length out of range");
    Tensor h({su(model.cfg.hidden_dim)});
    for (size_t k = tgt_ids.size(); k-- > 0;) {
        Tensor x = model.embed(model.emb_tgt, tgt_ids[k]);
        h = model.phrase_rnn.step(x, h);
    }
    return h;
}

Tensor phrase_distribution(const Model& model, const DecoderStep& step,
                           const std::vector<Tensor>& phrase_reprs) {
    if (phrase_reprs.empty())
        throw std::invalid_argument("phrase_distribution: empty phrase memory");
    Tensor readout = make_readout(model, step);
    Tensor scores({phrase_reprs.size()});
    for (size_t k = 0; k < phrase_reprs.size(); ++k) {
        Tensor in = concat(phrase_reprs[k], readout);
        scores[k] = model.scorer_net.forward(in)[0];
    }
    return softmax(scores);
}

// ---------------------------------------------------------------------------
// SentenceGraph
// ---------------------------------------------------------------------------

SentenceGraph::SentenceGraph(Model& model, std::span<const int> src_ids,
                             std::span<const int> tag_ids, const LossOptions& opts)
    : model_(model),
      opts_(opts),
      dropout_rng_(opts.dropout_seed),
      enc_(encode(model, src_ids, tag_ids, /*with_tape=*/true)) {
    states_.push_back(enc_.init_state);
}

int SentenceGraph::advance(int y_prev) {
    StepTape tape;
    DecoderStep step = decoder_step(model_, states_.back(), y_prev, enc_, &tape);
    states_.push_back(step.state);
    steps_.push_back(std::move(tape));
    return static_cast<int>(steps_.size()) - 1;
}

Tensor SentenceGraph::context(int step) const {
    // context = tail of the decoder GRU input [E y_prev; c]
    const Tensor& x = steps_[su(step)].gru.x;
    size_t dw = su(model_.cfg.embed_dim);
    size_t dc = su(model_.cfg.annotation_size());
    Tensor out({dc});
    for (size_t k = 0; k < dc; ++k) out[k] = x[dw + k];
    return out;
}

const Tensor& SentenceGraph::alpha(int step) const {
    return steps_[su(step)].attn.alpha;
}

int SentenceGraph::attn_argmax(int step) const {
    return argmax(steps_[su(step)].attn.alpha);
}

Tensor SentenceGraph::readout(int step) const {
    const StepTape& tape = steps_[su(step)];
    const Tensor& x = tape.gru.x;  // [E y_prev; c]
    size_t dh = su(model_.cfg.hidden_dim);
    Tensor out({dh + x.numel()});
    const Tensor& s = states_[su(step) + 1];
    for (size_t k = 0; k < dh; ++k) out[k] = s[k];
    for (size_t k = 0; k < x.numel(); ++k) out[dh + k] = x[k];
    return out;
}

void SentenceGraph::add_word_nll(int step, int word_id) {
    WordTerm term;
    term.step = step;
    term.word = word_id;
    term.readout = readout(step);
    Tensor hidden = model_.out_b1.value;
    matvec_acc(model_.out_W1.value, term.readout, hidden);
    for (size_t k = 0; k < hidden.numel(); ++k) hidden[k] = std::tanh(hidden[k]);
    term.hidden = hidden;
    term.mask_scale = Tensor({hidden.numel()});
    double keep = 1.0 - opts_.dropout_rate;
    for (size_t k = 0; k < hidden.numel(); ++k) {
        if (opts_.dropout_rate > 0.0)
            term.mask_scale[k] = dropout_rng_.uniform() < keep ? 1.0 / keep : 0.0;
        else
            term.mask_scale[k] = 1.0;
        hidden[k] *= term.mask_scale[k];
    }
    Tensor logits = model_.out_b2.value;
    matvec_acc(model_.out_W2.value, hidden, logits);
    Tensor logp = log_softmax(logits);
    loss_ -= logp[su(word_id)];
    term.probs = Tensor({logp.numel()});
    for (size_t k = 0; k < logp.numel(); ++k) term.probs[k] = std::exp(logp[k]);
    word_terms_.push_back(std::move(term));
}

void SentenceGraph::add_gate_nll(int step, bool phrase_branch) {
    if (model_.cfg.constant_lambda >= 0.0) {
        double lam = model_.cfg.constant_lambda;
        loss_ -= std::log(phrase_branch ? lam : 1.0 - lam);
        return;  // constant gate carries no gradient
    }
    GateTerm term;
    term.step = step;
    term.phrase = phrase_branch;
    term.readout = readout(step);
    Tensor z = model_.balancer_net.forward(term.readout, &term.cache);
    term.lambda = sigmoid(z[0]);
    loss_ -= std::log(phrase_branch ? term.lambda : 1.0 - term.lambda);
    gate_terms_.push_back(std::move(term));
}

void SentenceGraph::add_phrase_nll(int step,
                                   const std::vector<std::vector<int>>& entry_ids,
                                   int chosen) {
    if (entry_ids.empty())
        throw std::invalid_argument("add_phrase_nll: empty phrase memory");
    PhraseTerm term;
    term.step = step;
    term.chosen = chosen;
    term.readout = readout(step);
    Tensor scores({entry_ids.size()});
    term.scorer_caches.resize(entry_ids.size());
    for (size_t e = 0; e < entry_ids.size(); ++e) {
        PhraseEncTape tape;
        tape.ids = entry_ids[e];
        Tensor h({su(model_.cfg.hidden_dim)});
        for (size_t k = tape.ids.size(); k-- > 0;) {
            GruCell::Cache cache;
            Tensor x = model_.embed(model_.emb_tgt, tape.ids[k]);
            h = model_.phrase_rnn.step(x, h, &cache);
            tape.caches.push_back(std::move(cache));
        }
        tape.repr = h;
        Tensor in = concat(tape.repr, term.readout);
        scores[e] = model_.scorer_net.forward(in, &term.scorer_caches[e])[0];
        term.entries.push_back(std::move(tape));
    }
    Tensor logp = log_softmax(scores);
    loss_ -= logp[su(chosen)];
    term.probs = Tensor({logp.numel()});
    for (size_t k = 0; k < logp.numel(); ++k) term.probs[k] = std::exp(logp[k]);
    phrase_terms_.push_back(std::move(term));
}

void SentenceGraph::backward_readout(int step, const Tensor& d_readout) {
    // readout = [s_i; E y_prev; c_i]
    size_t dh = su(model_.cfg.hidden_dim);
    size_t dw = su(model_.cfg.embed_dim);
    size_t dc = su(model_.cfg.annotation_size());
    for (size_t k = 0; k < dh; ++k) d_state_[su(step)][k] += d_readout[k];
    for (size_t k = 0; k < dw; ++k) d_emb_prev_[su(step)][k] += d_readout[dh + k];
    for (size_t k = 0; k < dc; ++k) d_context_[su(step)][k] += d_readout[dh + dw + k];
}

void SentenceGraph::backward() {
    const int n_steps = num_steps();
    const size_t dh = su(model_.cfg.hidden_dim);
    const size_t dw = su(model_.cfg.embed_dim);
    const size_t dc = su(model_.cfg.annotation_size());
    d_state_.assign(su(n_steps), Tensor({dh}));
    d_context_.assign(su(n_steps), Tensor({dc}));
    d_emb_prev_.assign(su(n_steps), Tensor({dw}));

    // Emission terms feed the per-step accumulators directly.
    for (WordTerm& term : word_terms_) {
        Tensor dlogits = term.probs;
        dlogits[su(term.word)] -= 1.0;
        Tensor dropped({term.hidden.numel()});
        for (size_t k = 0; k < dropped.numel(); ++k)
            dropped[k] = term.hidden[k] * term.mask_scale[k];
        outer_acc(dlogits, dropped, model_.out_W2.grad);
        add_acc(model_.out_b2.grad, dlogits);
        Tensor dhid({term.hidden.numel()});
        matvec_t_acc(model_.out_W2.value, dlogits, dhid);
        for (size_t k = 0; k < dhid.numel(); ++k)
            dhid[k] = dhid[k] * term.mask_scale[k] *
                      (1.0 - term.hidden[k] * term.hidden[k]);
        outer_acc(dhid, term.readout, model_.out_W1.grad);
        add_acc(model_.out_b1.grad, dhid);
        Tensor d_readout({term.readout.numel()});
        matvec_t_acc(model_.out_W1.value, dhid, d_readout);
        backward_readout(term.step, d_readout);
    }

    for (GateTerm& term : gate_terms_) {
        // d(-log sTerm)/dz with lambda = sigmoid(z)
        double dz = term.phrase ? -(1.0 - term.lambda) : term.lambda;
        Tensor dzt({1});
        dzt[0] = dz;
        Tensor d_readout({term.readout.numel()});
        model_.balancer_net.backward(term.cache, dzt, d_readout);
        backward_readout(term.step, d_readout);
    }

    for (PhraseTerm& term : phrase_terms_) {
        Tensor dscores = term.probs;
        dscores[su(term.chosen)] -= 1.0;
        Tensor d_readout({term.readout.numel()});
        for (size_t e = 0; e < term.entries.size(); ++e) {
            Tensor dz({1});
            dz[0] = dscores[e];
            Tensor din({su(model_.cfg.hidden_dim) + term.readout.numel()});
            model_.scorer_net.backward(term.scorer_caches[e], dz, din);
            // split [e(p); readout]
            Tensor d_repr({dh});
            for (size_t k = 0; k < dh; ++k) d_repr[k] = din[k];
            for (size_t k = 0; k < term.readout.numel(); ++k)
                d_readout[k] += din[dh + k];
            // phrase encoder backward (caches run last word -> first)
            PhraseEncTape& tape = term.entries[e];
            Tensor carry = d_repr;
            for (size_t c = tape.caches.size(); c-- > 0;) {
                Tensor dx({dw});
                Tensor next({dh});
                model_.phrase_rnn.backward(tape.caches[c], carry, dx, next);
                size_t word_index = tape.ids.size() - 1 - c;
                scatter_row(model_.emb_tgt, tape.ids[word_index], dx.data(), dw);
                carry = std::move(next);
            }
        }
        backward_readout(term.step, d_readout);
    }

    // Reverse sweep over decoder steps.
    std::vector<Tensor> d_annotations(enc_.annotations.size(), Tensor({dc}));
    Tensor d_init({dh});
    for (int i = n_steps - 1; i >= 0; --i) {
        StepTape& tape = steps_[su(i)];
        // GRU consumed x = [E y_prev; c], h_prev = s_{i-1}
        Tensor dx({dw + dc});
        Tensor dh_prev({dh});
        model_.dec.backward(tape.gru, d_state_[su(i)], dx, dh_prev);
        for (size_t k = 0; k < dw; ++k) d_emb_prev_[su(i)][k] += dx[k];
        for (size_t k = 0; k < dc; ++k) d_context_[su(i)][k] += dx[dw + k];

        // attention backward: context and (implicitly zero) alpha gradients
        AttnCache& attn = tape.attn;
        const int n = enc_.length();
        Tensor dalpha({su(n)});
        for (int j = 0; j < n; ++j) {
            dalpha[su(j)] = dot(d_context_[su(i)], enc_.annotations[su(j)]);
            add_scaled(d_annotations[su(j)], d_context_[su(i)], attn.alpha[su(j)]);
        }
        // softmax backward
        double inner = 0.0;
        for (int j = 0; j < n; ++j) inner += attn.alpha[su(j)] * dalpha[su(j)];
        Tensor ds_prev({dh});
        for (int j = 0; j < n; ++j) {
            double de = attn.alpha[su(j)] * (dalpha[su(j)] - inner);
            if (de == 0.0) continue;
            const Tensor& t = attn.tanh_pre[su(j)];
            Tensor dpre({t.numel()});
            for (size_t k = 0; k < t.numel(); ++k)
                dpre[k] = de * model_.att_v.value[k] * (1.0 - t[k] * t[k]);
            add_scaled(model_.att_v.grad, t, de);
            outer_acc(dpre, attn.s_prev, model_.att_W.grad);
            outer_acc(dpre, enc_.annotations[su(j)], model_.att_U.grad);
            add_acc(model_.att_b.grad, dpre);
            matvec_t_acc(model_.att_W.value, dpre, ds_prev);
            matvec_t_acc(model_.att_U.value, dpre, d_annotations[su(j)]);
        }

        // flow into the previous state
        Tensor d_prev_total = dh_prev;
        add_acc(d_prev_total, ds_prev);
        if (i > 0)
            add_acc(d_state_[su(i) - 1], d_prev_total);
        else
            add_acc(d_init, d_prev_total);

        // previous-word embedding scatter
        scatter_row(model_.emb_tgt, tape.y_prev, d_emb_prev_[su(i)].data(), dw);
    }

    // initial state through the tanh-affine of the backward encoder state
    EncoderTape& etape = *enc_.tape;
    Tensor dpre_init({dh});
    for (size_t k = 0; k < dh; ++k)
        dpre_init[k] = d_init[k] * (1.0 - enc_.init_state[k] * enc_.init_state[k]);
    outer_acc(dpre_init, etape.hb_first, model_.init_W.grad);
    add_acc(model_.init_b.grad, dpre_init);
    Tensor d_hb_first({dh});
    matvec_t_acc(model_.init_W.value, dpre_init, d_hb_first);

    // annotations received att_U^T contributions plus context weights; now
    // run both encoder chains
    const int n = enc_.length();
    const size_t din_sz = su(model_.cfg.embed_dim + model_.cfg.tag_embed_dim);
    std::vector<Tensor> d_inputs(su(n), Tensor({din_sz}));

    Tensor carry({dh});
    for (int j = n - 1; j >= 0; --j) {
        Tensor dhj = carry;
        for (size_t k = 0; k < dh; ++k) dhj[k] += d_annotations[su(j)][k];
        carry = Tensor({dh});
        model_.enc_fwd.backward(etape.fwd[su(j)], dhj, d_inputs[su(j)], carry);
    }
    carry = d_hb_first;
    for (int j = 0; j < n; ++j) {
        Tensor dhj = carry;
        for (size_t k = 0; k < dh; ++k) dhj[k] += d_annotations[su(j)][dh + k];
        carry = Tensor({dh});
        model_.enc_bwd.backward(etape.bwd[su(j)], dhj, d_inputs[su(j)], carry);
    }

    for (int j = 0; j < n; ++j) {
        scatter_row(model_.emb_src, enc_.src_ids[su(j)], d_inputs[su(j)].data(), dw);
        if (model_.cfg.tag_embed_dim > 0)
            scatter_row(model_.emb_tag, enc_.tag_ids[su(j)],
                        d_inputs[su(j)].data() + dw, su(model_.cfg.tag_embed_dim));
    }
}

}  // namespace phrasedec
