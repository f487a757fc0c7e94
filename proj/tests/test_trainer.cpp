#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phrasedec/toygen.hpp"
#include "phrasedec/trainer.hpp"

using namespace phrasedec;

namespace {

PhraseTableEntry entry(TokenSeq tgt, double lp_ts, double lp_st) {
    PhraseTableEntry e;
    e.tgt = std::move(tgt);
    e.logp_tgt_src = lp_ts;
    e.logp_src_tgt = lp_st;
    e.count = 1;
    return e;
}

ModelConfig tiny_cfg(int src_vocab, int tgt_vocab, int tag_vocab) {
    ModelConfig c;
    c.src_vocab_size = src_vocab;
    c.tgt_vocab_size = tgt_vocab;
    c.tag_vocab_size = tag_vocab;
    c.embed_dim = 5;
    c.tag_embed_dim = 2;
    c.hidden_dim = 6;
    c.attn_dim = 4;
    c.out_hidden_dim = 5;
    c.balancer_hidden1 = 4;
    c.balancer_hidden2 = 3;
    c.scorer_hidden1 = 4;
    c.scorer_hidden2 = 3;
    return c;
}

// Vocabulary, model, and SMT assets for the sentence
// "the national laboratory is" with chunk "nat-lab" on the source side.
struct TrainFixture {
    Vocab src_vocab, tgt_vocab, tag_vocab;
    PhraseTable table;
    NGramLM lm{2, 0.75};
    SmtSystem smt;
    ParallelExample example;

    TrainFixture() {
        for (const char* t : {"s-the", "s-nat", "s-lab", "s-is", "s-extra"})
            src_vocab.add(t);
        for (const char* t :
             {"the", "national", "laboratory", "is", "lab", "extra"})
            tgt_vocab.add(t);
        for (const char* t : {"O", "NP_B", "NP"}) tag_vocab.add(t);

        table.add({"s-nat", "s-lab"}, entry({"national", "laboratory"}, -0.1, -0.1));
        table.add({"s-nat", "s-lab"}, entry({"lab"}, -0.05, -0.05));
        std::vector<std::vector<int>> lm_corpus = {
            tgt_vocab.ids({"the", "national", "laboratory", "is"})};
        lm.train(lm_corpus, tgt_vocab.size());
        smt.table = &table;
        smt.lm = &lm;
        smt.tgt_vocab = &tgt_vocab;

        example.source = TaggedSentence::from_chunks(
            {"s-the", "s-nat", "s-lab", "s-is"}, {{1, 3, "NP"}});
        example.target = {"the", "national", "laboratory", "is"};
    }

    Model make_model(uint64_t seed) {
        Model m(tiny_cfg(src_vocab.size(), tgt_vocab.size(), tag_vocab.size()));
        m.init_params(seed);
        return m;
    }

    TrainingExample prepared() {
        return prepare_example(example, src_vocab, tgt_vocab, tag_vocab, smt);
    }
};

SmtSystem empty_smt(const Vocab& tgt_vocab) {
    SmtSystem smt;
    smt.tgt_vocab = &tgt_vocab;
    return smt;
}

}  // namespace

TEST_CASE("segment_reference with no table yields only word fragments") {
    TrainFixture f;
    SmtSystem none = empty_smt(f.tgt_vocab);
    TrainingExample ex =
        prepare_example(f.example, f.src_vocab, f.tgt_vocab, f.tag_vocab, none);
    Model m = f.make_model(1);
    SegmentedReference seg = segment_reference(m, none, ex);
    REQUIRE(seg.fragments.size() == 5);  // 4 words + end marker
    for (const Fragment& frag : seg.fragments) {
        CHECK(frag.type == Fragment::Type::Word);
        CHECK_FALSE(frag.memory_nonempty);
    }
    CHECK(seg.fragments.back().word_id == Vocab::kEos);
}

TEST_CASE("segment_reference emits the matching memory phrase") {
    TrainFixture f;
    TrainingExample ex = f.prepared();
    Model m = f.make_model(2);
    SegmentedReference seg = segment_reference(m, f.smt, ex);
    // fragments: the | national laboratory | is | EOS
    REQUIRE(seg.fragments.size() == 4);
    CHECK(seg.fragments[0].type == Fragment::Type::Word);
    CHECK(seg.fragments[0].word_id == f.tgt_vocab.id("the"));
    CHECK(seg.fragments[1].type == Fragment::Type::Phrase);
    CHECK(seg.fragments[1].token_ids ==
          f.tgt_vocab.ids({"national", "laboratory"}));
    CHECK(seg.fragments[1].step == 1);
    CHECK(seg.fragments[2].type == Fragment::Type::Word);
    CHECK(seg.fragments[2].word_id == f.tgt_vocab.id("is"));
    CHECK(seg.fragments[2].step == 3);  // phrase consumed two steps
    CHECK(seg.fragments[3].word_id == Vocab::kEos);
}

TEST_CASE("segment_reference prefers the longest matching entry") {
    TrainFixture f;
    f.table.add({"s-nat", "s-lab"},
                entry({"national", "laboratory", "is"}, -3.0, -3.0));
    TrainingExample ex = f.prepared();
    Model m = f.make_model(3);
    SegmentedReference seg = segment_reference(m, f.smt, ex);
    REQUIRE(seg.fragments.size() == 3);  // the | national laboratory is | EOS
    CHECK(seg.fragments[1].type == Fragment::Type::Phrase);
    CHECK(seg.fragments[1].token_ids.size() == 3);
}

TEST_CASE("segmentation reassembles to the reference") {
    TrainFixture f;
    TrainingExample ex = f.prepared();
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Model m = f.make_model(seed);
        SegmentedReference seg = segment_reference(m, f.smt, ex);
        CHECK(seg.reassemble() == ex.tgt_ids);
    }
}

TEST_CASE("uniform model pays log V per emission step") {
    TrainFixture f;
    SmtSystem none = empty_smt(f.tgt_vocab);
    ParallelExample single;
    single.source = TaggedSentence::from_chunks({"s-the"}, {});
    single.target = {"the"};
    TrainingExample ex =
        prepare_example(single, f.src_vocab, f.tgt_vocab, f.tag_vocab, none);
    Model m = f.make_model(1);
    for (Parameter* p : m.params()) p->value.fill(0.0);  // uniform softmax
    SegmentedReference seg = segment_reference(m, none, ex);
    double loss = sentence_loss(m, ex, seg);
    // one word plus the end marker, each at uniform probability
    double expect = 2.0 * std::log(static_cast<double>(f.tgt_vocab.size()));
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("empty-table loss equals the plain word cross-entropy") {
    TrainFixture f;
    SmtSystem none = empty_smt(f.tgt_vocab);
    TrainingExample ex =
        prepare_example(f.example, f.src_vocab, f.tgt_vocab, f.tag_vocab, none);
    Model m = f.make_model(7);
    SegmentedReference seg = segment_reference(m, none, ex);
    double loss = sentence_loss(m, ex, seg);
    // independent route: teacher-forced word distributions step by step
    EncodedSource enc = encode(m, ex.src_ids, ex.tag_ids);
    Tensor state = enc.init_state;
    int y_prev = Vocab::kBos;
    double expect = 0.0;
    std::vector<int> outputs = ex.tgt_ids;
    outputs.push_back(Vocab::kEos);
    for (int word : outputs) {
        DecoderStep step = decoder_step(m, state, y_prev, enc);
        Tensor probs = word_distribution(m, step);
        expect -= std::log(probs[static_cast<size_t>(word)]);
        state = step.state;
        y_prev = word;
    }
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mixed loss matches a hand expansion of the fragment terms") {
    TrainFixture f;
    TrainingExample ex = f.prepared();
    Model m = f.make_model(11);
    SegmentedReference seg = segment_reference(m, f.smt, ex);
    REQUIRE(seg.fragments.size() == 4);
    REQUIRE(seg.fragments[1].type == Fragment::Type::Phrase);
    double loss = sentence_loss(m, ex, seg);

    // independent route over inference-path ops
    EncodedSource enc = encode(m, ex.src_ids, ex.tag_ids);
    Tensor state = enc.init_state;
    int y_prev = Vocab::kBos;
    double expect = 0.0;
    auto memory_at = [&](const Fragment& frag) {
        std::vector<Tensor> reprs;
        for (const auto& ids : frag.memory_token_ids)
            reprs.push_back(encode_phrase(m, ids));
        return reprs;
    };
    for (const Fragment& frag : seg.fragments) {
        DecoderStep step = decoder_step(m, state, y_prev, enc);
        if (frag.type == Fragment::Type::Word) {
            double lambda = frag.memory_nonempty ? balancer(m, step) : 0.0;
            if (frag.memory_nonempty) expect -= std::log(1.0 - lambda);
            Tensor probs = word_distribution(m, step);
            expect -= std::log(probs[static_cast<size_t>(frag.word_id)]);
            state = step.state;
            y_prev = frag.word_id;
        } else {
            double lambda = balancer(m, step);
            expect -= std::log(lambda);
            auto reprs = memory_at(frag);
            Tensor probs = phrase_distribution(m, step, reprs);
            expect -= std::log(probs[static_cast<size_t>(frag.entry_index)]);
            // consume the phrase words
            Tensor s = state;
            int prev = y_prev;
            for (int id : frag.token_ids) {
                DecoderStep ds = decoder_step(m, s, prev, enc);
                s = ds.state;
                prev = id;
            }
            state = s;
            y_prev = prev;
        }
    }
    CHECK(loss == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("sentence_loss gradient passes finite differences through all paths") {
    TrainFixture f;
    TrainingExample ex = f.prepared();
    Model m = f.make_model(13);
    SegmentedReference seg = segment_reference(m, f.smt, ex);
    bool has_phrase = false;
    for (const Fragment& frag : seg.fragments)
        has_phrase |= frag.type == Fragment::Type::Phrase;
    REQUIRE(has_phrase);
    ParamList params = m.params();
    auto loss = [&](bool with_grad) {
        auto graph = sentence_loss_graph(m, ex, seg);
        if (with_grad) graph->backward();
        return graph->loss();
    };
    double err = check_gradients(params, loss, 1e-5);
    CAPTURE(err);
    CHECK(err < 1e-4);
}

TEST_CASE("adadelta leaves parameters unchanged under zero gradients") {
    TrainFixture f;
    Model m = f.make_model(17);
    ParamList params = m.params();
    std::vector<Tensor> before;
    for (Parameter* p : params) before.push_back(p->value);
    zero_grads(params);
    Adadelta opt(params, 0.95, 1e-6);
    opt.step();
    for (size_t i = 0; i < params.size(); ++i)
        for (size_t k = 0; k < params[i]->value.numel(); ++k)
            CHECK(params[i]->value[k] == before[i][k]);
}

TEST_CASE("adadelta moves parameters against the gradient") {
    Parameter p("p", {2});
    p.value[0] = 1.0;
    p.value[1] = -1.0;
    p.grad[0] = 0.5;
    p.grad[1] = -0.5;
    Adadelta opt({&p}, 0.95, 1e-6);
    opt.step();
    CHECK(p.value[0] < 1.0);
    CHECK(p.value[1] > -1.0);
}

namespace {

std::vector<TrainingExample> toy_training_set(size_t n, const Vocab& src_vocab,
                                              const Vocab& tgt_vocab,
                                              const Vocab& tag_vocab,
                                              const SmtSystem& smt,
                                              const std::vector<ParallelExample>& pool) {
    std::vector<TrainingExample> out;
    for (size_t i = 0; i < n && i < pool.size(); ++i)
        out.push_back(prepare_example(pool[i], src_vocab, tgt_vocab, tag_vocab, smt));
    return out;
}

}  // namespace

TEST_CASE("fixed seeds give bitwise-identical loss curves") {
    ToyGenConfig gen;
    gen.seed = 21;
    gen.n_pairs = 8;
    gen.n_dev = 2;
    gen.n_test = 2;
    IdiomTable idioms = default_idiom_table(21, gen.vocab_size, 10);
    ToyCorpus corpus = generate_idiom_corpus(gen, idioms);
    Vocab src_vocab = build_vocab(corpus.train, Side::Source);
    Vocab tgt_vocab = build_vocab(corpus.train, Side::Target);
    Vocab tag_vocab = build_tag_vocab(corpus.train);
    SmtSystem none = empty_smt(tgt_vocab);

    auto run = [&]() {
        Model m(tiny_cfg(src_vocab.size(), tgt_vocab.size(), tag_vocab.size()));
        m.init_params(99);
        auto train_set =
            toy_training_set(8, src_vocab, tgt_vocab, tag_vocab, none, corpus.train);
        auto dev_set =
            toy_training_set(2, src_vocab, tgt_vocab, tag_vocab, none, corpus.dev);
        TrainConfig tc;
        tc.batch_size = 4;
        tc.epochs = 3;
        tc.dropout = 0.5;
        tc.seed = 99;
        return train(m, none, train_set, dev_set, tc);
    };
    TrainResult a = run();
    TrainResult b = run();
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (size_t e = 0; e < a.epochs.size(); ++e) {
        CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
        CHECK(a.epochs[e].dev_loss == b.epochs[e].dev_loss);
    }
}

TEST_CASE("training halves the loss on a 20-pair toy corpus") {
    ToyGenConfig gen;
    gen.seed = 31;
    gen.n_pairs = 20;
    gen.n_dev = 2;
    gen.n_test = 2;
    IdiomTable idioms = default_idiom_table(31, gen.vocab_size, 10);
    ToyCorpus corpus = generate_idiom_corpus(gen, idioms);
    Vocab src_vocab = build_vocab(corpus.train, Side::Source);
    Vocab tgt_vocab = build_vocab(corpus.train, Side::Target);
    Vocab tag_vocab = build_tag_vocab(corpus.train);
    SmtSystem none = empty_smt(tgt_vocab);
    ModelConfig mc = tiny_cfg(src_vocab.size(), tgt_vocab.size(), tag_vocab.size());
    // enough capacity that fifty epochs of Adadelta make real progress
    mc.embed_dim = 24;
    mc.tag_embed_dim = 4;
    mc.hidden_dim = 48;
    mc.attn_dim = 24;
    mc.out_hidden_dim = 24;
    Model m(mc);
    m.init_params(7);
    auto train_set =
        toy_training_set(20, src_vocab, tgt_vocab, tag_vocab, none, corpus.train);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 50;
    tc.dropout = 0.0;
    tc.seed = 7;
    TrainResult result = train(m, none, train_set, {}, tc);
    double first = result.epochs.front().train_loss;
    double last = result.epochs.back().train_loss;
    CAPTURE(first);
    CAPTURE(last);
    CHECK(last <= 0.5 * first);
}

TEST_CASE("an empty phrase table reproduces baseline training bit-for-bit") {
    TrainFixture f;
    PhraseTable empty_table;  // loaded but containing nothing
    SmtSystem with_empty = f.smt;
    with_empty.table = &empty_table;
    SmtSystem baseline = empty_smt(f.tgt_vocab);

    auto run = [&](const SmtSystem& smt) {
        Model m = f.make_model(55);
        std::vector<TrainingExample> train_set = {
            prepare_example(f.example, f.src_vocab, f.tgt_vocab, f.tag_vocab, smt)};
        TrainConfig tc;
        tc.batch_size = 1;
        tc.epochs = 4;
        tc.dropout = 0.5;
        tc.seed = 55;
        return train(m, smt, train_set, {}, tc);
    };
    TrainResult a = run(with_empty);
    TrainResult b = run(baseline);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (size_t e = 0; e < a.epochs.size(); ++e) {
        CHECK(std::fabs(a.epochs[e].train_loss - b.epochs[e].train_loss) <= 1e-12);
    }
}

TEST_CASE("non-finite loss aborts training with a numeric error") {
    TrainFixture f;
    Model m = f.make_model(61);
    // poison a bias every encoder step reads
    m.enc_fwd.bz.value[0] = std::numeric_limits<double>::quiet_NaN();
    SmtSystem none = empty_smt(f.tgt_vocab);
    std::vector<TrainingExample> train_set = {
        prepare_example(f.example, f.src_vocab, f.tgt_vocab, f.tag_vocab, none)};
    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 1;
    tc.seed = 1;
    CHECK_THROWS_AS(train(m, none, train_set, {}, tc), NumericError);
}
