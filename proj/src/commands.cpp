#include "phrasedec/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "phrasedec/beam.hpp"
#include "phrasedec/eval.hpp"
#include "phrasedec/toygen.hpp"
#include "phrasedec/trainer.hpp"

namespace phrasedec {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

void ensure_dir(const std::string& path) {
    if (!path.empty()) fs::create_directories(path);
}

std::vector<SentencePair> as_pairs(const std::vector<ParallelExample>& examples) {
    std::vector<SentencePair> pairs;
    pairs.reserve(examples.size());
    for (const ParallelExample& ex : examples)
        pairs.emplace_back(ex.source.tokens, ex.target);
    return pairs;
}

std::optional<std::string> optional_path(const RunConfig& cfg, const std::string& key) {
    return cfg.is_set(key) ? std::optional<std::string>(cfg.str(key)) : std::nullopt;
}

LoadResult load_train(const RunConfig& cfg) {
    if (!cfg.is_set("train_src") || !cfg.is_set("train_tgt"))
        throw ConfigError("train_src and train_tgt must be set");
    LoadResult loaded =
        load_parallel(cfg.str("train_src"), cfg.str("train_tgt"),
                      optional_path(cfg, "train_chunks"),
                      static_cast<size_t>(cfg.geti("max_len")));
    if (loaded.dropped_over_length > 0)
        std::cerr << "dropped " << loaded.dropped_over_length
                  << " over-length pairs\n";
    if (loaded.examples.empty()) throw DataError("training corpus is empty");
    return loaded;
}

struct VocabPaths {
    std::string src, tgt, tag;
};

VocabPaths vocab_paths(const RunConfig& cfg) {
    return {cfg.path_or_default("vocab_src_file", "vocab.src"),
            cfg.path_or_default("vocab_tgt_file", "vocab.tgt"),
            cfg.path_or_default("vocab_tag_file", "vocab.tag")};
}

struct Vocabs {
    Vocab src, tgt, tag;
};

Vocabs ensure_vocabs(const RunConfig& cfg, const std::vector<ParallelExample>& examples) {
    VocabPaths paths = vocab_paths(cfg);
    Vocabs v;
    size_t cutoff = static_cast<size_t>(cfg.geti("vocab_max_size"));
    if (fs::exists(paths.src)) {
        v.src = Vocab::load(paths.src);
    } else {
        v.src = build_vocab(examples, Side::Source, cutoff);
        v.src.save(paths.src);
    }
    if (fs::exists(paths.tgt)) {
        v.tgt = Vocab::load(paths.tgt);
    } else {
        v.tgt = build_vocab(examples, Side::Target, cutoff);
        v.tgt.save(paths.tgt);
    }
    if (fs::exists(paths.tag)) {
        v.tag = Vocab::load(paths.tag);
    } else {
        v.tag = build_tag_vocab(examples);
        v.tag.save(paths.tag);
    }
    return v;
}

SmtFeatureWeights weights_from_config(const RunConfig& cfg) {
    SmtFeatureWeights w;
    w.w = {cfg.getd("weight_tgt_src"),      cfg.getd("weight_src_tgt"),
           cfg.getd("weight_lm"),           cfg.getd("weight_word_penalty"),
           cfg.getd("weight_distortion"),   cfg.getd("weight_phrase_penalty")};
    return w;
}

// Loaded SMT assets plus the system view over them.
struct SmtAssets {
    PhraseTable table;
    NGramLM lm;
    SmtSystem system;  // points into table/lm; tgt_vocab supplied by caller
};

std::unique_ptr<SmtAssets> load_smt(const RunConfig& cfg, const Vocab& tgt_vocab,
                                    bool baseline_mode) {
    auto assets = std::make_unique<SmtAssets>();
    assets->system.weights = weights_from_config(cfg);
    assets->system.top_translations = cfg.geti("top_translations");
    assets->system.memory_size = cfg.geti("memory_size");
    assets->system.tgt_vocab = &tgt_vocab;
    if (baseline_mode) return assets;  // null table: memory always empty
    assets->table = PhraseTable::load(cfg.path_or_default("phrase_table", "phrase-table"));
    if (cfg.is_set("static_dictionary"))
        assets->table.add_dictionary(cfg.str("static_dictionary"));
    assets->lm = NGramLM::load(cfg.path_or_default("lm_file", "lm.bin"));
    assets->system.table = &assets->table;
    assets->system.lm = &assets->lm;
    return assets;
}

ModelConfig model_config_from(const RunConfig& cfg, const Vocabs& vocabs) {
    ModelConfig mc;
    mc.src_vocab_size = vocabs.src.size();
    mc.tgt_vocab_size = vocabs.tgt.size();
    mc.tag_vocab_size = vocabs.tag.size();
    mc.embed_dim = cfg.geti("embed_dim");
    mc.tag_embed_dim = cfg.geti("tag_embed_dim");
    mc.hidden_dim = cfg.geti("hidden_dim");
    mc.attn_dim = cfg.geti("attn_dim");
    mc.out_hidden_dim = cfg.geti("out_hidden_dim");
    mc.balancer_hidden1 = cfg.geti("balancer_hidden1");
    mc.balancer_hidden2 = cfg.geti("balancer_hidden2");
    mc.scorer_hidden1 = cfg.geti("scorer_hidden1");
    mc.scorer_hidden2 = cfg.geti("scorer_hidden2");
    mc.max_phrase_len = cfg.geti("max_phrase_len");
    mc.constant_lambda = cfg.getd("constant_lambda");
    return mc;
}

// Index-ordered parallel map; results land by index, so outputs do not
// depend on the worker count.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= n) break;
            fn(i);
        }
    };
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

std::vector<Sentence> load_sentences(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::vector<Sentence> out;
    std::string line;
    while (std::getline(is, line)) out.push_back(split_ws(line));
    return out;
}

std::vector<std::vector<Sentence>> load_references(const RunConfig& cfg) {
    if (!cfg.is_set("test_ref")) throw ConfigError("test_ref must be set");
    std::vector<std::vector<Sentence>> refs;
    for (const std::string& path : split_on(cfg.str("test_ref"), ',')) {
        auto ref = load_sentences(trim(path));
        if (refs.empty()) {
            refs.resize(ref.size());
        } else if (refs.size() != ref.size()) {
            throw DataError("reference files are not line-aligned");
        }
        for (size_t i = 0; i < ref.size(); ++i) refs[i].push_back(std::move(ref[i]));
    }
    return refs;
}

void print_bleu(const BleuReport& report, const std::string& label) {
    std::cout << label << " BLEU = " << report.bleu * 100.0 << "  (BP="
              << report.brevity_penalty << ", lengths " << report.hyp_length << "/"
              << report.ref_length << ", precisions";
    for (double p : report.precisions) std::cout << ' ' << p * 100.0;
    std::cout << ")\n";
}

void write_bleu_json(const BleuReport& report, const std::string& path) {
    Json j;
    j["bleu"] = report.bleu;
    j["bleu_pct"] = report.bleu * 100.0;
    j["precisions"] = report.precisions;
    j["brevity_penalty"] = report.brevity_penalty;
    j["hyp_length"] = report.hyp_length;
    j["ref_length"] = report.ref_length;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write: " + path);
    os << j.dump(2) << '\n';
}

}  // namespace

int cmd_gen_toy(const RunConfig& cfg) {
    ensure_dir(cfg.str("toy_dir"));
    ToyGenConfig gen;
    gen.seed = cfg.getu("seed");
    gen.n_pairs = static_cast<size_t>(cfg.geti("toy_pairs"));
    gen.n_dev = static_cast<size_t>(cfg.geti("toy_dev"));
    gen.n_test = static_cast<size_t>(cfg.geti("toy_test"));
    gen.vocab_size = static_cast<size_t>(cfg.geti("toy_vocab"));
    gen.min_len = static_cast<size_t>(cfg.geti("toy_min_len"));
    gen.max_len = static_cast<size_t>(cfg.geti("toy_max_len"));
    gen.idiom_prob = cfg.getd("toy_idiom_prob");
    gen.second_idiom_prob = cfg.getd("toy_second_idiom_prob");

    IdiomTable idioms = default_idiom_table(
        gen.seed, gen.vocab_size, static_cast<size_t>(cfg.geti("toy_idioms")));
    ToyCorpus corpus = generate_idiom_corpus(gen, idioms);

    const std::string dir = cfg.str("toy_dir");
    write_idiom_table(idioms, dir + "/idioms.txt");
    write_corpus(corpus.train, dir + "/train.src", dir + "/train.tgt",
                 dir + "/train.chunks");
    write_corpus(corpus.dev, dir + "/dev.src", dir + "/dev.tgt", dir + "/dev.chunks");
    write_corpus(corpus.test, dir + "/test.src", dir + "/test.tgt",
                 dir + "/test.chunks");
    std::cout << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/"
              << corpus.test.size() << " train/dev/test pairs to " << dir << "\n";
    return 0;
}

int cmd_align(const RunConfig& cfg) {
    ensure_dir(cfg.str("work_dir"));
    LoadResult loaded = load_train(cfg);
    auto pairs = as_pairs(loaded.examples);
    auto alignments = ibm1_align(pairs, cfg.geti("align_iterations"));
    std::string out = cfg.path_or_default("align_file", "train.align");
    write_alignments(alignments, out);
    std::cout << "aligned " << alignments.size() << " pairs -> " << out << "\n";
    return 0;
}

int cmd_extract(const RunConfig& cfg) {
    ensure_dir(cfg.str("work_dir"));
    LoadResult loaded = load_train(cfg);
    auto pairs = as_pairs(loaded.examples);
    auto alignments =
        load_alignments(cfg.path_or_default("align_file", "train.align"), pairs);
    PhraseTable table = PhraseTable::build(pairs, alignments, cfg.geti("max_phrase_len"));
    std::string out = cfg.path_or_default("phrase_table", "phrase-table");
    table.save(out);
    std::cout << "extracted " << table.num_source_phrases() << " source phrases -> "
              << out << "\n";
    return 0;
}

int cmd_lm(const RunConfig& cfg) {
    ensure_dir(cfg.str("work_dir"));
    LoadResult loaded = load_train(cfg);
    Vocabs vocabs = ensure_vocabs(cfg, loaded.examples);
    std::vector<std::vector<int>> sentences;
    sentences.reserve(loaded.examples.size());
    for (const ParallelExample& ex : loaded.examples)
        sentences.push_back(vocabs.tgt.ids(ex.target));
    NGramLM lm(cfg.geti("lm_order"), cfg.getd("lm_discount"));
    lm.train(sentences, vocabs.tgt.size());
    std::string out = cfg.path_or_default("lm_file", "lm.bin");
    lm.save(out);
    std::cout << "trained " << lm.order() << "-gram LM over " << sentences.size()
              << " sentences -> " << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    ensure_dir(cfg.str("work_dir"));
    LoadResult loaded = load_train(cfg);
    Vocabs vocabs = ensure_vocabs(cfg, loaded.examples);
    bool baseline = cfg.getb("baseline_mode");
    auto smt = load_smt(cfg, vocabs.tgt, baseline);

    Model model(model_config_from(cfg, vocabs));
    model.init_params(cfg.getu("seed"));

    std::vector<TrainingExample> train_set;
    train_set.reserve(loaded.examples.size());
    for (const ParallelExample& ex : loaded.examples)
        train_set.push_back(
            prepare_example(ex, vocabs.src, vocabs.tgt, vocabs.tag, smt->system));

    std::vector<TrainingExample> dev_set;
    if (cfg.is_set("dev_src") && cfg.is_set("dev_tgt")) {
        LoadResult dev = load_parallel(cfg.str("dev_src"), cfg.str("dev_tgt"),
                                       optional_path(cfg, "dev_chunks"),
                                       static_cast<size_t>(cfg.geti("max_len")));
        for (const ParallelExample& ex : dev.examples)
            dev_set.push_back(
                prepare_example(ex, vocabs.src, vocabs.tgt, vocabs.tag, smt->system));
    }

    TrainConfig tc;
    tc.batch_size = cfg.geti("batch_size");
    tc.epochs = cfg.geti("epochs");
    tc.rho = cfg.getd("adadelta_rho");
    tc.epsilon = cfg.getd("adadelta_epsilon");
    tc.clip_norm = cfg.getd("clip_norm");
    tc.dropout = cfg.getd("dropout");
    tc.seed = cfg.getu("seed");

    std::string log_path = cfg.path_or_default("log_file", "train.log");
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw DataError("cannot write training log: " + log_path);
    std::string model_path = cfg.path_or_default("model_file", "model.ckpt");
    bool epoch_ckpts = cfg.getb("epoch_checkpoints");
    auto on_epoch = [&](const EpochStats& stats) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d\t%.10g\t%.10g\t%.3f", stats.epoch,
                      stats.train_loss, stats.dev_loss, stats.seconds);
        log << line << '\n';
        log.flush();
        std::cout << line << '\n';
        if (epoch_ckpts)
            model.save(model_path + ".ep" + std::to_string(stats.epoch));
    };

    TrainResult result =
        train(model, smt->system, train_set, dev_set, tc, on_epoch);

    VocabPaths paths = vocab_paths(cfg);
    std::map<std::string, std::string> meta;
    meta["vocab_src_file"] = paths.src;
    meta["vocab_tgt_file"] = paths.tgt;
    meta["vocab_tag_file"] = paths.tag;
    meta["baseline_mode"] = baseline ? "true" : "false";
    const char* wkeys[6] = {"weight_tgt_src",       "weight_src_tgt",
                            "weight_lm",            "weight_word_penalty",
                            "weight_distortion",    "weight_phrase_penalty"};
    for (const char* k : wkeys) meta[k] = cfg.str(k);
    model.save(model_path, meta);
    std::cout << "best epoch " << result.best_epoch << " (dev loss "
              << result.best_dev_loss << ") -> " << model_path << "\n";
    return 0;
}

namespace {

// Replays the chosen derivation and records the memory written at each
// emission step.
void dump_memory_trace(const Model& model, const SmtSystem& smt,
                       const SentenceCandidates& cands, const EncodedSource& enc,
                       const Hypothesis& best, size_t sentence_index,
                       const Vocab& tgt_vocab, std::ostream& os) {
    Tensor state = enc.init_state;
    int y_prev = Vocab::kBos;
    int attn_argmax = -1;
    Coverage coverage(enc.length());
    std::vector<int> history;
    int step_counter = 0;
    for (const TraceFragment& frag : best.fragments) {
        HypothesisState hs;
        hs.target_history = history;
        hs.coverage = coverage;
        hs.attn_argmax = attn_argmax;
        PhraseMemory memory = write_memory(smt, cands, hs);
        Json j;
        j["sentence"] = sentence_index;
        j["step"] = step_counter;
        Json entries = Json::array();
        for (const MemoryEntry& entry : memory.entries) {
            Json e;
            e["tgt"] = entry.tgt_tokens;
            e["span"] = {entry.span.start, entry.span.end};
            e["features"] = entry.features;
            e["score"] = entry.score;
            entries.push_back(std::move(e));
        }
        j["entries"] = std::move(entries);
        os << j.dump() << '\n';
        if (frag.is_phrase) {
            for (const MemoryEntry& entry : memory.entries) {
                if (entry.tgt_ids == frag.token_ids &&
                    entry.span.start == frag.span.start &&
                    entry.span.end == frag.span.end) {
                    coverage = apply_phrase(coverage, entry);
                    break;
                }
            }
        }
        for (int id : frag.token_ids) {
            DecoderStep ds = decoder_step(model, state, y_prev, enc);
            state = ds.state;
            attn_argmax = argmax(ds.alpha);
            y_prev = id;
            history.push_back(id);
            ++step_counter;
        }
    }
    (void)tgt_vocab;
}

}  // namespace

int cmd_translate(const RunConfig& cfg, bool write_trace) {
    ensure_dir(cfg.str("work_dir"));
    auto loaded = Model::load(cfg.path_or_default("model_file", "model.ckpt"));
    Model& model = loaded.model;
    if (cfg.getd("constant_lambda") >= 0.0)
        model = constant_lambda_mode(model, cfg.getd("constant_lambda"));

    auto meta_path = [&](const std::string& key, const std::string& fallback) {
        if (cfg.is_set(key)) return cfg.str(key);
        auto it = loaded.meta.find(key);
        if (it != loaded.meta.end() && !it->second.empty()) return it->second;
        return cfg.str("work_dir") + "/" + fallback;
    };
    Vocab src_vocab = Vocab::load(meta_path("vocab_src_file", "vocab.src"));
    Vocab tgt_vocab = Vocab::load(meta_path("vocab_tgt_file", "vocab.tgt"));
    Vocab tag_vocab = Vocab::load(meta_path("vocab_tag_file", "vocab.tag"));

    bool baseline = cfg.getb("baseline_mode");
    auto smt = load_smt(cfg, tgt_vocab, baseline);

    if (!cfg.is_set("test_src")) throw ConfigError("test_src must be set");
    auto sentences = load_source(cfg.str("test_src"), optional_path(cfg, "test_chunks"));

    BeamConfig bc;
    bc.width = cfg.geti("beam_width");
    bc.max_output_len = cfg.geti("max_output_len");

    std::vector<SearchResult> results(sentences.size());
    parallel_for(sentences.size(), cfg.geti("threads"), [&](size_t i) {
        DecodeInput input = make_decode_input(sentences[i], src_vocab, tag_vocab);
        results[i] = search(model, smt->system, input, bc);
    });

    std::string out_path = cfg.path_or_default("output_file", "output.txt");
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot write output: " + out_path);
    std::vector<SentenceTrace> traces;
    std::unique_ptr<std::ofstream> dump;
    if (cfg.is_set("dump_memory")) {
        dump = std::make_unique<std::ofstream>(cfg.str("dump_memory"), std::ios::trunc);
        if (!*dump) throw DataError("cannot write memory dump");
    }
    for (size_t i = 0; i < results.size(); ++i) {
        const Hypothesis& best = results[i].best;
        Sentence tokens;
        for (int id : best.tokens) tokens.push_back(tgt_vocab.token(id));
        out << join(tokens) << '\n';
        if (write_trace) {
            SentenceTrace trace;
            trace.tokens = tokens;
            trace.logprob = best.logprob;
            trace.truncated = best.truncated;
            for (const TraceFragment& frag : best.fragments) {
                SentenceTrace::Frag f;
                f.is_phrase = frag.is_phrase;
                for (int id : frag.token_ids) f.tokens.push_back(tgt_vocab.token(id));
                f.score = frag.score;
                if (frag.is_phrase) {
                    f.span_start = frag.span.start;
                    f.span_end = frag.span.end;
                    f.category = frag.span.category;
                }
                trace.fragments.push_back(std::move(f));
            }
            traces.push_back(std::move(trace));
        }
        if (dump) {
            DecodeInput input = make_decode_input(sentences[i], src_vocab, tag_vocab);
            EncodedSource enc = encode(model, input.src_ids, input.tag_ids);
            SentenceCandidates cands = precompute_candidates(smt->system, input.sentence);
            dump_memory_trace(model, smt->system, cands, enc, best, i, tgt_vocab, *dump);
        }
    }
    if (write_trace) {
        std::string trace_path =
            cfg.path_or_default("trace_file", "output.trace.jsonl");
        write_traces(traces, trace_path);
        std::cout << "traces -> " << trace_path << "\n";
    }
    std::cout << "translated " << results.size() << " sentences -> " << out_path
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    std::string hyp_path = cfg.path_or_default("output_file", "output.txt");
    auto hyps = load_sentences(hyp_path);
    auto refs = load_references(cfg);
    if (hyps.size() != refs.size())
        throw DataError("hypothesis/reference line counts differ");
    BleuReport report = bleu(hyps, refs);
    print_bleu(report, "corpus");
    write_bleu_json(report, hyp_path + ".bleu.json");
    return 0;
}

int cmd_analyze(const RunConfig& cfg, bool null_ablation_flag) {
    std::string trace_path = cfg.path_or_default("trace_file", "output.trace.jsonl");
    auto traces = load_traces(trace_path);
    auto refs = load_references(cfg);
    std::optional<std::vector<Sentence>> baseline;
    if (cfg.is_set("baseline_output"))
        baseline = load_sentences(cfg.str("baseline_output"));

    PhraseUsageReport report = phrase_usage(traces, refs, baseline);
    std::cout << report.to_text();
    {
        std::ofstream os(trace_path + ".usage.json", std::ios::trunc);
        if (!os) throw DataError("cannot write usage report");
        os << report.to_json() << '\n';
    }

    if (null_ablation_flag) {
        auto ablated = null_ablation(traces);
        std::string ablated_path = trace_path + ".null.txt";
        std::ofstream os(ablated_path, std::ios::trunc);
        if (!os) throw DataError("cannot write ablated output");
        for (const Sentence& s : ablated) os << join(s) << '\n';
        std::vector<Sentence> original;
        for (const SentenceTrace& t : traces) original.push_back(t.tokens);
        BleuReport base = bleu(original, refs);
        BleuReport abl = bleu(ablated, refs);
        print_bleu(base, "original");
        print_bleu(abl, "null-ablated");
        std::cout << "delta = " << (base.bleu - abl.bleu) * 100.0 << " BLEU\n";
        write_bleu_json(abl, ablated_path + ".bleu.json");
    }
    return 0;
}

}  // namespace phrasedec
