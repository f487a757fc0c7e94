#include "phrasedec/toygen.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace phrasedec {

namespace {

std::string numbered(const char* stem, size_t i) {
    std::string s(stem);
    if (i < 10) s += '0';
    s += std::to_string(i);
    return s;
}

struct Pools {
    std::vector<std::string> reg_src, reg_tgt, idiom_src, idiom_tgt;
};

Pools make_pools(size_t vocab_size) {
    Pools p;
    size_t n_reg = std::max<size_t>(6, vocab_size / 2);
    size_t n_idiom = std::max<size_t>(6, vocab_size / 3);
    for (size_t i = 0; i < n_reg; ++i) {
        p.reg_src.push_back(numbered("w", i));
        p.reg_tgt.push_back(numbered("W", i));
    }
    for (size_t i = 0; i < n_idiom; ++i) {
        p.idiom_src.push_back(numbered("m", i));
        p.idiom_tgt.push_back(numbered("q", i));
    }
    return p;
}

}  // namespace

IdiomTable default_idiom_table(uint64_t seed, size_t vocab_size, size_t n_idioms) {
    Pools pools = make_pools(vocab_size);
    Rng rng(seed ^ 0xb10c5eedULL);

    size_t n_single = std::min(n_idioms / 4, pools.idiom_src.size() / 2);
    size_t pair_pool = pools.idiom_src.size() - n_single;
    size_t max_pairs = pair_pool * (pools.idiom_src.size() - 1);
    if (n_single + max_pairs < n_idioms || pools.idiom_tgt.size() < 4)
        throw ConfigError("vocab too small for requested idiom table");

    const char* categories[5] = {"NP", "NP", "NP", "VP", "QP"};
    IdiomTable table;
    std::set<std::vector<std::string>> used_src, used_tgt;

    auto sample_tgt = [&]() {
        for (int attempt = 0; attempt < 10000; ++attempt) {
            size_t len = 2 + rng.uniform_int(2);  // 2..3 words
            std::vector<std::string> tgt;
            for (size_t k = 0; k < len; ++k)
                tgt.push_back(pools.idiom_tgt[rng.uniform_int(pools.idiom_tgt.size())]);
            if (used_tgt.insert(tgt).second) return tgt;
        }
        throw ConfigError("vocab too small for requested idiom table");
    };

    for (size_t i = 0; i < n_idioms; ++i) {
        Idiom idiom;
        if (i < n_single) {
            idiom.src = {pools.idiom_src[i]};
        } else {
            for (int attempt = 0;; ++attempt) {
                if (attempt >= 10000)
                    throw ConfigError("vocab too small for requested idiom table");
                std::string a =
                    pools.idiom_src[n_single + rng.uniform_int(pair_pool)];
                std::string b =
                    pools.idiom_src[rng.uniform_int(pools.idiom_src.size())];
                if (a == b) continue;
                std::vector<std::string> src = {a, b};
                if (used_src.count(src)) continue;
                idiom.src = std::move(src);
                break;
            }
        }
        used_src.insert(idiom.src);
        idiom.tgt = sample_tgt();
        idiom.category = categories[i % 5];
        table.push_back(std::move(idiom));
    }
    return table;
}

ToyCorpus generate_idiom_corpus(const ToyGenConfig& cfg, const IdiomTable& idioms) {
    if (idioms.empty()) throw ConfigError("idiom table is empty");
    std::set<std::string> table_src_tokens;
    for (const Idiom& idiom : idioms) {
        if (idiom.src.empty() || idiom.tgt.size() < 2 || idiom.tgt.size() > 4)
            throw ConfigError("idiom table entry has bad span lengths");
        for (const std::string& t : idiom.src) table_src_tokens.insert(t);
    }
    if (table_src_tokens.size() + 4 > cfg.vocab_size)
        throw ConfigError("vocab too small for idiom table (" +
                          std::to_string(table_src_tokens.size()) +
                          " idiom tokens vs vocab " + std::to_string(cfg.vocab_size) +
                          ")");
    Pools pools = make_pools(cfg.vocab_size);

    Rng rng(cfg.seed);
    std::set<std::string> seen_sources;
    std::vector<ParallelExample> all;
    size_t total = cfg.n_pairs + cfg.n_dev + cfg.n_test;

    while (all.size() < total) {
        size_t n_slots = cfg.min_len + rng.uniform_int(cfg.max_len - cfg.min_len + 1);
        size_t n_idiom = 0;
        if (rng.uniform() < cfg.idiom_prob) {
            n_idiom = 1;
            if (rng.uniform() < cfg.second_idiom_prob) n_idiom = 2;
        }
        // slot plan: -1 = regular word, otherwise idiom index
        std::vector<long> plan(n_slots, -1);
        std::vector<size_t> positions(n_slots);
        for (size_t i = 0; i < n_slots; ++i) positions[i] = i;
        rng.shuffle(positions);
        for (size_t k = 0; k < std::min(n_idiom, n_slots); ++k)
            plan[positions[k]] = static_cast<long>(rng.uniform_int(idioms.size()));

        ParallelExample ex;
        std::vector<std::string> src, tgt;
        std::vector<ChunkSpan> chunks;
        for (long slot : plan) {
            if (slot < 0) {
                size_t w = rng.uniform_int(pools.reg_src.size());
                src.push_back(pools.reg_src[w]);
                tgt.push_back(pools.reg_tgt[w]);
            } else {
                const Idiom& idiom = idioms[static_cast<size_t>(slot)];
                ChunkSpan span;
                span.start = static_cast<int>(src.size());
                span.end = span.start + static_cast<int>(idiom.src.size());
                span.category = idiom.category;
                chunks.push_back(span);
                for (const std::string& t : idiom.src) src.push_back(t);
                for (const std::string& t : idiom.tgt) tgt.push_back(t);
            }
        }
        std::string key = join(src);
        if (!seen_sources.insert(key).second) continue;  // resample duplicates
        ex.source = TaggedSentence::from_chunks(std::move(src), std::move(chunks));
        ex.target = std::move(tgt);
        all.push_back(std::move(ex));
    }

    ToyCorpus out;
    out.train.assign(all.begin(), all.begin() + static_cast<long>(cfg.n_pairs));
    out.dev.assign(all.begin() + static_cast<long>(cfg.n_pairs),
                   all.begin() + static_cast<long>(cfg.n_pairs + cfg.n_dev));
    out.test.assign(all.begin() + static_cast<long>(cfg.n_pairs + cfg.n_dev), all.end());
    return out;
}

std::vector<ChunkLexiconEntry> idiom_lexicon(const IdiomTable& idioms) {
    std::vector<ChunkLexiconEntry> lex;
    for (const Idiom& idiom : idioms) lex.push_back({idiom.src, idiom.category});
    return lex;
}

void write_idiom_table(const IdiomTable& idioms, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write idiom table: " + path);
    for (const Idiom& idiom : idioms)
        os << join(idiom.src) << " ||| " << join(idiom.tgt) << " ||| "
           << idiom.category << '\n';
}

IdiomTable load_idiom_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open idiom table: " + path);
    IdiomTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto parts = split_on(line, '|');
        // fields are separated by " ||| "
        std::vector<std::string> fields;
        for (const std::string& p : parts)
            if (!trim(p).empty()) fields.push_back(trim(p));
        if (fields.size() != 3)
            throw DataError("idiom table line " + std::to_string(line_no) +
                            ": expected 'src ||| tgt ||| category'");
        Idiom idiom;
        idiom.src = split_ws(fields[0]);
        idiom.tgt = split_ws(fields[1]);
        idiom.category = fields[2];
        table.push_back(std::move(idiom));
    }
    return table;
}

}  // namespace phrasedec
