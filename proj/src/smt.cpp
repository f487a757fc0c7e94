#include "phrasedec/smt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "phrasedec/checkpoint.hpp"

namespace phrasedec {

double LexicalTable::prob(const std::string& src, const std::string& tgt) const {
    auto row = t_.find(src);
    if (row == t_.end()) return 0.0;
    auto cell = row->second.find(tgt);
    return cell == row->second.end() ? 0.0 : cell->second;
}

LexicalTable LexicalTable::train(const std::vector<SentencePair>& corpus,
                                 int iterations) {
    if (corpus.empty()) throw ConfigError("alignment training: empty corpus");
    if (iterations < 1) throw ConfigError("alignment training: iterations must be >= 1");
    LexicalTable table;
    // uniform over co-occurring target words
    for (const auto& [src, tgt] : corpus)
        for (const std::string& f : src)
            for (const std::string& e : tgt) table.t_[f][e] = 1.0;
    for (auto& [f, row] : table.t_) {
        double z = 0.0;
        for (auto& [e, v] : row) z += v;
        for (auto& [e, v] : row) v /= z;
    }

    for (int iter = 0; iter < iterations; ++iter) {
        std::unordered_map<std::string, std::unordered_map<std::string, double>> counts;
        for (const auto& [src, tgt] : corpus) {
            for (const std::string& e : tgt) {
                double denom = 0.0;
                for (const std::string& f : src) denom += table.prob(f, e);
                if (denom <= 0.0) continue;
                for (const std::string& f : src)
                    counts[f][e] += table.prob(f, e) / denom;
            }
        }
        for (auto& [f, row] : counts) {
            double z = 0.0;
            for (auto& [e, v] : row) z += v;
            for (auto& [e, v] : row) table.t_[f][e] = v / z;
        }
    }
    return table;
}

std::vector<std::pair<int, int>> viterbi_links(const LexicalTable& table,
                                               const TokenSeq& src,
                                               const TokenSeq& tgt) {
    std::vector<std::pair<int, int>> links;
    for (int j = 0; j < static_cast<int>(tgt.size()); ++j) {
        int best_i = 0;
        double best_p = -1.0;
        for (int i = 0; i < static_cast<int>(src.size()); ++i) {
            double p = table.prob(src[static_cast<size_t>(i)], tgt[static_cast<size_t>(j)]);
            if (p > best_p) {
                best_p = p;
                best_i = i;
            }
        }
        links.emplace_back(best_i, j);
    }
    return links;
}

AlignmentMatrix grow_diag_final(int src_len, int tgt_len,
                                const std::set<std::pair<int, int>>& src_to_tgt,
                                const std::set<std::pair<int, int>>& tgt_to_src) {
    AlignmentMatrix out;
    out.src_len = src_len;
    out.tgt_len = tgt_len;

    std::set<std::pair<int, int>> uni = src_to_tgt;
    uni.insert(tgt_to_src.begin(), tgt_to_src.end());
    for (const auto& [i, j] : src_to_tgt)
        if (tgt_to_src.count({i, j})) out.links.insert({i, j});

    std::vector<bool> src_cov(static_cast<size_t>(src_len), false);
    std::vector<bool> tgt_cov(static_cast<size_t>(tgt_len), false);
    for (const auto& [i, j] : out.links) {
        src_cov[static_cast<size_t>(i)] = true;
        tgt_cov[static_cast<size_t>(j)] = true;
    }

    static const int kNeigh[8][2] = {{-1, 0}, {0, -1}, {1, 0},  {0, 1},
                                     {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    bool added = true;
    while (added) {
        added = false;
        for (int i = 0; i < src_len; ++i) {
            for (int j = 0; j < tgt_len; ++j) {
                if (!out.links.count({i, j})) continue;
                for (const auto& d : kNeigh) {
                    int ni = i + d[0], nj = j + d[1];
                    if (ni < 0 || nj < 0 || ni >= src_len || nj >= tgt_len) continue;
                    if (out.links.count({ni, nj})) continue;
                    bool uncovered = !src_cov[static_cast<size_t>(ni)] ||
                                     !tgt_cov[static_cast<size_t>(nj)];
                    if (uncovered && uni.count({ni, nj})) {
                        out.links.insert({ni, nj});
                        src_cov[static_cast<size_t>(ni)] = true;
                        tgt_cov[static_cast<size_t>(nj)] = true;
                        added = true;
                    }
                }
            }
        }
    }

    for (const auto* dir : {&src_to_tgt, &tgt_to_src}) {
        for (int i = 0; i < src_len; ++i) {
            for (int j = 0; j < tgt_len; ++j) {
                if (out.links.count({i, j}) || !dir->count({i, j})) continue;
                if (!src_cov[static_cast<size_t>(i)] || !tgt_cov[static_cast<size_t>(j)]) {
                    out.links.insert({i, j});
                    src_cov[static_cast<size_t>(i)] = true;
                    tgt_cov[static_cast<size_t>(j)] = true;
                }
            }
        }
    }
    return out;
}

std::vector<AlignmentMatrix> ibm1_align(const std::vector<SentencePair>& corpus,
                                        int iterations) {
    if (corpus.empty()) throw ConfigError("ibm1_align: empty corpus");
    LexicalTable fwd = LexicalTable::train(corpus, iterations);  // t(tgt|src)
    std::vector<SentencePair> reversed;
    reversed.reserve(corpus.size());
    for (const auto& [src, tgt] : corpus) reversed.emplace_back(tgt, src);
    LexicalTable bwd = LexicalTable::train(reversed, iterations);  // t(src|tgt)

    std::vector<AlignmentMatrix> out;
    out.reserve(corpus.size());
    for (const auto& [src, tgt] : corpus) {
        std::set<std::pair<int, int>> st, ts;
        for (const auto& [i, j] : viterbi_links(fwd, src, tgt)) st.insert({i, j});
        for (const auto& [j, i] : viterbi_links(bwd, tgt, src)) ts.insert({i, j});
        out.push_back(grow_diag_final(static_cast<int>(src.size()),
                                      static_cast<int>(tgt.size()), st, ts));
    }
    return out;
}

void write_alignments(const std::vector<AlignmentMatrix>& alignments,
                      const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write alignments: " + path);
    for (const AlignmentMatrix& a : alignments) {
        bool first = true;
        for (const auto& [i, j] : a.links) {
            if (!first) os << ' ';
            os << i << '-' << j;
            first = false;
        }
        os << '\n';
    }
}

std::vector<AlignmentMatrix> load_alignments(const std::string& path,
                                             const std::vector<SentencePair>& corpus) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open alignments: " + path);
    std::vector<AlignmentMatrix> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        if (line_no >= corpus.size())
            throw DataError("alignment file longer than corpus: " + path);
        AlignmentMatrix a;
        a.src_len = static_cast<int>(corpus[line_no].first.size());
        a.tgt_len = static_cast<int>(corpus[line_no].second.size());
        for (const std::string& pair : split_ws(line)) {
            auto dash = pair.find('-');
            if (dash == std::string::npos)
                throw DataError("alignment line " + std::to_string(line_no + 1) +
                                ": bad link '" + pair + "'");
            int i, j;
            try {
                i = std::stoi(pair.substr(0, dash));
                j = std::stoi(pair.substr(dash + 1));
            } catch (const std::exception&) {
                throw DataError("alignment line " + std::to_string(line_no + 1) +
                                ": bad link '" + pair + "'");
            }
            if (i < 0 || i >= a.src_len || j < 0 || j >= a.tgt_len)
                throw DataError("alignment line " + std::to_string(line_no + 1) +
                                ": link out of bounds '" + pair + "'");
            a.links.insert({i, j});
        }
        out.push_back(std::move(a));
        ++line_no;
    }
    if (line_no != corpus.size())
        throw DataError("alignment file shorter than corpus: " + path);
    return out;
}

std::vector<PhraseSpanPair> extract_phrases(const AlignmentMatrix& a, int max_len) {
    std::vector<PhraseSpanPair> out;
    if (a.links.empty()) return out;
    std::vector<bool> src_aligned(static_cast<size_t>(a.src_len), false);
    for (const auto& [i, j] : a.links) src_aligned[static_cast<size_t>(i)] = true;

    for (int t1 = 0; t1 < a.tgt_len; ++t1) {
        for (int t2 = t1; t2 < a.tgt_len && t2 - t1 + 1 <= max_len; ++t2) {
            int smin = a.src_len, smax = -1;
            for (const auto& [i, j] : a.links) {
                if (j >= t1 && j <= t2) {
                    smin = std::min(smin, i);
                    smax = std::max(smax, i);
                }
            }
            if (smax < 0) continue;  // no link inside
            bool consistent = true;
            for (const auto& [i, j] : a.links) {
                if (i >= smin && i <= smax && (j < t1 || j > t2)) {
                    consistent = false;
                    break;
                }
            }
            if (!consistent) continue;
            // absorb adjacent unaligned source words
            for (int s1 = smin; s1 >= 0 && (s1 == smin || !src_aligned[static_cast<size_t>(s1)]); --s1) {
                for (int s2 = smax;
                     s2 < a.src_len && (s2 == smax || !src_aligned[static_cast<size_t>(s2)]);
                     ++s2) {
                    if (s2 - s1 + 1 <= max_len) out.push_back({s1, s2, t1, t2});
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

const std::vector<PhraseTableEntry>* PhraseTable::lookup(const TokenSeq& src) const {
    auto it = table_.find(join(src));
    return it == table_.end() ? nullptr : &it->second;
}

void PhraseTable::add(const TokenSeq& src, PhraseTableEntry entry) {
    table_[join(src)].push_back(std::move(entry));
}

PhraseTable PhraseTable::build(const std::vector<SentencePair>& corpus,
                               const std::vector<AlignmentMatrix>& alignments,
                               int max_len) {
    if (corpus.size() != alignments.size())
        throw DataError("phrase table build: corpus/alignment size mismatch");
    std::map<std::pair<std::string, std::string>, long> joint;
    std::map<std::string, long> src_marginal, tgt_marginal;
    for (size_t n = 0; n < corpus.size(); ++n) {
        const auto& [src, tgt] = corpus[n];
        for (const PhraseSpanPair& span : extract_phrases(alignments[n], max_len)) {
            TokenSeq s(src.begin() + span.src_start, src.begin() + span.src_end + 1);
            TokenSeq t(tgt.begin() + span.tgt_start, tgt.begin() + span.tgt_end + 1);
            std::string sk = join(s), tk = join(t);
            ++joint[{sk, tk}];
            ++src_marginal[sk];
            ++tgt_marginal[tk];
        }
    }
    PhraseTable table;
    for (const auto& [key, count] : joint) {
        const auto& [sk, tk] = key;
        PhraseTableEntry entry;
        entry.tgt = split_ws(tk);
        entry.count = count;
        entry.logp_tgt_src =
            std::log(static_cast<double>(count) / static_cast<double>(src_marginal[sk]));
        entry.logp_src_tgt =
            std::log(static_cast<double>(count) / static_cast<double>(tgt_marginal[tk]));
        table.table_[sk].push_back(std::move(entry));
    }
    for (auto& [sk, entries] : table.table_) {
        std::sort(entries.begin(), entries.end(),
                  [](const PhraseTableEntry& a, const PhraseTableEntry& b) {
                      double sa = a.logp_tgt_src + a.logp_src_tgt;
                      double sb = b.logp_tgt_src + b.logp_src_tgt;
                      if (sa != sb) return sa > sb;
                      return a.tgt < b.tgt;
                  });
    }
    return table;
}

void PhraseTable::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write phrase table: " + path);
    char buf[64];
    for (const auto& [src, entries] : table_) {
        for (const PhraseTableEntry& e : entries) {
            os << src << " ||| " << join(e.tgt) << " ||| ";
            std::snprintf(buf, sizeof(buf), "%.17g", e.logp_tgt_src);
            os << buf << ' ';
            std::snprintf(buf, sizeof(buf), "%.17g", e.logp_src_tgt);
            os << buf << ' ' << e.count << '\n';
        }
    }
}

PhraseTable PhraseTable::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open phrase table: " + path);
    PhraseTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        size_t p1 = line.find(" ||| ");
        size_t p2 = p1 == std::string::npos ? std::string::npos
                                            : line.find(" ||| ", p1 + 5);
        if (p2 == std::string::npos)
            throw DataError("phrase table line " + std::to_string(line_no) +
                            ": expected three ||| fields");
        std::string src = line.substr(0, p1);
        std::string tgt = line.substr(p1 + 5, p2 - p1 - 5);
        auto nums = split_ws(line.substr(p2 + 5));
        if (nums.size() != 3)
            throw DataError("phrase table line " + std::to_string(line_no) +
                            ": expected 'logp logp count'");
        PhraseTableEntry entry;
        entry.tgt = split_ws(tgt);
        try {
            entry.logp_tgt_src = std::stod(nums[0]);
            entry.logp_src_tgt = std::stod(nums[1]);
            entry.count = std::stol(nums[2]);
        } catch (const std::exception&) {
            throw DataError("phrase table line " + std::to_string(line_no) +
                            ": bad numeric fields");
        }
        table.table_[src].push_back(std::move(entry));
    }
    return table;
}

void PhraseTable::add_dictionary(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open dictionary: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        size_t sep = line.find(" ||| ");
        if (sep == std::string::npos)
            throw DataError("dictionary line " + std::to_string(line_no) +
                            ": expected 'src ||| tgt'");
        TokenSeq src = split_ws(line.substr(0, sep));
        PhraseTableEntry entry;
        entry.tgt = split_ws(line.substr(sep + 5));
        if (src.empty() || entry.tgt.empty())
            throw DataError("dictionary line " + std::to_string(line_no) +
                            ": empty phrase");
        entry.logp_tgt_src = 0.0;
        entry.logp_src_tgt = 0.0;
        entry.count = 1;
        table_[join(src)].push_back(std::move(entry));
    }
}

std::string NGramLM::pack(std::span<const int> ids) {
    std::string s;
    s.reserve(ids.size() * 4);
    for (int id : ids) {
        auto u = static_cast<uint32_t>(id);
        s.push_back(static_cast<char>(u & 0xff));
        s.push_back(static_cast<char>((u >> 8) & 0xff));
        s.push_back(static_cast<char>((u >> 16) & 0xff));
        s.push_back(static_cast<char>((u >> 24) & 0xff));
    }
    return s;
}

void NGramLM::train(const std::vector<std::vector<int>>& sentences, int vocab_size) {
    if (order_ < 1) throw ConfigError("NGramLM: order must be >= 1");
    if (discount_ <= 0.0 || discount_ >= 1.0)
        throw ConfigError("NGramLM: discount must be in (0,1)");
    if (vocab_size < 1) throw ConfigError("NGramLM: vocab size must be positive");
    vocab_size_ = vocab_size;
    counts_.assign(static_cast<size_t>(order_), {});
    contexts_.assign(static_cast<size_t>(order_), {});

    const size_t ctx = static_cast<size_t>(order_) - 1;
    for (const auto& sentence : sentences) {
        std::vector<int> padded(ctx, Vocab::kBos);
        padded.insert(padded.end(), sentence.begin(), sentence.end());
        padded.push_back(Vocab::kEos);
        for (size_t p = ctx; p < padded.size(); ++p) {
            for (size_t k = 1; k <= static_cast<size_t>(order_); ++k) {
                std::span<const int> gram(&padded[p - k + 1], k);
                auto& cnt = counts_[k - 1][pack(gram)];
                auto& stat = contexts_[k - 1][pack(gram.subspan(0, k - 1))];
                if (cnt == 0.0) ++stat.distinct;
                cnt += 1.0;
                stat.total += 1.0;
            }
        }
    }
}

double NGramLM::prob(std::span<const int> history, int word) const {
    if (vocab_size_ == 0) throw ConfigError("NGramLM: not trained");
    const size_t ctx = static_cast<size_t>(order_) - 1;
    std::vector<int> padded(ctx, Vocab::kBos);
    for (int id : history) padded.push_back(id);
    // p_k with context = last (k-1) ids, recursing to the uniform base
    double p = 1.0 / static_cast<double>(vocab_size_);
    for (size_t k = 1; k <= static_cast<size_t>(order_); ++k) {
        std::vector<int> key(padded.end() - static_cast<long>(k - 1), padded.end());
        auto ctx_it = contexts_[k - 1].find(pack(key));
        if (ctx_it == contexts_[k - 1].end() || ctx_it->second.total <= 0.0)
            continue;  // unseen context: keep lower-order estimate
        key.push_back(word);
        auto cnt_it = counts_[k - 1].find(pack(key));
        double c = cnt_it == counts_[k - 1].end() ? 0.0 : cnt_it->second;
        double total = ctx_it->second.total;
        double lambda = discount_ * ctx_it->second.distinct / total;
        p = std::max(c - discount_, 0.0) / total + lambda * p;
    }
    return p;
}

double NGramLM::logprob(std::span<const int> history, int word) const {
    return std::log(prob(history, word));
}

double NGramLM::phrase_logprob(std::span<const int> history,
                               std::span<const int> phrase) const {
    std::vector<int> h(history.begin(), history.end());
    double lp = 0.0;
    for (int id : phrase) {
        lp += logprob(h, id);
        h.push_back(id);
    }
    return lp;
}

double NGramLM::sequence_logprob(std::span<const int> sentence, bool add_eos) const {
    std::vector<int> h;
    double lp = 0.0;
    for (int id : sentence) {
        lp += logprob(h, id);
        h.push_back(id);
    }
    if (add_eos) lp += logprob(h, Vocab::kEos);
    return lp;
}

void NGramLM::save(const std::string& path) const {
    std::vector<std::pair<std::string, const Tensor*>> entries;
    Tensor meta({3});
    meta[0] = order_;
    meta[1] = discount_;
    meta[2] = vocab_size_;
    std::vector<Tensor> grams(static_cast<size_t>(order_));
    for (size_t k = 1; k <= static_cast<size_t>(order_); ++k) {
        // rows of (k ids, count), sorted by key for a stable file
        std::map<std::string, double> sorted(counts_[k - 1].begin(), counts_[k - 1].end());
        Tensor t({sorted.size(), k + 1});
        size_t row = 0;
        for (const auto& [key, count] : sorted) {
            for (size_t c = 0; c < k; ++c) {
                uint32_t u = 0;
                for (int b = 3; b >= 0; --b)
                    u = (u << 8) | static_cast<unsigned char>(key[c * 4 + static_cast<size_t>(b)]);
                t.at(row, c) = static_cast<double>(static_cast<int>(u));
            }
            t.at(row, k) = count;
            ++row;
        }
        grams[k - 1] = std::move(t);
    }
    entries.emplace_back("lm.meta", &meta);
    std::vector<std::string> names;
    for (size_t k = 1; k <= static_cast<size_t>(order_); ++k)
        names.push_back("lm.ngrams." + std::to_string(k));
    for (size_t k = 0; k < grams.size(); ++k) entries.emplace_back(names[k], &grams[k]);
    save_container(path, entries);
}

NGramLM NGramLM::load(const std::string& path) {
    auto tensors = load_container(path);
    auto meta_it = tensors.find("lm.meta");
    if (meta_it == tensors.end()) throw DataError("LM file missing metadata: " + path);
    NGramLM lm;
    lm.order_ = static_cast<int>(meta_it->second[0]);
    lm.discount_ = meta_it->second[1];
    lm.vocab_size_ = static_cast<int>(meta_it->second[2]);
    lm.counts_.assign(static_cast<size_t>(lm.order_), {});
    lm.contexts_.assign(static_cast<size_t>(lm.order_), {});
    for (size_t k = 1; k <= static_cast<size_t>(lm.order_); ++k) {
        auto it = tensors.find("lm.ngrams." + std::to_string(k));
        if (it == tensors.end()) throw DataError("LM file missing order " + std::to_string(k));
        const Tensor& t = it->second;
        for (size_t row = 0; row < t.extent(0); ++row) {
            std::vector<int> ids(k);
            for (size_t c = 0; c < k; ++c) ids[c] = static_cast<int>(t.at(row, c));
            double count = t.at(row, k);
            lm.counts_[k - 1][pack(ids)] = count;
            auto& stat = lm.contexts_[k - 1][pack(std::span<const int>(ids).subspan(0, k - 1))];
            stat.total += count;
            ++stat.distinct;
        }
    }
    return lm;
}

double smt_score(std::span<const double> features, std::span<const double> weights) {
    if (features.size() != weights.size())
        throw std::invalid_argument("smt_score: feature/weight length mismatch");
    double s = 0.0;
    for (size_t m = 0; m < features.size(); ++m) s += weights[m] * features[m];
    return s;
}

}  // namespace phrasedec
