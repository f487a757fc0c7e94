#include "phrasedec/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace phrasedec {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<ChunkSpan> parse_chunk_line(const std::string& line, size_t line_no,
                                        size_t n_tokens) {
    std::vector<ChunkSpan> spans;
    if (trim(line).empty()) return spans;
    for (const std::string& part : split_on(line, ';')) {
        if (trim(part).empty()) continue;
        auto fields = split_ws(part);
        if (fields.size() != 3)
            throw DataError("chunk file line " + std::to_string(line_no) +
                            ": malformed span '" + part + "'");
        ChunkSpan span;
        try {
            span.start = std::stoi(fields[0]);
            span.end = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw DataError("chunk file line " + std::to_string(line_no) +
                            ": non-numeric span bounds in '" + part + "'");
        }
        span.category = fields[2];
        if (span.start < 0 || span.end > static_cast<int>(n_tokens) ||
            span.start >= span.end)
            throw DataError("chunk file line " + std::to_string(line_no) +
                            ": span out of bounds '" + part + "'");
        spans.push_back(std::move(span));
    }
    std::sort(spans.begin(), spans.end(),
              [](const ChunkSpan& a, const ChunkSpan& b) { return a.start < b.start; });
    for (size_t i = 1; i < spans.size(); ++i)
        if (spans[i].start < spans[i - 1].end)
            throw DataError("chunk file line " + std::to_string(line_no) +
                            ": overlapping spans");
    return spans;
}

}  // namespace

Vocab::Vocab() {
    for (const char* t : {"<unk>", "<s>", "</s>", "<pad>"}) add_reserved_internal(t);
}

void Vocab::add_reserved_internal(const std::string& token) {
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
    return index_.count(token) > 0;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("Vocab::token: bad id");
    return tokens_[static_cast<size_t>(id)];
}

int Vocab::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    return id;
}

void Vocab::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write vocab: " + path);
    for (const std::string& t : tokens_) os << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
    auto lines = read_lines(path);
    Vocab v;
    if (lines.size() < kNumReserved) throw DataError("vocab file too short: " + path);
    for (int i = 0; i < kNumReserved; ++i)
        if (lines[static_cast<size_t>(i)] != v.tokens_[static_cast<size_t>(i)])
            throw DataError("vocab file missing reserved symbols: " + path);
    for (size_t i = kNumReserved; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        v.add(lines[i]);
    }
    return v;
}

std::vector<int> Vocab::ids(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const std::string& t : tokens) out.push_back(id(t));
    return out;
}

TaggedSentence TaggedSentence::from_chunks(std::vector<std::string> tokens,
                                           std::vector<ChunkSpan> chunks) {
    std::sort(chunks.begin(), chunks.end(),
              [](const ChunkSpan& a, const ChunkSpan& b) { return a.start < b.start; });
    TaggedSentence s;
    s.tags.assign(tokens.size(), kDefaultTag);
    int prev_end = 0;
    for (const ChunkSpan& c : chunks) {
        if (c.start < 0 || c.end > static_cast<int>(tokens.size()) || c.start >= c.end)
            throw DataError("chunk span out of bounds");
        if (c.start < prev_end) throw DataError("chunk spans overlap");
        prev_end = c.end;
        s.tags[static_cast<size_t>(c.start)] = c.category + "_B";
        for (int i = c.start + 1; i < c.end; ++i)
            s.tags[static_cast<size_t>(i)] = c.category;
    }
    s.tokens = std::move(tokens);
    s.chunks = std::move(chunks);
    return s;
}

LoadResult load_parallel(const std::string& src_path, const std::string& tgt_path,
                         const std::optional<std::string>& chunk_path, size_t max_len) {
    auto src_lines = read_lines(src_path);
    auto tgt_lines = read_lines(tgt_path);
    if (src_lines.size() != tgt_lines.size())
        throw DataError("line-count mismatch: " + src_path + " has " +
                        std::to_string(src_lines.size()) + " lines, " + tgt_path +
                        " has " + std::to_string(tgt_lines.size()));
    std::vector<std::string> chunk_lines;
    if (chunk_path) {
        chunk_lines = read_lines(*chunk_path);
        if (chunk_lines.size() != src_lines.size())
            throw DataError("line-count mismatch: " + *chunk_path + " has " +
                            std::to_string(chunk_lines.size()) + " lines, expected " +
                            std::to_string(src_lines.size()));
    }

    LoadResult result;
    for (size_t i = 0; i < src_lines.size(); ++i) {
        auto src_tokens = split_ws(src_lines[i]);
        auto tgt_tokens = split_ws(tgt_lines[i]);
        if (src_tokens.empty() || tgt_tokens.empty())
            throw DataError("empty sentence at line " + std::to_string(i + 1));
        if (src_tokens.size() > max_len || tgt_tokens.size() > max_len) {
            ++result.dropped_over_length;
            continue;
        }
        std::vector<ChunkSpan> chunks;
        if (chunk_path)
            chunks = parse_chunk_line(chunk_lines[i], i + 1, src_tokens.size());
        ParallelExample ex;
        ex.source = TaggedSentence::from_chunks(std::move(src_tokens), std::move(chunks));
        ex.target = std::move(tgt_tokens);
        result.examples.push_back(std::move(ex));
    }
    return result;
}

std::vector<TaggedSentence> load_source(const std::string& src_path,
                                        const std::optional<std::string>& chunk_path) {
    auto src_lines = read_lines(src_path);
    std::vector<std::string> chunk_lines;
    if (chunk_path) {
        chunk_lines = read_lines(*chunk_path);
        if (chunk_lines.size() != src_lines.size())
            throw DataError("line-count mismatch between " + src_path + " and " +
                            *chunk_path);
    }
    std::vector<TaggedSentence> out;
    for (size_t i = 0; i < src_lines.size(); ++i) {
        auto tokens = split_ws(src_lines[i]);
        if (tokens.empty()) throw DataError("empty sentence at line " + std::to_string(i + 1));
        std::vector<ChunkSpan> chunks;
        if (chunk_path) chunks = parse_chunk_line(chunk_lines[i], i + 1, tokens.size());
        out.push_back(TaggedSentence::from_chunks(std::move(tokens), std::move(chunks)));
    }
    return out;
}

void write_corpus(const std::vector<ParallelExample>& examples,
                  const std::string& src_path, const std::string& tgt_path,
                  const std::optional<std::string>& chunk_path) {
    std::ofstream src(src_path, std::ios::trunc), tgt(tgt_path, std::ios::trunc);
    if (!src || !tgt) throw DataError("cannot write corpus files");
    std::ofstream chunks;
    if (chunk_path) {
        chunks.open(*chunk_path, std::ios::trunc);
        if (!chunks) throw DataError("cannot write chunk file: " + *chunk_path);
    }
    for (const ParallelExample& ex : examples) {
        src << join(ex.source.tokens) << '\n';
        tgt << join(ex.target) << '\n';
        if (chunk_path) {
            std::string line;
            for (size_t c = 0; c < ex.source.chunks.size(); ++c) {
                const ChunkSpan& span = ex.source.chunks[c];
                if (c > 0) line += ';';
                line += std::to_string(span.start) + " " + std::to_string(span.end) +
                        " " + span.category;
            }
            chunks << line << '\n';
        }
    }
}

namespace {

Vocab vocab_from_counts(const std::map<std::string, size_t>& counts, size_t max_size) {
    std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [token, freq] : ranked) {
        (void)freq;
        if (max_size > 0 &&
            static_cast<size_t>(v.size()) - Vocab::kNumReserved >= max_size)
            break;
        v.add(token);
    }
    return v;
}

}  // namespace

Vocab build_vocab(const std::vector<ParallelExample>& examples, Side side,
                  size_t max_size) {
    if (examples.empty()) throw DataError("build_vocab: empty corpus");
    std::map<std::string, size_t> counts;
    for (const ParallelExample& ex : examples) {
        const auto& tokens = side == Side::Source ? ex.source.tokens : ex.target;
        for (const std::string& t : tokens) ++counts[t];
    }
    return vocab_from_counts(counts, max_size);
}

Vocab build_tag_vocab(const std::vector<ParallelExample>& examples) {
    std::map<std::string, size_t> counts;
    for (const ParallelExample& ex : examples)
        for (const std::string& t : ex.source.tags) ++counts[t];
    if (counts.empty()) counts[TaggedSentence::kDefaultTag] = 1;
    return vocab_from_counts(counts, 0);
}

TaggedSentence fallback_chunker(const std::vector<std::string>& tokens,
                                const std::vector<ChunkLexiconEntry>& lexicon) {
    if (tokens.empty()) throw std::invalid_argument("fallback_chunker: empty sentence");
    std::vector<ChunkSpan> chunks;
    size_t i = 0;
    while (i < tokens.size()) {
        const ChunkLexiconEntry* best = nullptr;
        for (const ChunkLexiconEntry& entry : lexicon) {
            if (entry.pattern.empty() || i + entry.pattern.size() > tokens.size())
                continue;
            bool match = true;
            for (size_t k = 0; k < entry.pattern.size(); ++k)
                if (tokens[i + k] != entry.pattern[k]) {
                    match = false;
                    break;
                }
            if (match && (!best || entry.pattern.size() > best->pattern.size()))
                best = &entry;
        }
        if (best) {
            chunks.push_back({static_cast<int>(i),
                              static_cast<int>(i + best->pattern.size()),
                              best->category});
            i += best->pattern.size();
        } else {
            ++i;
        }
    }
    return TaggedSentence::from_chunks(tokens, std::move(chunks));
}

}  // namespace phrasedec
