#include "phrasedec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace phrasedec {

namespace {

using Json = nlohmann::json;

Sentence lowered(const Sentence& s) {
    Sentence out;
    out.reserve(s.size());
    for (const std::string& t : s) out.push_back(lowercase_ascii(t));
    return out;
}

std::map<std::string, int> ngram_counts(const Sentence& s, int n) {
    std::map<std::string, int> counts;
    if (static_cast<int>(s.size()) < n) return counts;
    for (size_t i = 0; i + static_cast<size_t>(n) <= s.size(); ++i) {
        std::string key;
        for (int k = 0; k < n; ++k) {
            if (k > 0) key += '\x1f';
            key += s[i + static_cast<size_t>(k)];
        }
        ++counts[key];
    }
    return counts;
}

bool contains_contiguous(const Sentence& haystack, const Sentence& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool match = true;
        for (size_t k = 0; k < needle.size(); ++k)
            if (haystack[i + k] != needle[k]) {
                match = false;
                break;
            }
        if (match) return true;
    }
    return false;
}

}  // namespace

BleuReport bleu(const std::vector<Sentence>& hypotheses,
                const std::vector<std::vector<Sentence>>& references, int max_n,
                bool case_insensitive) {
    if (hypotheses.empty()) throw std::invalid_argument("bleu: empty hypothesis set");
    if (hypotheses.size() != references.size())
        throw std::invalid_argument("bleu: hypothesis/reference count mismatch");
    for (const auto& refs : references)
        if (refs.empty())
            throw std::invalid_argument("bleu: sentence without references");

    std::vector<double> matched(static_cast<size_t>(max_n), 0.0);
    std::vector<double> total(static_cast<size_t>(max_n), 0.0);
    size_t hyp_len = 0, ref_len = 0;

    for (size_t s = 0; s < hypotheses.size(); ++s) {
        Sentence hyp = case_insensitive ? lowered(hypotheses[s]) : hypotheses[s];
        std::vector<Sentence> refs;
        for (const Sentence& r : references[s])
            refs.push_back(case_insensitive ? lowered(r) : r);

        hyp_len += hyp.size();
        // closest reference length; ties -> shorter
        size_t best_ref = refs[0].size();
        for (const Sentence& r : refs) {
            auto diff = [&](size_t len) {
                return len > hyp.size() ? len - hyp.size() : hyp.size() - len;
            };
            if (diff(r.size()) < diff(best_ref) ||
                (diff(r.size()) == diff(best_ref) && r.size() < best_ref))
                best_ref = r.size();
        }
        ref_len += best_ref;

        for (int n = 1; n <= max_n; ++n) {
            auto hyp_counts = ngram_counts(hyp, n);
            std::map<std::string, int> max_ref_counts;
            for (const Sentence& r : refs)
                for (const auto& [gram, c] : ngram_counts(r, n))
                    max_ref_counts[gram] = std::max(max_ref_counts[gram], c);
            for (const auto& [gram, c] : hyp_counts) {
                total[static_cast<size_t>(n - 1)] += c;
                auto it = max_ref_counts.find(gram);
                if (it != max_ref_counts.end())
                    matched[static_cast<size_t>(n - 1)] += std::min(c, it->second);
            }
        }
    }

    BleuReport report;
    report.hyp_length = hyp_len;
    report.ref_length = ref_len;
    report.precisions.resize(static_cast<size_t>(max_n), 0.0);
    double log_sum = 0.0;
    bool zero_precision = false;
    for (int n = 0; n < max_n; ++n) {
        double p = total[static_cast<size_t>(n)] > 0
                       ? matched[static_cast<size_t>(n)] / total[static_cast<size_t>(n)]
                       : 0.0;
        report.precisions[static_cast<size_t>(n)] = p;
        if (p <= 0.0)
            zero_precision = true;
        else
            log_sum += std::log(p) / max_n;
    }
    report.brevity_penalty =
        (hyp_len == 0 || hyp_len >= ref_len)
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    report.bleu = (zero_precision || hyp_len == 0)
                      ? 0.0
                      : report.brevity_penalty * std::exp(log_sum);
    return report;
}

void write_traces(const std::vector<SentenceTrace>& traces, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write traces: " + path);
    for (const SentenceTrace& trace : traces) {
        Json j;
        j["tokens"] = trace.tokens;
        j["logprob"] = trace.logprob;
        j["truncated"] = trace.truncated;
        Json frags = Json::array();
        for (const auto& f : trace.fragments) {
            Json jf;
            jf["type"] = f.is_phrase ? "phrase" : "word";
            jf["tokens"] = f.tokens;
            jf["score"] = f.score;
            if (f.is_phrase) {
                jf["span"] = {f.span_start, f.span_end};
                jf["category"] = f.category;
            }
            frags.push_back(std::move(jf));
        }
        j["fragments"] = std::move(frags);
        os << j.dump() << '\n';
    }
}

std::vector<SentenceTrace> load_traces(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open traces: " + path);
    std::vector<SentenceTrace> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw DataError("trace line " + std::to_string(line_no) + ": " + e.what());
        }
        SentenceTrace trace;
        trace.tokens = j.at("tokens").get<Sentence>();
        trace.logprob = j.value("logprob", 0.0);
        trace.truncated = j.value("truncated", false);
        for (const Json& jf : j.at("fragments")) {
            SentenceTrace::Frag f;
            f.is_phrase = jf.at("type").get<std::string>() == "phrase";
            f.tokens = jf.at("tokens").get<Sentence>();
            f.score = jf.value("score", 0.0);
            if (f.is_phrase && jf.contains("span")) {
                f.span_start = jf["span"][0].get<int>();
                f.span_end = jf["span"][1].get<int>();
                f.category = jf.value("category", "");
            }
            trace.fragments.push_back(std::move(f));
        }
        out.push_back(std::move(trace));
    }
    return out;
}

PhraseUsageReport phrase_usage(
    const std::vector<SentenceTrace>& traces,
    const std::vector<std::vector<Sentence>>& references,
    const std::optional<std::vector<Sentence>>& baseline_outputs) {
    if (traces.size() != references.size())
        throw std::invalid_argument("phrase_usage: trace/reference count mismatch");
    if (baseline_outputs && baseline_outputs->size() != traces.size())
        throw std::invalid_argument("phrase_usage: trace/baseline count mismatch");

    PhraseUsageReport report;
    report.num_sentences = traces.size();
    report.has_baseline = baseline_outputs.has_value();

    for (size_t s = 0; s < traces.size(); ++s) {
        bool any_phrase = false;
        for (const auto& frag : traces[s].fragments) {
            if (!frag.is_phrase) continue;
            any_phrase = true;
            ++report.total_phrases;
            bool correct = false;
            for (const Sentence& ref : references[s])
                if (contains_contiguous(ref, frag.tokens)) {
                    correct = true;
                    break;
                }
            std::string category = frag.category.empty() ? "Others" : frag.category;
            int bucket = std::min<int>(5, static_cast<int>(frag.tokens.size()));
            auto bump = [&](UsageCell& cell) {
                ++cell.total;
                if (correct) ++cell.correct;
            };
            bump(report.by_category[category]);
            bump(report.by_length[bucket]);
            if (baseline_outputs) {
                bool is_new =
                    !contains_contiguous((*baseline_outputs)[s], frag.tokens);
                if (is_new) {
                    bump(report.by_category_new[category]);
                    bump(report.by_length_new[bucket]);
                }
            }
        }
        if (any_phrase) ++report.sentences_with_phrase;
    }
    report.pct_sentences_with_phrase =
        report.num_sentences == 0
            ? 0.0
            : 100.0 * static_cast<double>(report.sentences_with_phrase) /
                  static_cast<double>(report.num_sentences);
    return report;
}

std::string PhraseUsageReport::to_text() const {
    std::ostringstream os;
    os << "sentences: " << num_sentences << "\n";
    os << "sentences with >=1 phrase: " << sentences_with_phrase << " ("
       << pct_sentences_with_phrase << "%)\n";
    os << "generated phrases: " << total_phrases << "\n";
    auto pct = [&](size_t c) {
        return total_phrases == 0
                   ? 0.0
                   : 100.0 * static_cast<double>(c) / static_cast<double>(total_phrases);
    };
    os << "\nby category (All" << (has_baseline ? " / New" : "") << "):\n";
    for (const auto& [cat, cell] : by_category) {
        os << "  " << cat << "\ttotal " << pct(cell.total) << "%\tcorrect "
           << pct(cell.correct) << "%";
        if (has_baseline) {
            auto it = by_category_new.find(cat);
            UsageCell nc = it == by_category_new.end() ? UsageCell{} : it->second;
            os << "\tnew " << pct(nc.total) << "%\tnew-correct " << pct(nc.correct)
               << "%";
        }
        os << "\n";
    }
    os << "\nby word count (All" << (has_baseline ? " / New" : "") << "):\n";
    for (const auto& [len, cell] : by_length) {
        os << "  " << (len >= 5 ? ">=5" : std::to_string(len)) << "\ttotal "
           << pct(cell.total) << "%\tcorrect " << pct(cell.correct) << "%";
        if (has_baseline) {
            auto it = by_length_new.find(len);
            UsageCell nc = it == by_length_new.end() ? UsageCell{} : it->second;
            os << "\tnew " << pct(nc.total) << "%\tnew-correct " << pct(nc.correct)
               << "%";
        }
        os << "\n";
    }
    return os.str();
}

std::string PhraseUsageReport::to_json() const {
    Json j;
    j["num_sentences"] = num_sentences;
    j["sentences_with_phrase"] = sentences_with_phrase;
    j["pct_sentences_with_phrase"] = pct_sentences_with_phrase;
    j["total_phrases"] = total_phrases;
    auto cells = [](const auto& m) {
        Json out = Json::object();
        for (const auto& [key, cell] : m) {
            Json c;
            c["total"] = cell.total;
            c["correct"] = cell.correct;
            std::ostringstream k;
            k << key;
            out[k.str()] = std::move(c);
        }
        return out;
    };
    j["by_category"] = cells(by_category);
    j["by_length"] = cells(by_length);
    if (has_baseline) {
        j["by_category_new"] = cells(by_category_new);
        j["by_length_new"] = cells(by_length_new);
    }
    return j.dump(2);
}

std::vector<Sentence> null_ablation(const std::vector<SentenceTrace>& traces) {
    std::vector<Sentence> out;
    out.reserve(traces.size());
    for (const SentenceTrace& trace : traces) {
        Sentence s;
        for (const auto& frag : trace.fragments) {
            if (frag.is_phrase)
                s.push_back("NULL");
            else
                s.insert(s.end(), frag.tokens.begin(), frag.tokens.end());
        }
        out.push_back(std::move(s));
    }
    return out;
}

Model constant_lambda_mode(const Model& model, double value) {
    if (value <= 0.0 || value >= 1.0)
        throw ConfigError("constant lambda must lie strictly inside (0,1)");
    Model out = model;
    out.cfg.constant_lambda = value;
    return out;
}

}  // namespace phrasedec
