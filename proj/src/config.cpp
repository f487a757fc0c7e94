#include "phrasedec/config.hpp"

#include <fstream>
#include <sstream>

namespace phrasedec {

const std::vector<ConfigKey>& RunConfig::registry() {
    static const std::vector<ConfigKey> keys = {
        // corpora
        {"train_src", "", "training source corpus, one tokenized sentence per line"},
        {"train_tgt", "", "training target corpus"},
        {"train_chunks", "", "chunk annotations for train_src (optional)"},
        {"dev_src", "", "development source corpus"},
        {"dev_tgt", "", "development target corpus"},
        {"dev_chunks", "", "chunk annotations for dev_src (optional)"},
        {"test_src", "", "test source corpus"},
        {"test_chunks", "", "chunk annotations for test_src (optional)"},
        {"test_ref", "", "reference file(s) for eval, comma-separated"},
        {"max_len", "50", "drop training pairs longer than this on either side"},
        {"vocab_max_size", "0", "frequency shortlist size, 0 = no cutoff"},
        // artifacts
        {"work_dir", "work", "directory for derived artifacts"},
        {"align_file", "", "alignment file (default <work_dir>/train.align)"},
        {"phrase_table", "", "phrase table file (default <work_dir>/phrase-table)"},
        {"lm_file", "", "language model file (default <work_dir>/lm.bin)"},
        {"vocab_src_file", "", "source vocab (default <work_dir>/vocab.src)"},
        {"vocab_tgt_file", "", "target vocab (default <work_dir>/vocab.tgt)"},
        {"vocab_tag_file", "", "tag vocab (default <work_dir>/vocab.tag)"},
        {"model_file", "", "model checkpoint (default <work_dir>/model.ckpt)"},
        {"epoch_checkpoints", "true", "save a checkpoint after every epoch"},
        {"static_dictionary", "",
         "extra 'src ||| tgt' entries merged into the phrase table"},
        {"output_file", "", "translations (default <work_dir>/output.txt)"},
        {"trace_file", "", "decode traces (default <work_dir>/output.trace.jsonl)"},
        {"log_file", "", "training log (default <work_dir>/train.log)"},
        {"baseline_output", "", "baseline translations for analyze --new columns"},
        // model dimensions
        {"embed_dim", "32", "word embedding size"},
        {"tag_embed_dim", "8", "chunk-tag embedding size, 0 disables tags"},
        {"hidden_dim", "64", "recurrent hidden size"},
        {"attn_dim", "64", "attention hidden size"},
        {"out_hidden_dim", "64", "output-layer hidden size"},
        {"balancer_hidden1", "64", "balancer first hidden layer"},
        {"balancer_hidden2", "32", "balancer second hidden layer"},
        {"scorer_hidden1", "64", "phrase scorer first hidden layer"},
        {"scorer_hidden2", "32", "phrase scorer second hidden layer"},
        // smt
        {"align_iterations", "5", "EM iterations for the lexical aligner"},
        {"max_phrase_len", "7", "maximum phrase length, both sides"},
        {"lm_order", "4", "n-gram language model order"},
        {"lm_discount", "0.75", "absolute discounting constant, in (0,1)"},
        {"top_translations", "5", "per-chunk translations kept before filtering"},
        {"memory_size", "7", "phrase memory capacity K"},
        {"weight_tgt_src", "1.0", "feature weight: log p(tgt|src)"},
        {"weight_src_tgt", "1.0", "feature weight: log p(src|tgt)"},
        {"weight_lm", "1.0", "feature weight: LM log-prob"},
        {"weight_word_penalty", "-0.3", "feature weight: target word count"},
        {"weight_distortion", "0.3", "feature weight: distortion penalty"},
        {"weight_phrase_penalty", "0.0", "feature weight: constant 1"},
        // training
        {"batch_size", "16", "minibatch size"},
        {"epochs", "10", "training epochs"},
        {"adadelta_rho", "0.95", "Adadelta decay rate"},
        {"adadelta_epsilon", "1e-6", "Adadelta epsilon"},
        {"clip_norm", "1.0", "global gradient norm clip"},
        {"dropout", "0.5", "output-layer dropout rate"},
        {"seed", "1", "master random seed"},
        // decoding
        {"beam_width", "10", "beam size"},
        {"max_output_len", "80", "maximum generated words per sentence"},
        // misc
        {"threads", "1", "worker cap for sentence-parallel stages"},
        {"baseline_mode", "false", "disable the phrase memory (word-only system)"},
        {"constant_lambda", "-1", "fix the balancer output, <0 = dynamic"},
        {"dump_memory", "", "JSONL dump of per-step memory contents (debug)"},
        // toy corpus generation
        {"toy_dir", "toy", "output directory for gen-toy"},
        {"toy_pairs", "2000", "training pairs to generate"},
        {"toy_dev", "200", "development pairs"},
        {"toy_test", "200", "test pairs"},
        {"toy_vocab", "50", "approximate per-side vocabulary"},
        {"toy_idioms", "80", "idiom inventory size"},
        {"toy_min_len", "3", "minimum regular slots per sentence"},
        {"toy_max_len", "8", "maximum regular slots per sentence"},
        {"toy_idiom_prob", "0.85", "chance a sentence carries an idiom"},
        {"toy_second_idiom_prob", "0.35", "chance of a second idiom"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const ConfigKey& key : registry()) values_[key.name] = key.def;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        try {
            set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    it->second = value;
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

int RunConfig::geti(const std::string& key) const {
    try {
        return std::stoi(str(key));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: " + str(key));
    }
}

double RunConfig::getd(const std::string& key) const {
    try {
        return std::stod(str(key));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: " + str(key));
    }
}

uint64_t RunConfig::getu(const std::string& key) const {
    try {
        return std::stoull(str(key));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an unsigned integer: " +
                          str(key));
    }
}

bool RunConfig::getb(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

bool RunConfig::is_set(const std::string& key) const { return !str(key).empty(); }

std::string RunConfig::path_or_default(const std::string& key,
                                       const std::string& fallback) const {
    if (is_set(key)) return str(key);
    return str("work_dir") + "/" + fallback;
}

std::string RunConfig::help_text() {
    std::ostringstream os;
    os << "Config keys (key = value lines; override with --set key=value):\n";
    for (const ConfigKey& key : registry()) {
        os << "  " << key.name;
        os << " (default: " << (key.def[0] ? key.def : "<empty>") << ")\n";
        os << "      " << key.help << "\n";
    }
    return os.str();
}

}  // namespace phrasedec
