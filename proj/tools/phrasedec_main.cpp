#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phrasedec/commands.hpp"

using namespace phrasedec;

int main(int argc, char** argv) {
    CLI::App app{"phrasedec: attention NMT with an SMT-written phrase memory"};
    app.require_subcommand(1);
    app.footer(RunConfig::help_text());

    std::string config_path;
    std::vector<std::string> overrides;
    std::string seed, threads, constant_lambda;
    bool trace = false, baseline_mode = false, null_ablation_flag = false;

    app.add_option("--config", config_path, "config file of key = value lines");
    app.add_option("--set", overrides, "override a config key (key=value)");
    app.add_option("--seed", seed, "override the seed key");
    app.add_option("--threads", threads, "override the threads key");
    app.add_flag("--baseline-mode", baseline_mode,
                 "disable the phrase memory (word-only system)");
    app.add_option("--constant-lambda", constant_lambda,
                   "fix the balancer output to a constant in (0,1)");

    auto* gen_toy = app.add_subcommand("gen-toy", "generate the synthetic idiom corpus");
    auto* align = app.add_subcommand("align", "word-align the training corpus");
    auto* extract = app.add_subcommand("extract", "extract the phrase table");
    auto* lm = app.add_subcommand("lm", "train the n-gram language model");
    auto* train = app.add_subcommand("train", "train the translation model");
    auto* translate = app.add_subcommand("translate", "decode the test corpus");
    auto* eval = app.add_subcommand("eval", "score translations with BLEU");
    auto* analyze = app.add_subcommand("analyze", "phrase-usage and ablation reports");
    for (CLI::App* sub : {gen_toy, align, extract, lm, train, translate, eval, analyze})
        sub->fallthrough();

    translate->add_flag("--trace", trace, "write per-sentence derivation traces");
    std::string dump_memory;
    translate->add_option("--dump-memory", dump_memory,
                          "JSONL dump of per-step memory contents");
    analyze->add_flag("--null-ablation", null_ablation_flag,
                      "re-score with phrases replaced by NULL");
    std::vector<std::string> refs;
    for (CLI::App* sub : {eval, analyze})
        sub->add_option("--refs", refs, "reference file(s), repeatable");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const std::string& kv : overrides) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
        }
        if (!seed.empty()) cfg.set("seed", seed);
        if (!threads.empty()) cfg.set("threads", threads);
        if (baseline_mode) cfg.set("baseline_mode", "true");
        if (!constant_lambda.empty()) cfg.set("constant_lambda", constant_lambda);
        if (!dump_memory.empty()) cfg.set("dump_memory", dump_memory);
        if (!refs.empty()) {
            std::string joined;
            for (size_t i = 0; i < refs.size(); ++i) {
                if (i) joined += ',';
                joined += refs[i];
            }
            cfg.set("test_ref", joined);
        }

        if (gen_toy->parsed()) return cmd_gen_toy(cfg);
        if (align->parsed()) return cmd_align(cfg);
        if (extract->parsed()) return cmd_extract(cfg);
        if (lm->parsed()) return cmd_lm(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (translate->parsed()) return cmd_translate(cfg, trace);
        if (eval->parsed()) return cmd_eval(cfg);
        if (analyze->parsed()) return cmd_analyze(cfg, null_ablation_flag);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
