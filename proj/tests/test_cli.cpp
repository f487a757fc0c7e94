#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "phrasedec/commands.hpp"
#include "phrasedec/config.hpp"

using namespace phrasedec;
namespace fs = std::filesystem;

namespace {

struct WorkDir {
    fs::path path;
    WorkDir() {
        path = fs::temp_directory_path() /
               ("phrasedec_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~WorkDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Mini end-to-end configuration: tiny corpus, tiny model, few epochs.
RunConfig mini_config(const WorkDir& dir) {
    RunConfig cfg;
    cfg.set("work_dir", dir.sub("work"));
    cfg.set("toy_dir", dir.sub("toy"));
    cfg.set("toy_pairs", "60");
    cfg.set("toy_dev", "8");
    cfg.set("toy_test", "8");
    cfg.set("toy_idioms", "12");
    cfg.set("train_src", dir.sub("toy") + "/train.src");
    cfg.set("train_tgt", dir.sub("toy") + "/train.tgt");
    cfg.set("train_chunks", dir.sub("toy") + "/train.chunks");
    cfg.set("dev_src", dir.sub("toy") + "/dev.src");
    cfg.set("dev_tgt", dir.sub("toy") + "/dev.tgt");
    cfg.set("dev_chunks", dir.sub("toy") + "/dev.chunks");
    cfg.set("test_src", dir.sub("toy") + "/test.src");
    cfg.set("test_chunks", dir.sub("toy") + "/test.chunks");
    cfg.set("test_ref", dir.sub("toy") + "/test.tgt");
    cfg.set("embed_dim", "8");
    cfg.set("tag_embed_dim", "3");
    cfg.set("hidden_dim", "12");
    cfg.set("attn_dim", "8");
    cfg.set("out_hidden_dim", "10");
    cfg.set("balancer_hidden1", "8");
    cfg.set("balancer_hidden2", "6");
    cfg.set("scorer_hidden1", "8");
    cfg.set("scorer_hidden2", "6");
    cfg.set("epochs", "2");
    cfg.set("batch_size", "8");
    cfg.set("beam_width", "4");
    cfg.set("max_output_len", "20");
    cfg.set("seed", "11");
    return cfg;
}

}  // namespace

TEST_CASE("config registry defaults and typed getters") {
    RunConfig cfg;
    CHECK(cfg.geti("beam_width") == 10);
    CHECK(cfg.getd("adadelta_rho") == doctest::Approx(0.95));
    CHECK(cfg.getu("seed") == 1);
    CHECK_FALSE(cfg.getb("baseline_mode"));
    CHECK(cfg.str("work_dir") == "work");
    CHECK(cfg.path_or_default("align_file", "train.align") == "work/train.align");
    cfg.set("align_file", "/tmp/x.align");
    CHECK(cfg.path_or_default("align_file", "train.align") == "/tmp/x.align");
}

TEST_CASE("unknown config keys are rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.str("no_such_key"), ConfigError);
}

TEST_CASE("config files parse key = value lines with comments") {
    WorkDir dir;
    std::string path = dir.sub("run.cfg");
    {
        std::ofstream os(path);
        os << "# comment\n\nbeam_width = 3\nseed=42\n";
    }
    RunConfig cfg;
    cfg.load_file(path);
    CHECK(cfg.geti("beam_width") == 3);
    CHECK(cfg.getu("seed") == 42);
    {
        std::ofstream os(path);
        os << "bogus_key = 1\n";
    }
    RunConfig cfg2;
    CHECK_THROWS_AS(cfg2.load_file(path), ConfigError);
}

TEST_CASE("help text enumerates every config key with its default") {
    std::string help = RunConfig::help_text();
    for (const ConfigKey& key : RunConfig::registry()) {
        CHECK(help.find(key.name) != std::string::npos);
    }
    CHECK(help.find("default: 10") != std::string::npos);  // beam_width
}

TEST_CASE("full mini pipeline runs end to end") {
    WorkDir dir;
    RunConfig cfg = mini_config(dir);
    REQUIRE(cmd_gen_toy(cfg) == 0);
    REQUIRE(cmd_align(cfg) == 0);
    REQUIRE(cmd_extract(cfg) == 0);
    REQUIRE(cmd_lm(cfg) == 0);
    REQUIRE(cmd_train(cfg) == 0);
    REQUIRE(cmd_translate(cfg, /*write_trace=*/true) == 0);
    REQUIRE(cmd_eval(cfg) == 0);
    REQUIRE(cmd_analyze(cfg, /*null_ablation=*/true) == 0);

    CHECK(fs::exists(dir.sub("work") + "/train.align"));
    CHECK(fs::exists(dir.sub("work") + "/phrase-table"));
    CHECK(fs::exists(dir.sub("work") + "/lm.bin"));
    CHECK(fs::exists(dir.sub("work") + "/model.ckpt"));
    CHECK(fs::exists(dir.sub("work") + "/model.ckpt.meta"));
    CHECK(fs::exists(dir.sub("work") + "/output.txt"));
    CHECK(fs::exists(dir.sub("work") + "/output.trace.jsonl"));
    CHECK(fs::exists(dir.sub("work") + "/output.txt.bleu.json"));
    CHECK(fs::exists(dir.sub("work") + "/output.trace.jsonl.usage.json"));
    CHECK(fs::exists(dir.sub("work") + "/output.trace.jsonl.null.txt"));

    // training log: one tab-separated line per epoch
    std::string log = slurp(dir.sub("work") + "/train.log");
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);
    CHECK(log.find('\t') != std::string::npos);

    // output has one line per test sentence
    std::string out = slurp(dir.sub("work") + "/output.txt");
    CHECK(std::count(out.begin(), out.end(), '\n') == 8);
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
    WorkDir dir;
    RunConfig cfg = mini_config(dir);
    REQUIRE(cmd_gen_toy(cfg) == 0);
    REQUIRE(cmd_align(cfg) == 0);
    REQUIRE(cmd_extract(cfg) == 0);
    REQUIRE(cmd_lm(cfg) == 0);
    REQUIRE(cmd_train(cfg) == 0);
    REQUIRE(cmd_translate(cfg, true) == 0);
    std::string first_output = slurp(dir.sub("work") + "/output.txt");
    std::string first_table = slurp(dir.sub("work") + "/phrase-table");
    std::string first_traces = slurp(dir.sub("work") + "/output.trace.jsonl");

    // rerun translate (idempotence) and then the whole pipeline in a second
    // work dir (determinism)
    REQUIRE(cmd_translate(cfg, true) == 0);
    CHECK(slurp(dir.sub("work") + "/output.txt") == first_output);

    RunConfig cfg2 = mini_config(dir);
    cfg2.set("work_dir", dir.sub("work2"));
    cfg2.set("train_src", dir.sub("toy") + "/train.src");  // same corpus
    REQUIRE(cmd_align(cfg2) == 0);
    REQUIRE(cmd_extract(cfg2) == 0);
    REQUIRE(cmd_lm(cfg2) == 0);
    REQUIRE(cmd_train(cfg2) == 0);
    REQUIRE(cmd_translate(cfg2, true) == 0);
    CHECK(slurp(dir.sub("work2") + "/output.txt") == first_output);
    CHECK(slurp(dir.sub("work2") + "/phrase-table") == first_table);
    CHECK(slurp(dir.sub("work2") + "/output.trace.jsonl") == first_traces);
}

TEST_CASE("baseline mode translates without SMT artifacts") {
    WorkDir dir;
    RunConfig cfg = mini_config(dir);
    REQUIRE(cmd_gen_toy(cfg) == 0);
    cfg.set("baseline_mode", "true");
    REQUIRE(cmd_train(cfg) == 0);
    REQUIRE(cmd_translate(cfg, true) == 0);
    // no phrase fragments can appear in baseline traces
    auto traces = slurp(dir.sub("work") + "/output.trace.jsonl");
    CHECK(traces.find("\"phrase\"") == std::string::npos);
}

TEST_CASE("missing inputs produce config errors") {
    WorkDir dir;
    RunConfig cfg;
    cfg.set("work_dir", dir.sub("w"));
    CHECK_THROWS_AS(cmd_align(cfg), ConfigError);   // train_src unset
    CHECK_THROWS_AS(cmd_translate(cfg, false), DataError);  // no model
}

#ifdef PHRASEDEC_BIN
namespace {

int run_binary(const std::string& args, const std::string& out_path) {
    std::string cmd = std::string(PHRASEDEC_BIN) + " " + args + " > " + out_path +
                      " 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("binary exit codes follow the documented contract") {
    WorkDir dir;
    // unknown config key -> 2
    CHECK(run_binary("align --set no_such_key=1", dir.sub("o1")) == 2);
    // missing corpus paths -> 2 (config), unreadable file -> 3 (data)
    CHECK(run_binary("align", dir.sub("o2")) == 2);
    CHECK(run_binary("align --set train_src=/nonexistent/a --set train_tgt=/nonexistent/b --set work_dir=" +
                         dir.sub("w"),
                     dir.sub("o3")) == 3);
}

TEST_CASE("binary --help lists subcommands and config keys") {
    WorkDir dir;
    CHECK(run_binary("--help", dir.sub("help.txt")) == 0);
    std::string help = slurp(dir.sub("help.txt"));
    for (const char* sub :
         {"align", "extract", "lm", "train", "translate", "eval", "analyze",
          "gen-toy"})
        CHECK(help.find(sub) != std::string::npos);
    for (const ConfigKey& key : RunConfig::registry())
        CHECK(help.find(key.name) != std::string::npos);
}
#endif
