#pragma once

#include "phrasedec/config.hpp"

namespace phrasedec {

// Subcommand bodies. Each returns 0 on success and throws ConfigError /
// DataError / NumericError otherwise (mapped to exit codes 2/3/4 by main).
int cmd_gen_toy(const RunConfig& cfg);
int cmd_align(const RunConfig& cfg);
int cmd_extract(const RunConfig& cfg);
int cmd_lm(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_translate(const RunConfig& cfg, bool write_trace);
int cmd_eval(const RunConfig& cfg);
int cmd_analyze(const RunConfig& cfg, bool null_ablation_flag);

}  // namespace phrasedec
