#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsqa/config.hpp"

namespace tsqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUser = 2;

// Subcommand bodies. Each logs the resolved config into the output
// directory, performs its work, and returns an exit code; user-level
// problems (missing files, bad values) come back as kExitUser.
int cmd_gen(const config::RunConfig& cfg);
int cmd_train(const config::RunConfig& cfg);
int cmd_eval(const config::RunConfig& cfg, const std::string& checkpoint_path);
int cmd_diagnose(const config::RunConfig& cfg, const std::string& checkpoint_path,
                 int max_samples);
int cmd_ablate(const config::RunConfig& cfg, const std::vector<std::string>& tags,
               const std::vector<uint64_t>& seeds);

// Binary entry point: subcommand dispatch, config resolution (defaults,
// then --config file, then TSQA_OUT_DIR, then flags), error mapping onto
// the exit codes.
int run_cli(int argc, const char* const* argv);

}  // namespace tsqa::cli
