// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <string>

namespace mtdao {

enum ExitCode : int { kExitOk = 0, kExitConfigError = 1, kExitDiverged = 2 };

/// Worker-thread cap from the MTDAO_THREADS value (null when unset). Throws Error
/// for anything but a positive integer.
std::size_t thread_cap(const char* env_value);

int cmd_run(const std::string& config_path, const std::string& out_dir, std::ostream& out, std::ostream& err);
int cmd_theory(const std::string& config_path, const std::optional<std::string>& csv_path, std::ostream& out,
               std::ostream& err);
int cmd_cost(const std::string& config_path, const std::optional<std::string>& csv_path, std::ostream& out,
             std::ostream& err);
/// With `b_is_ddp`, the second config runs through the all-reduce-every-step reference.
int cmd_compare(const std::string& config_a, const std::string& config_b, const std::optional<std::string>& csv_path,
                bool b_is_ddp, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mtdao
