#pragma once

namespace tae {

/// Exit statuses of the command-line tool.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int usage = 2;           // unknown flag / bad syntax
inline constexpr int missing_input = 3;
inline constexpr int config_conflict = 4;
}  // namespace exit_code

int run_cli(int argc, char** argv);

}  // namespace tae
