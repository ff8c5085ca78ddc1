#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dimerge::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitNumeric = 4,
};

struct CommandOptions {
    std::filesystem::path config_path;
    std::vector<std::string> set;  // dotted.key=value overrides, applied in order
    std::optional<std::size_t> threads;
    std::optional<std::filesystem::path> output;
};

/// load -> remap -> align -> merge -> save (atomically) + JSON report.
int run_merge(const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// load -> remap -> diagnose -> CSV/JSON tables. `output` overrides the CSV path.
int run_diagnose(const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// Lists tensor names, dtypes and shapes plus the total parameter count.
int run_inspect(const std::filesystem::path& checkpoint, std::ostream& out, std::ostream& err);

}  // namespace dimerge::cli
