#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"

namespace {

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("dimerge");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("DIMERGE_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    using dimerge::cli::CommandOptions;

    CLI::App app{"Training-free checkpoint merging for shared-backbone models"};
    app.require_subcommand(1);

    CommandOptions merge_opts;
    std::size_t merge_threads = 0;
    std::string merge_output;
    auto* merge = app.add_subcommand("merge", "Merge the multilingual residual into the multimodal anchor");
    merge->add_option("--config", merge_opts.config_path, "Run configuration (JSON)")->required();
    merge->add_option("--set", merge_opts.set, "Override a config leaf: dotted.key=value (repeatable)");
    merge->add_option("--threads", merge_threads, "Worker threads")->check(CLI::PositiveNumber);
    merge->add_option("--output", merge_output, "Output checkpoint path");

    CommandOptions diag_opts;
    std::size_t diag_threads = 0;
    std::string diag_output;
    auto* diag = app.add_subcommand("diagnose", "Export residual heterogeneity tables");
    diag->add_option("--config", diag_opts.config_path, "Run configuration (JSON)")->required();
    diag->add_option("--set", diag_opts.set, "Override a config leaf: dotted.key=value (repeatable)");
    diag->add_option("--threads", diag_threads, "Worker threads")->check(CLI::PositiveNumber);
    diag->add_option("--output", diag_output, "CSV output path");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "List tensors of a checkpoint");
    inspect->add_option("checkpoint", inspect_path, "Safetensors file or sharded directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dimerge::cli::kExitConfig;
    }

    if (*merge) {
        if (merge_threads) merge_opts.threads = merge_threads;
        if (!merge_output.empty()) merge_opts.output = merge_output;
        return dimerge::cli::run_merge(merge_opts, std::cout, std::cerr);
    }
    if (*diag) {
        if (diag_threads) diag_opts.threads = diag_threads;
        if (!diag_output.empty()) diag_opts.output = diag_output;
        return dimerge::cli::run_diagnose(diag_opts, std::cout, std::cerr);
    }
    return dimerge::cli::run_inspect(inspect_path, std::cout, std::cerr);
}
