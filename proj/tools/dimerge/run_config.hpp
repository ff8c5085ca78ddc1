#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dimerge/diagnostics.hpp"
#include "dimerge/merge.hpp"
#include "dimerge/tensor_store.hpp"

namespace dimerge::cli {

inline constexpr int kConfigVersion = 1;

/// Scope as written in the config, kept alongside the built filter so the
/// resolved config can be echoed back.
struct ScopeSpec {
    ScopePreset preset = ScopePreset::full;
    std::optional<std::pair<int, int>> layers;
    ScopeKeys keys;
    std::optional<std::vector<std::string>> include;
    std::optional<std::vector<std::string>> exclude;
    std::optional<std::vector<std::string>> range_exempt;

    ScopeFilter build() const;
};

struct DiagnoseSpec {
    std::optional<std::filesystem::path> csv_path;
    std::optional<std::filesystem::path> json_path;
    std::string layer_index_pattern = "model.layers.{n}.*";
    std::vector<std::pair<std::string, std::string>> module_labels;

    ModuleKeySchema schema() const;
};

/// Fully resolved run description: file defaults, family preset, `--set`
/// overrides and flags all applied.
struct RunConfig {
    std::optional<std::string> family;
    std::filesystem::path base_path;
    std::filesystem::path multilingual_path;
    std::filesystem::path anchor_path;
    std::filesystem::path output_path;
    std::optional<std::filesystem::path> report_path;
    std::optional<std::size_t> threads;
    std::uint64_t shard_limit_bytes = kDefaultShardLimit;
    std::vector<RemapRule> remap_base;
    std::vector<RemapRule> remap_multilingual;
    std::vector<RemapRule> remap_anchor;
    ScopeSpec scope;
    MergeConfig merge;
    DiagnoseSpec diagnose;

    /// Echo of every effective setting; parsing it yields the same config.
    nlohmann::json to_json() const;
    std::filesystem::path effective_report_path() const;
    std::size_t worker_count() const;
};

/// Sets a leaf addressed by a dotted path, e.g. "merge.scope.preset=layers".
/// The value is parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Validates the document and fills defaults. Throws dimerge::Error (config.*).
RunConfig parse_run_config(const nlohmann::json& doc);

nlohmann::json read_config_file(const std::filesystem::path& path);

}  // namespace dimerge::cli
