#pragma once

#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

namespace dimerge {

/// Shell-style glob ('*', '?', '[...]') matched against the whole key.
bool glob_match(const std::string& pattern, const std::string& key);

/// A glob in which the token "{n}" captures a decimal layer index,
/// e.g. "*.layers.{n}.*".
class LayerIndexPattern {
public:
    LayerIndexPattern() = default;
    explicit LayerIndexPattern(std::string pattern);

    const std::string& pattern() const noexcept { return pattern_; }
    std::optional<int> parse(const std::string& key) const;

private:
    std::string pattern_;
    std::regex regex_;
    bool valid_ = false;
};

enum class ScopePreset { full, embed_only, llm_only, lmhead_only, layers, custom };

std::string scope_preset_name(ScopePreset preset);
ScopePreset parse_scope_preset(const std::string& name);

/// Key families a preset needs to know about; these differ per model family.
struct ScopeKeys {
    std::vector<std::string> embed_patterns{"*embed_tokens*"};
    std::vector<std::string> head_patterns{"*lm_head*"};
    std::string layer_index_pattern{"*.layers.{n}.*"};
};

/// Decides which aligned backbone tensors get merged. A key is in scope iff it
/// matches an include pattern, matches no exclude pattern, and, when a layer
/// range is set, either has a parsed layer index inside [lo, hi] or matches a
/// range-exempt pattern.
struct ScopeFilter {
    ScopePreset preset = ScopePreset::full;
    std::vector<std::string> include_patterns{"*"};
    std::vector<std::string> exclude_patterns;
    std::optional<std::pair<int, int>> layer_range;
    LayerIndexPattern layer_index{"*.layers.{n}.*"};
    std::vector<std::string> range_exempt_patterns;

    bool admits(const std::string& key) const;
};

/// Builds the filter for a preset. `layers` requires `range`; it also admits
/// the embedding and head tensors (a contiguous block plus embed and head).
ScopeFilter make_scope(ScopePreset preset, const ScopeKeys& keys = {},
                       std::optional<std::pair<int, int>> range = std::nullopt);

}  // namespace dimerge
