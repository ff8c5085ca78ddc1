#include "dimerge/scope.hpp"

#include <fnmatch.h>

#include <limits>

#include "dimerge/error.hpp"

namespace dimerge {

bool glob_match(const std::string& pattern, const std::string& key) {
    return ::fnmatch(pattern.c_str(), key.c_str(), 0) == 0;
}

LayerIndexPattern::LayerIndexPattern(std::string pattern) : pattern_(std::move(pattern)) {
    std::string re;
    int captures = 0;
    for (std::size_t i = 0; i < pattern_.size(); ++i) {
        const char c = pattern_[i];
        if (pattern_.compare(i, 3, "{n}") == 0) {
            re += "(\\d+)";
            ++captures;
            i += 2;
        } else if (c == '*') {
            re += ".*";
        } else if (c == '?') {
            re += '.';
        } else if (std::string_view("\\^$.|+()[]{}").find(c) != std::string_view::npos) {
            re += '\\';
            re += c;
        } else {
            re += c;
        }
    }
    if (captures != 1) {
        throw_error(ErrorCategory::config, "config.invalid_pattern",
                    "layer index pattern '" + pattern_ + "' must contain exactly one {n}");
    }
    regex_ = std::regex(re, std::regex::ECMAScript | std::regex::optimize);
    valid_ = true;
}

std::optional<int> LayerIndexPattern::parse(const std::string& key) const {
    if (!valid_) return std::nullopt;
    std::smatch m;
    if (!std::regex_match(key, m, regex_)) return std::nullopt;
    try {
        return std::stoi(m[1].str());
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

std::string scope_preset_name(ScopePreset preset) {
    switch (preset) {
        case ScopePreset::full: return "full";
        case ScopePreset::embed_only: return "embed_only";
        case ScopePreset::llm_only: return "llm_only";
        case ScopePreset::lmhead_only: return "lmhead_only";
        case ScopePreset::layers: return "layers";
        case ScopePreset::custom: return "custom";
    }
    return "?";
}

ScopePreset parse_scope_preset(const std::string& name) {
    for (auto p : {ScopePreset::full, ScopePreset::embed_only, ScopePreset::llm_only, ScopePreset::lmhead_only,
                   ScopePreset::layers, ScopePreset::custom}) {
        if (scope_preset_name(p) == name) return p;
    }
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown scope preset '" + name + "'");
}

namespace {

bool any_match(const std::vector<std::string>& patterns, const std::string& key) {
    for (const auto& p : patterns) {
        if (glob_match(p, key)) return true;
    }
    return false;
}

}  // namespace

bool ScopeFilter::admits(const std::string& key) const {
    if (!any_match(include_patterns, key)) return false;
    if (any_match(exclude_patterns, key)) return false;
    if (layer_range) {
        if (any_match(range_exempt_patterns, key)) return true;
        const auto layer = layer_index.parse(key);
        return layer && *layer >= layer_range->first && *layer <= layer_range->second;
    }
    return true;
}

ScopeFilter make_scope(ScopePreset preset, const ScopeKeys& keys, std::optional<std::pair<int, int>> range) {
    ScopeFilter f;
    f.preset = preset;
    f.layer_index = LayerIndexPattern(keys.layer_index_pattern);
    switch (preset) {
        case ScopePreset::full:
        case ScopePreset::custom:
            break;
        case ScopePreset::embed_only:
            f.include_patterns = keys.embed_patterns;
            break;
        case ScopePreset::lmhead_only:
            f.include_patterns = keys.head_patterns;
            break;
        case ScopePreset::llm_only:
            // Transformer blocks only: every key carrying a layer index.
            f.layer_range = std::pair{0, std::numeric_limits<int>::max()};
            break;
        case ScopePreset::layers:
            if (!range || range->first > range->second || range->first < 0) {
                throw_error(ErrorCategory::config, "config.invalid_value",
                            "the 'layers' scope preset needs a range lo <= hi with lo >= 0");
            }
            f.layer_range = range;
            f.range_exempt_patterns = keys.embed_patterns;
            f.range_exempt_patterns.insert(f.range_exempt_patterns.end(), keys.head_patterns.begin(),
                                           keys.head_patterns.end());
            break;
    }
    return f;
}

}  // namespace dimerge
