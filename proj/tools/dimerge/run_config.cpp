#include "run_config.hpp"

#include <fstream>
#include <set>

#include "dimerge/error.hpp"
#include "dimerge/parallel.hpp"
#include "dimerge/presets.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace dimerge::cli {
namespace {

[[noreturn]] void invalid(const std::string& msg) { throw_error(ErrorCategory::config, "config.invalid_value", msg); }

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) invalid(label() + " must be a JSON object");
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw_error(ErrorCategory::config, "config.unknown_key", "unknown config key '" + path(key) + "'");
            }
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    template <class T>
    std::optional<T> get(const std::string& key) {
        if (!has(key)) return std::nullopt;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            invalid("config key '" + path(key) + "' has the wrong type");
        }
    }

    template <class T>
    T get_or(const std::string& key, T fallback) {
        auto v = get<T>(key);
        return v ? std::move(*v) : std::move(fallback);
    }

    const json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

private:
    std::string label() const { return where_.empty() ? "config" : "'" + where_ + "'"; }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::vector<RemapRule> parse_rules(const json& arr, const std::string& where) {
    if (!arr.is_array()) invalid("'" + where + "' must be an array of {from, to} objects");
    std::vector<RemapRule> rules;
    for (const auto& item : arr) {
        Section s(item, where);
        auto from = s.get<std::string>("from");
        auto to = s.get<std::string>("to");
        if (!from || !to) invalid("every rule in '" + where + "' needs 'from' and 'to'");
        rules.push_back({*from, *to});
    }
    return rules;
}

json rules_json(const std::vector<RemapRule>& rules) {
    json arr = json::array();
    for (const auto& r : rules) arr.push_back({{"from", r.match_prefix}, {"to", r.replacement_prefix}});
    return arr;
}

fs::path path_or_empty(Section& s, const std::string& key) {
    return fs::path(s.get_or<std::string>(key, ""));
}

}  // namespace

ScopeFilter ScopeSpec::build() const {
    ScopeFilter f = make_scope(preset, keys, layers);
    if (preset == ScopePreset::custom && layers) {
        f.layer_range = layers;
    }
    if (include) f.include_patterns = *include;
    if (exclude) f.exclude_patterns = *exclude;
    if (range_exempt) f.range_exempt_patterns = *range_exempt;
    return f;
}

ModuleKeySchema DiagnoseSpec::schema() const {
    ModuleKeySchema s;
    s.layer_index = LayerIndexPattern(layer_index_pattern);
    s.module_labels = module_labels;
    return s;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        invalid("override '" + assignment + "' must look like dotted.key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) invalid("override key '" + key + "' has an empty segment");
        if (!node->is_object()) {
            if (!node->is_null()) invalid("override key '" + key + "' descends into a non-object");
            *node = json::object();
        }
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = std::move(value);
}

json read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::config, "config.missing_path", "cannot open config '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw_error(ErrorCategory::config, "config.malformed", "config '" + path.string() + "' is not valid JSON: " +
                                                                   e.what());
    }
}

RunConfig parse_run_config(const json& doc) {
    RunConfig rc;
    Section top(doc, "");
    const int version = top.get_or<int>("version", kConfigVersion);
    if (version != kConfigVersion) invalid("unsupported config version " + std::to_string(version));

    rc.family = top.get<std::string>("family");
    std::optional<FamilyPreset> family;
    if (rc.family) family = family_preset(*rc.family);

    rc.base_path = path_or_empty(top, "base_path");
    rc.multilingual_path = path_or_empty(top, "multilingual_path");
    rc.anchor_path = path_or_empty(top, "anchor_path");
    rc.output_path = path_or_empty(top, "output_path");
    if (auto p = top.get<std::string>("report_path")) rc.report_path = fs::path(*p);
    if (auto t = top.get<long long>("threads")) {
        if (*t <= 0) invalid("threads must be a positive integer");
        rc.threads = static_cast<std::size_t>(*t);
    }
    rc.shard_limit_bytes = top.get_or<std::uint64_t>("shard_limit_bytes", kDefaultShardLimit);
    if (rc.shard_limit_bytes == 0) invalid("shard_limit_bytes must be positive");

    if (family) rc.remap_anchor = family->anchor_remap;
    if (top.has("remap")) {
        Section remap(top.child("remap"), "remap");
        if (remap.has("base")) rc.remap_base = parse_rules(remap.child("base"), "remap.base");
        if (remap.has("multilingual")) {
            rc.remap_multilingual = parse_rules(remap.child("multilingual"), "remap.multilingual");
        }
        if (remap.has("anchor")) rc.remap_anchor = parse_rules(remap.child("anchor"), "remap.anchor");
    }

    if (family) {
        rc.scope.keys = family->scope_keys;
        rc.diagnose.layer_index_pattern = family->schema.layer_index.pattern();
        rc.diagnose.module_labels = family->schema.module_labels;
    } else {
        rc.diagnose.module_labels = family_preset("llama").schema.module_labels;
    }

    MergeConfig& m = rc.merge;
    std::optional<BaselineParams> baseline;
    if (top.has("merge")) {
        Section ms(top.child("merge"), "merge");
        if (auto v = ms.get<std::string>("method")) m.method = parse_method(*v);
        if (auto v = ms.get<std::string>("estimator")) m.estimator = parse_estimator(*v);
        if (auto v = ms.get<std::string>("aggregation")) m.aggregation.mode = parse_aggregation(*v);
        m.aggregation.lambda = ms.get_or<double>("aggregation_lambda", m.aggregation.lambda);
        m.epsilon = ms.get_or<double>("epsilon", m.epsilon);
        if (auto v = ms.get<std::string>("shape_policy")) m.shape_policy = parse_shape_policy(*v);
        m.pass_through_high_rank = ms.get_or<bool>("pass_through_high_rank", false);
        m.seed = ms.get_or<std::uint64_t>("seed", 0);
        if (auto v = ms.get<std::string>("output_dtype")) m.output_dtype = parse_output_dtype(*v);

        if (ms.has("scope")) {
            Section ss(ms.child("scope"), "merge.scope");
            if (auto v = ss.get<std::string>("preset")) rc.scope.preset = parse_scope_preset(*v);
            if (auto v = ss.get<std::vector<int>>("layers")) {
                if (v->size() != 2) invalid("merge.scope.layers must be [lo, hi]");
                rc.scope.layers = std::pair{(*v)[0], (*v)[1]};
            }
            if (auto v = ss.get<std::string>("layer_index_pattern")) rc.scope.keys.layer_index_pattern = *v;
            if (auto v = ss.get<std::vector<std::string>>("embed_patterns")) rc.scope.keys.embed_patterns = *v;
            if (auto v = ss.get<std::vector<std::string>>("head_patterns")) rc.scope.keys.head_patterns = *v;
            rc.scope.include = ss.get<std::vector<std::string>>("include");
            rc.scope.exclude = ss.get<std::vector<std::string>>("exclude");
            rc.scope.range_exempt = ss.get<std::vector<std::string>>("range_exempt");
        }
        if (ms.has("baseline")) {
            Section bs(ms.child("baseline"), "merge.baseline");
            BaselineParams b;
            b.lambda = bs.get_or<double>("lambda", b.lambda);
            b.dare_drop_p = bs.get_or<double>("dare_drop_p", b.dare_drop_p);
            b.ties_density = bs.get_or<double>("ties_density", b.ties_density);
            b.breadcrumbs_beta = bs.get_or<double>("breadcrumbs_beta", b.breadcrumbs_beta);
            b.breadcrumbs_gamma = bs.get_or<double>("breadcrumbs_gamma", b.breadcrumbs_gamma);
            baseline = b;
        }
    }
    // Baseline parameters only exist for baseline methods; dim3 ignores the block.
    if (is_baseline(m.method)) m.baseline_params = baseline.value_or(BaselineParams{});
    m.scope = rc.scope.build();
    m.validate();

    if (top.has("diagnose")) {
        Section ds(top.child("diagnose"), "diagnose");
        if (auto v = ds.get<std::string>("csv_path")) rc.diagnose.csv_path = fs::path(*v);
        if (auto v = ds.get<std::string>("json_path")) rc.diagnose.json_path = fs::path(*v);
        if (auto v = ds.get<std::string>("layer_index_pattern")) rc.diagnose.layer_index_pattern = *v;
        if (ds.has("module_labels")) {
            const auto& labels = ds.child("module_labels");
            if (!labels.is_array()) invalid("diagnose.module_labels must be an array of [substring, label] pairs");
            rc.diagnose.module_labels.clear();
            for (const auto& pair : labels) {
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
                    invalid("diagnose.module_labels entries must be [substring, label]");
                }
                rc.diagnose.module_labels.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
            }
        }
    }
    rc.diagnose.schema();  // validates the layer pattern
    return rc;
}

json RunConfig::to_json() const {
    json j;
    j["version"] = kConfigVersion;
    if (family) j["family"] = *family;
    j["base_path"] = base_path.string();
    j["multilingual_path"] = multilingual_path.string();
    j["anchor_path"] = anchor_path.string();
    j["output_path"] = output_path.string();
    if (report_path) j["report_path"] = report_path->string();
    if (threads) j["threads"] = *threads;
    j["shard_limit_bytes"] = shard_limit_bytes;
    j["remap"] = {{"base", rules_json(remap_base)},
                  {"multilingual", rules_json(remap_multilingual)},
                  {"anchor", rules_json(remap_anchor)}};

    json scope_j{{"preset", scope_preset_name(scope.preset)},
                 {"layer_index_pattern", scope.keys.layer_index_pattern},
                 {"embed_patterns", scope.keys.embed_patterns},
                 {"head_patterns", scope.keys.head_patterns}};
    if (scope.layers) scope_j["layers"] = {scope.layers->first, scope.layers->second};
    if (scope.include) scope_j["include"] = *scope.include;
    if (scope.exclude) scope_j["exclude"] = *scope.exclude;
    if (scope.range_exempt) scope_j["range_exempt"] = *scope.range_exempt;

    json merge_j{{"method", method_name(merge.method)},
                 {"estimator", estimator_name(merge.estimator)},
                 {"aggregation", aggregation_name(merge.aggregation.mode)},
                 {"aggregation_lambda", merge.aggregation.lambda},
                 {"epsilon", merge.epsilon},
                 {"shape_policy", shape_policy_name(merge.shape_policy)},
                 {"pass_through_high_rank", merge.pass_through_high_rank},
                 {"seed", merge.seed},
                 {"output_dtype", output_dtype_name(merge.output_dtype)},
                 {"scope", scope_j}};
    if (merge.baseline_params) {
        const auto& b = *merge.baseline_params;
        merge_j["baseline"] = {{"lambda", b.lambda},
                               {"dare_drop_p", b.dare_drop_p},
                               {"ties_density", b.ties_density},
                               {"breadcrumbs_beta", b.breadcrumbs_beta},
                               {"breadcrumbs_gamma", b.breadcrumbs_gamma}};
    }
    j["merge"] = std::move(merge_j);

    json diag{{"layer_index_pattern", diagnose.layer_index_pattern}, {"module_labels", json::array()}};
    for (const auto& [needle, label] : diagnose.module_labels) diag["module_labels"].push_back({needle, label});
    if (diagnose.csv_path) diag["csv_path"] = diagnose.csv_path->string();
    if (diagnose.json_path) diag["json_path"] = diagnose.json_path->string();
    j["diagnose"] = std::move(diag);
    return j;
}

fs::path RunConfig::effective_report_path() const {
    if (report_path) return *report_path;
    fs::path p = output_path;
    if (!p.has_filename()) p = p.parent_path();
    return p.string() + ".report.json";
}

std::size_t RunConfig::worker_count() const { return threads.value_or(default_worker_count()); }

}  // namespace dimerge::cli
