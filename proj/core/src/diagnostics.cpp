#include "dimerge/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "dimerge/error.hpp"
#include "dimerge/parallel.hpp"

using nlohmann::json;

namespace dimerge {
namespace {

constexpr const char* kOtherLabel = "other";

struct GroupAccumulator {
    double sq_ml = 0, sq_mm = 0;
    double dir_ml = 0, dir_mm = 0, cross = 0;  // column-weighted sums
    std::size_t columns = 0, tensors = 0, elements = 0;
};

std::string format_sig9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_sig9(*v) : std::string(); }

std::optional<double> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

void require_rows(const std::vector<HeatmapRow>& rows) {
    if (rows.empty()) throw_error(ErrorCategory::config, "config.invalid_value", "no heatmap rows to export");
}

}  // namespace

std::string ModuleKeySchema::label_for(const std::string& key) const {
    for (const auto& [needle, label] : module_labels) {
        if (key.find(needle) != std::string::npos) return label;
    }
    return kOtherLabel;
}

Diagnosis diagnose(const Checkpoint& base, const Checkpoint& ml, const Checkpoint& anchor,
                   const ModuleKeySchema& schema, double epsilon, ShapePolicy shape_policy, std::size_t workers) {
    const auto alignment = align_triple(base, ml, anchor, ScopeFilter{}, shape_policy);
    const auto& triples = alignment.triples;
    std::vector<HeterogeneityStats> stats(triples.size());
    parallel_for(triples.size(), workers, [&](std::size_t i) { stats[i] = tensor_stats(triples[i], epsilon); });

    std::map<std::string, std::size_t> label_rank;
    for (const auto& [needle, label] : schema.module_labels) label_rank.emplace(label, label_rank.size());
    label_rank.emplace(kOtherLabel, label_rank.size());

    // Keyed by (layer, label order) so iteration yields the output order.
    std::map<std::pair<int, std::size_t>, std::pair<std::string, GroupAccumulator>> groups;
    bool any_layer = false;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto layer = schema.layer_index.parse(triples[i].name);
        any_layer = any_layer || layer.has_value();
        const auto label = schema.label_for(triples[i].name);
        auto& [name, acc] = groups[{layer.value_or(-1), label_rank.at(label)}];
        name = label;
        const auto& s = stats[i];
        acc.sq_ml += s.residual_norm_ml * s.residual_norm_ml;
        acc.sq_mm += s.residual_norm_mm * s.residual_norm_mm;
        if (s.columns > 0) {
            const double c = static_cast<double>(s.columns);
            acc.dir_ml += c * *s.mean_dir_dev_ml;
            acc.dir_mm += c * *s.mean_dir_dev_mm;
            acc.cross += c * *s.mean_cross_cosine;
            acc.columns += s.columns;
        }
        ++acc.tensors;
        acc.elements += s.elements;
    }

    Diagnosis out;
    if (!triples.empty() && !any_layer) {
        out.warnings.push_back("layer index pattern '" + schema.layer_index.pattern() +
                               "' matched no backbone key; all rows are reported under layer -1");
    }
    for (const auto& [key, entry] : groups) {
        const auto& [label, acc] = entry;
        HeatmapRow row;
        row.layer = key.first;
        row.module = label;
        row.residual_norm_ml = std::sqrt(acc.sq_ml);
        row.residual_norm_mm = std::sqrt(acc.sq_mm);
        if (acc.columns > 0) {
            const double c = static_cast<double>(acc.columns);
            row.mean_dir_dev_ml = acc.dir_ml / c;
            row.mean_dir_dev_mm = acc.dir_mm / c;
            row.mean_cross_cosine = acc.cross / c;
        }
        row.tensors = acc.tensors;
        row.elements = acc.elements;
        out.rows.push_back(std::move(row));
    }
    return out;
}

void export_csv(const std::vector<HeatmapRow>& rows, const std::filesystem::path& path) {
    require_rows(rows);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw_error(ErrorCategory::io, "io.write_failed", "cannot write '" + path.string() + "'");
    out << kHeatmapCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.layer << ',' << r.module << ',' << format_sig9(r.residual_norm_ml) << ','
            << format_sig9(r.residual_norm_mm) << ',' << format_optional(r.mean_dir_dev_ml) << ','
            << format_optional(r.mean_dir_dev_mm) << ',' << format_optional(r.mean_cross_cosine) << '\n';
    }
    if (!out) throw_error(ErrorCategory::io, "io.write_failed", "failed writing '" + path.string() + "'");
}

void export_json(const std::vector<HeatmapRow>& rows, const std::filesystem::path& path) {
    require_rows(rows);
    json arr = json::array();
    for (const auto& r : rows) {
        // Values go through the same 9-digit formatting as the CSV.
        auto sig = [](double v) { return std::stod(format_sig9(v)); };
        auto opt = [&](const std::optional<double>& v) { return v ? json(sig(*v)) : json(nullptr); };
        arr.push_back({{"layer", r.layer},
                       {"module", r.module},
                       {"norm_ml", sig(r.residual_norm_ml)},
                       {"norm_mm", sig(r.residual_norm_mm)},
                       {"dirdev_ml", opt(r.mean_dir_dev_ml)},
                       {"dirdev_mm", opt(r.mean_dir_dev_mm)},
                       {"cross_cos", opt(r.mean_cross_cosine)}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw_error(ErrorCategory::io, "io.write_failed", "cannot write '" + path.string() + "'");
    out << arr.dump(2) << '\n';
    if (!out) throw_error(ErrorCategory::io, "io.write_failed", "failed writing '" + path.string() + "'");
}

std::vector<HeatmapRow> load_heatmap_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "io.missing_file", "cannot open '" + path.string() + "'");
    std::vector<HeatmapRow> rows;
    try {
        const json arr = json::parse(in);
        for (const auto& o : arr) {
            HeatmapRow r;
            r.layer = o.at("layer").get<int>();
            r.module = o.at("module").get<std::string>();
            r.residual_norm_ml = o.at("norm_ml").get<double>();
            r.residual_norm_mm = o.at("norm_mm").get<double>();
            r.mean_dir_dev_ml = optional_from(o.at("dirdev_ml"));
            r.mean_dir_dev_mm = optional_from(o.at("dirdev_mm"));
            r.mean_cross_cosine = optional_from(o.at("cross_cos"));
            rows.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw_error(ErrorCategory::io, "io.malformed_file", "bad heatmap JSON '" + path.string() + "': " + e.what());
    }
    return rows;
}

}  // namespace dimerge
