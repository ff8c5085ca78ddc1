#include "dimerge/merge.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "dimerge/error.hpp"
#include "dimerge/parallel.hpp"

using nlohmann::json;

namespace dimerge {
namespace {

using Clock = std::chrono::steady_clock;

struct Residuals {
    std::vector<double> base;
    std::vector<double> delta_ml;
    std::vector<double> delta_mm;
};

Residuals load_residuals(const AlignedTriple& t) {
    if (t.ml.shape() != t.base.shape() || t.mm.shape() != t.base.shape()) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "triple '" + t.name + "' has unequal shapes");
    }
    Residuals r{t.base.values(), t.ml.values(), t.mm.values()};
    for (std::size_t i = 0; i < r.base.size(); ++i) {
        if (!std::isfinite(r.base[i]) || !std::isfinite(r.delta_ml[i]) || !std::isfinite(r.delta_mm[i])) {
            throw_error(ErrorCategory::numeric, "numeric.non_finite", "tensor '" + t.name + "' has non-finite values");
        }
        r.delta_ml[i] -= r.base[i];
        r.delta_mm[i] -= r.base[i];
    }
    return r;
}

SalienceWeights weights_from(const AlignedTriple& t, const Residuals& r, const MergeConfig& cfg) {
    if (t.base.rank() == 2) {
        const auto rows = static_cast<std::size_t>(t.base.shape()[0]);
        const auto cols = static_cast<std::size_t>(t.base.shape()[1]);
        // Source matrices rebuilt from base + residual would round; decode them directly.
        const auto ml = t.ml.values();
        const auto mm = t.mm.values();
        const MatrixView<double> wb{r.base, rows, cols};
        const auto dev_ml = column_deviations({ml, rows, cols}, wb, cfg.epsilon);
        const auto dev_mm = column_deviations({mm, rows, cols}, wb, cfg.epsilon);
        const auto s_mag = estimate_salience(dev_ml.magnitude, dev_mm.magnitude, cfg.estimator, cfg.epsilon);
        const auto s_dir = estimate_salience(dev_ml.direction, dev_mm.direction, cfg.estimator, cfg.epsilon);
        return aggregate_branches(s_mag.ml, s_dir.ml, cfg.aggregation);
    }
    if (t.base.rank() == 1) {
        std::vector<double> dev_ml(r.base.size()), dev_mm(r.base.size());
        for (std::size_t i = 0; i < r.base.size(); ++i) {
            dev_ml[i] = std::abs(r.delta_ml[i]);
            dev_mm[i] = std::abs(r.delta_mm[i]);
        }
        return elementwise_salience(dev_ml, dev_mm, cfg.estimator, cfg.epsilon);
    }
    throw_error(ErrorCategory::shape, "shape.unsupported_rank",
                "tensor '" + t.name + "' has rank " + std::to_string(t.base.rank()) + "; only 1D and 2D merge");
}

// Column j of a row-major [rows, cols] matrix takes weight index j; a 1D
// tensor is its own single row.
std::vector<double> combine(const Residuals& r, const SalienceWeights& w, std::size_t cols) {
    std::vector<double> out(r.base.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t j = i % cols;
        const double update = w.omega_ml[j] * r.delta_ml[i] + w.omega_mm[j] * r.delta_mm[i];
        out[i] = update == 0.0 ? r.base[i] : r.base[i] + update;
    }
    return out;
}

std::size_t weight_columns(const AlignedTriple& t) {
    return t.base.rank() == 2 ? static_cast<std::size_t>(t.base.shape()[1]) : t.base.numel();
}

DType output_dtype(const MergeConfig& cfg, DType anchor) {
    return cfg.output_dtype == OutputDType::f32 ? DType::f32 : anchor;
}

struct TensorOutcome {
    std::vector<double> values;
    bool merged = false;
    std::string passthrough_reason;
    double omega_sum = 0;
    std::optional<WeightSummary> omega;
    double seconds = 0;
};

TensorOutcome merge_one(const AlignedTriple& t, const MergeConfig& cfg) {
    const auto start = Clock::now();
    TensorOutcome out;
    if (t.base.rank() != 1 && t.base.rank() != 2) {
        if (!cfg.pass_through_high_rank) {
            throw_error(ErrorCategory::shape, "shape.unsupported_rank",
                        "in-scope tensor '" + t.name + "' has rank " + std::to_string(t.base.rank()) +
                            "; enable pass_through_high_rank to copy it from the anchor");
        }
        out.passthrough_reason = "unsupported_rank";
        return out;
    }

    const auto r = load_residuals(t);
    const BaselineParams bp = cfg.baseline_params.value_or(BaselineParams{});
    switch (cfg.method) {
        case MergeMethod::dim3: {
            const auto w = weights_from(t, r, cfg);
            out.values = combine(r, w, std::max<std::size_t>(1, weight_columns(t)));
            if (!w.omega_ml.empty()) {
                WeightSummary s{0, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                                w.omega_ml.size()};
                for (double o : w.omega_ml) {
                    out.omega_sum += o;
                    s.min = std::min(s.min, o);
                    s.max = std::max(s.max, o);
                }
                s.mean = out.omega_sum / static_cast<double>(s.count);
                out.omega = s;
            }
            break;
        }
        case MergeMethod::task_arithmetic:
            out.values = apply_residuals(r.base, r.delta_ml, r.delta_mm, bp.lambda);
            break;
        case MergeMethod::dare:
            out.values = apply_residuals(r.base, dare_values(r.delta_ml, bp.dare_drop_p, cfg.seed, t.name + "::ml"),
                                         dare_values(r.delta_mm, bp.dare_drop_p, cfg.seed, t.name + "::mm"), bp.lambda);
            break;
        case MergeMethod::ties: {
            const auto merged = ties_merged_delta(r.delta_ml, r.delta_mm, bp.ties_density);
            const std::vector<double> zero(merged.size(), 0.0);
            out.values = apply_residuals(r.base, merged, zero, bp.lambda);
            break;
        }
        case MergeMethod::breadcrumbs:
            out.values = apply_residuals(r.base, breadcrumbs_values(r.delta_ml, bp.breadcrumbs_beta, bp.breadcrumbs_gamma),
                                         breadcrumbs_values(r.delta_mm, bp.breadcrumbs_beta, bp.breadcrumbs_gamma),
                                         bp.lambda);
            break;
    }
    out.merged = true;
    out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return out;
}

TensorRecord splice(const TensorRecord& anchor, const Shape& block, std::span<const double> values, DType dtype) {
    auto full = anchor.values();
    const Shape& shape = anchor.shape();
    if (shape.size() == 1) {
        std::copy(values.begin(), values.end(), full.begin());
    } else {
        const auto cols = static_cast<std::size_t>(shape[1]);
        const auto brows = static_cast<std::size_t>(block[0]);
        const auto bcols = static_cast<std::size_t>(block[1]);
        for (std::size_t i = 0; i < brows; ++i) {
            std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(i * bcols), bcols,
                        full.begin() + static_cast<std::ptrdiff_t>(i * cols));
        }
    }
    return TensorRecord::from_values(anchor.name(), dtype, shape, full);
}

}  // namespace

std::string method_name(MergeMethod method) {
    switch (method) {
        case MergeMethod::dim3: return "dim3";
        case MergeMethod::task_arithmetic: return "task_arithmetic";
        case MergeMethod::dare: return "dare";
        case MergeMethod::ties: return "ties";
        case MergeMethod::breadcrumbs: return "breadcrumbs";
    }
    return "?";
}

MergeMethod parse_method(const std::string& name) {
    for (auto m : {MergeMethod::dim3, MergeMethod::task_arithmetic, MergeMethod::dare, MergeMethod::ties,
                   MergeMethod::breadcrumbs}) {
        if (method_name(m) == name) return m;
    }
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown merge method '" + name + "'");
}

bool is_baseline(MergeMethod method) { return method != MergeMethod::dim3; }

std::string output_dtype_name(OutputDType dtype) { return dtype == OutputDType::f32 ? "f32" : "match_anchor"; }

OutputDType parse_output_dtype(const std::string& name) {
    if (name == "match_anchor") return OutputDType::match_anchor;
    if (name == "f32") return OutputDType::f32;
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown output dtype '" + name + "'");
}

void MergeConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw_error(ErrorCategory::config, "config.invalid_value", "epsilon must be a positive finite number");
    }
    const bool weighted = aggregation.mode == AggregationMode::dir_weighted ||
                          aggregation.mode == AggregationMode::mag_weighted;
    if (weighted && !(aggregation.lambda > 0.5 && aggregation.lambda < 1.0)) {
        throw_error(ErrorCategory::config, "config.invalid_value", "weighted aggregation lambda must lie in (0.5, 1)");
    }
    if (is_baseline(method) != baseline_params.has_value()) {
        throw_error(ErrorCategory::config, "config.invalid_value",
                    "baseline parameters must be set exactly when the method is a baseline");
    }
    if (baseline_params) baseline_params->validate();
}

SalienceWeights merge_weights(const AlignedTriple& triple, const MergeConfig& cfg) {
    return weights_from(triple, load_residuals(triple), cfg);
}

TensorRecord merge_matrix(const AlignedTriple& triple, const MergeConfig& cfg) {
    if (triple.base.rank() != 2) {
        throw_error(ErrorCategory::shape, "shape.unsupported_rank", "merge_matrix needs a 2D tensor: " + triple.name);
    }
    const auto r = load_residuals(triple);
    const auto w = weights_from(triple, r, cfg);
    return TensorRecord::from_values(triple.name, output_dtype(cfg, triple.mm.dtype()), triple.base.shape(),
                                     combine(r, w, std::max<std::size_t>(1, weight_columns(triple))));
}

TensorRecord merge_vector(const AlignedTriple& triple, const MergeConfig& cfg) {
    if (triple.base.rank() != 1) {
        throw_error(ErrorCategory::shape, "shape.unsupported_rank", "merge_vector needs a 1D tensor: " + triple.name);
    }
    const auto r = load_residuals(triple);
    const auto w = weights_from(triple, r, cfg);
    return TensorRecord::from_values(triple.name, output_dtype(cfg, triple.mm.dtype()), triple.base.shape(),
                                     combine(r, w, std::max<std::size_t>(1, weight_columns(triple))));
}

MergeResult merge_checkpoint(const Checkpoint& base, const Checkpoint& ml, const Checkpoint& anchor,
                             const MergeConfig& cfg, std::size_t workers) {
    const auto start = Clock::now();
    cfg.validate();
    auto alignment = align_triple(base, ml, anchor, cfg.scope, cfg.shape_policy);
    const auto& triples = alignment.triples;

    std::vector<TensorOutcome> outcomes(triples.size());
    parallel_for(triples.size(), workers, [&](std::size_t i) { outcomes[i] = merge_one(triples[i], cfg); });

    MergeResult result;
    result.merged.role = Role::merged;
    result.merged.source_path = anchor.source_path;
    result.merged.tensors = anchor.tensors;

    std::map<std::string, std::string> reasons;
    for (const auto& k : alignment.report.anchor_only) reasons[k] = "anchor_only";
    for (const auto& k : alignment.report.out_of_scope) reasons[k] = "out_of_scope";
    for (const auto& m : alignment.report.missing) reasons[m.name] = "missing_source";

    auto& report = result.report;
    report.method = method_name(cfg.method);
    report.seed = cfg.seed;
    report.workers = std::max<std::size_t>(1, workers);

    std::map<std::string, TensorReportEntry> entries;
    double omega_total = 0;
    std::size_t omega_count = 0;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        auto& o = outcomes[i];
        const auto& anchor_rec = anchor.at(t.name);
        TensorReportEntry e{t.name, "merged", report.method, anchor_rec.shape(), o.omega, o.seconds};
        if (!o.merged) {
            e.action = "passthrough";
            e.method = o.passthrough_reason;
            reasons[t.name] = o.passthrough_reason;
            entries.emplace(t.name, std::move(e));
            continue;
        }
        const DType dtype = output_dtype(cfg, anchor_rec.dtype());
        result.merged.tensors[t.name] = t.cropped ? splice(anchor_rec, t.base.shape(), o.values, dtype)
                                                  : TensorRecord::from_values(t.name, dtype, t.base.shape(), o.values);
        if (o.omega) {
            omega_total += o.omega_sum;
            omega_count += o.omega->count;
        }
        ++report.merged_count;
        entries.emplace(t.name, std::move(e));
    }
    for (const auto& [name, rec] : anchor.tensors) {
        if (entries.count(name)) continue;
        entries.emplace(name, TensorReportEntry{name, "passthrough", reasons[name], rec.shape(), std::nullopt, 0.0});
    }
    for (auto& [name, e] : entries) {
        if (e.action == "passthrough") ++report.passthrough_count;
        report.tensors.push_back(std::move(e));
    }
    if (omega_count) report.mean_omega_ml = omega_total / static_cast<double>(omega_count);
    report.alignment = std::move(alignment.report);
    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return result;
}

std::string MergeReport::to_json(std::string_view config_json) const {
    json j;
    j["method"] = method;
    j["seed"] = seed;
    j["workers"] = workers;
    j["seconds"] = seconds;
    j["merged_count"] = merged_count;
    j["passthrough_count"] = passthrough_count;
    j["mean_omega_ml"] = mean_omega_ml ? json(*mean_omega_ml) : json(nullptr);
    j["tensors"] = json::array();
    for (const auto& e : tensors) {
        json t{{"name", e.name}, {"action", e.action}, {"method", e.method}, {"shape", e.shape}, {"seconds", e.seconds}};
        if (e.omega_ml) {
            t["omega_ml"] = {{"mean", e.omega_ml->mean},
                             {"min", e.omega_ml->min},
                             {"max", e.omega_ml->max},
                             {"count", e.omega_ml->count}};
        }
        j["tensors"].push_back(std::move(t));
    }
    j["alignment"] = json::parse(alignment.to_json());
    if (!config_json.empty()) j["config"] = json::parse(config_json);
    return j.dump(2);
}

}  // namespace dimerge
