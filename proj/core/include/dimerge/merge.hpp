#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dimerge/baselines.hpp"
#include "dimerge/geometry.hpp"
#include "dimerge/salience.hpp"
#include "dimerge/scope.hpp"
#include "dimerge/tensor_store.hpp"

namespace dimerge {

enum class MergeMethod { dim3, task_arithmetic, dare, ties, breadcrumbs };
enum class OutputDType { match_anchor, f32 };

std::string method_name(MergeMethod method);
MergeMethod parse_method(const std::string& name);
bool is_baseline(MergeMethod method);
std::string output_dtype_name(OutputDType dtype);
OutputDType parse_output_dtype(const std::string& name);

/// Declarative description of one merge run.
struct MergeConfig {
    MergeMethod method = MergeMethod::dim3;
    EstimatorKind estimator = EstimatorKind::rank;
    AggregationKind aggregation{};
    double epsilon = kDefaultEpsilon;
    ScopeFilter scope{};
    ShapePolicy shape_policy = ShapePolicy::strict;
    /// Copy in-scope tensors of rank other than 1 or 2 from the anchor instead of failing.
    bool pass_through_high_rank = false;
    std::uint64_t seed = 0;
    /// Set iff `method` is a baseline.
    std::optional<BaselineParams> baseline_params;
    OutputDType output_dtype = OutputDType::match_anchor;

    /// Throws config.invalid_value on inconsistent settings.
    void validate() const;
};

/// Column-wise source weights for a 2D triple, or element-wise weights for a
/// 1D triple, under the configured estimator and aggregation.
SalienceWeights merge_weights(const AlignedTriple& triple, const MergeConfig& cfg);

/// W̃[:,j] = W_N[:,j] + ω_ml[j]·Δ_ml[:,j] + ω_mm[j]·Δ_mm[:,j] for a 2D triple.
TensorRecord merge_matrix(const AlignedTriple& triple, const MergeConfig& cfg);

/// w̃_i = w_N,i + γ_ml,i·Δ_ml,i + γ_mm,i·Δ_mm,i for a 1D triple.
TensorRecord merge_vector(const AlignedTriple& triple, const MergeConfig& cfg);

struct WeightSummary {
    double mean = 0;
    double min = 0;
    double max = 0;
    std::size_t count = 0;
};

struct TensorReportEntry {
    std::string name;
    std::string action;  // "merged" or "passthrough"
    std::string method;  // merge method, or the pass-through reason
    Shape shape;
    std::optional<WeightSummary> omega_ml;
    double seconds = 0;
};

struct MergeReport {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<TensorReportEntry> tensors;
    AlignmentReport alignment;
    std::size_t merged_count = 0;
    std::size_t passthrough_count = 0;
    std::optional<double> mean_omega_ml;  // over all merged columns/elements
    std::size_t workers = 1;
    double seconds = 0;

    /// `config_json`, when given, is embedded verbatim as the "config" field.
    std::string to_json(std::string_view config_json = {}) const;
};

struct MergeResult {
    Checkpoint merged;
    MergeReport report;
};

/// Merges the shared backbone and writes it back into the anchor. Tensors that
/// are anchor-only, out of scope, or missing from a source are copied from the
/// anchor verbatim. Output is identical for any `workers` count.
MergeResult merge_checkpoint(const Checkpoint& base, const Checkpoint& ml, const Checkpoint& anchor,
                             const MergeConfig& cfg, std::size_t workers = 1);

}  // namespace dimerge
