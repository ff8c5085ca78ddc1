#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dimerge/geometry.hpp"

namespace dimerge {

/// How raw deviations are made comparable across the two sources.
enum class EstimatorKind { rank, raw, zscore, minmax, ratio };

enum class AggregationMode { average, dir_weighted, mag_weighted, mag_only, dir_only };

/// Branch aggregation rule; `lambda` is used by the weighted modes only.
struct AggregationKind {
    AggregationMode mode = AggregationMode::average;
    double lambda = 0.75;
};

std::string estimator_name(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);
std::string aggregation_name(AggregationMode mode);
AggregationMode parse_aggregation(const std::string& name);

/// Per-column source weights plus the multilingual branch scores they came
/// from. omega_ml[j] + omega_mm[j] == 1 for every column.
struct SalienceWeights {
    std::vector<double> s_mag_ml;
    std::vector<double> s_dir_ml;
    std::vector<double> omega_ml;
    std::vector<double> omega_mm;
};

struct SourcePair {
    std::vector<double> ml;
    std::vector<double> mm;
};

double sigmoid(double x) noexcept;

/// exp(a) / (exp(a) + exp(b)), max-shifted.
double softmax_first(double a, double b) noexcept;

/// 1-based ascending ranks divided by the length; ties share their average rank.
std::vector<double> rank_normalize(std::span<const double> deviations);

/// Two-source softmax written as a logistic of the gap: (σ(a-b), 1-σ(a-b)).
std::pair<double, double> salience_pair(double r_ml, double r_mm) noexcept;

/// Cross-source salience for one branch. `epsilon` guards the ratio estimator.
SourcePair estimate_salience(std::span<const double> dev_ml, std::span<const double> dev_mm, EstimatorKind estimator,
                             double epsilon = kDefaultEpsilon);

/// Combines the magnitude and direction branches into final weights.
SalienceWeights aggregate_branches(std::span<const double> s_mag_ml, std::span<const double> s_dir_ml,
                                   AggregationKind agg);

/// Single-branch weights for 1D parameters; omega is the salience itself.
SalienceWeights elementwise_salience(std::span<const double> dev_ml, std::span<const double> dev_mm,
                                     EstimatorKind estimator, double epsilon = kDefaultEpsilon);

}  // namespace dimerge
