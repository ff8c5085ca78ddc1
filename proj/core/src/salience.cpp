#include "dimerge/salience.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dimerge/error.hpp"

namespace dimerge {
namespace {

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw_error(ErrorCategory::numeric, "numeric.non_finite", std::string(what) + " contains non-finite values");
        }
    }
}

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw_error(ErrorCategory::shape, "shape.mismatch", "source deviation vectors differ in length");
}

std::vector<double> zscore(std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(v.size(), 0.0);
    if (sd < 1e-12) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return out;
}

std::vector<double> minmax(std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    std::vector<double> out(v.size(), 0.5);
    if (*hi == *lo) return out;
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
    return out;
}

SourcePair pair_up(std::span<const double> a, std::span<const double> b) {
    SourcePair out;
    out.ml.resize(a.size());
    out.mm.resize(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) std::tie(out.ml[j], out.mm[j]) = salience_pair(a[j], b[j]);
    return out;
}

}  // namespace

std::string estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::rank: return "rank";
        case EstimatorKind::raw: return "raw";
        case EstimatorKind::zscore: return "zscore";
        case EstimatorKind::minmax: return "minmax";
        case EstimatorKind::ratio: return "ratio";
    }
    return "?";
}

EstimatorKind parse_estimator(const std::string& name) {
    for (auto k : {EstimatorKind::rank, EstimatorKind::raw, EstimatorKind::zscore, EstimatorKind::minmax,
                   EstimatorKind::ratio}) {
        if (estimator_name(k) == name) return k;
    }
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown estimator '" + name + "'");
}

std::string aggregation_name(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::average: return "average";
        case AggregationMode::dir_weighted: return "dir_weighted";
        case AggregationMode::mag_weighted: return "mag_weighted";
        case AggregationMode::mag_only: return "mag_only";
        case AggregationMode::dir_only: return "dir_only";
    }
    return "?";
}

AggregationMode parse_aggregation(const std::string& name) {
    for (auto m : {AggregationMode::average, AggregationMode::dir_weighted, AggregationMode::mag_weighted,
                   AggregationMode::mag_only, AggregationMode::dir_only}) {
        if (aggregation_name(m) == name) return m;
    }
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown aggregation '" + name + "'");
}

double sigmoid(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softmax_first(double a, double b) noexcept {
    const double m = std::max(a, b);
    const double ea = std::exp(a - m);
    const double eb = std::exp(b - m);
    return ea / (ea + eb);
}

std::vector<double> rank_normalize(std::span<const double> deviations) {
    if (deviations.empty()) throw_error(ErrorCategory::shape, "shape.empty", "cannot rank an empty vector");
    check_finite(deviations, "deviation vector");
    const std::size_t d = deviations.size();
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return deviations[a] < deviations[b]; });

    std::vector<double> out(d);
    const double n = static_cast<double>(d);
    for (std::size_t lo = 0; lo < d;) {
        std::size_t hi = lo + 1;
        while (hi < d && deviations[order[hi]] == deviations[order[lo]]) ++hi;
        // Positions lo..hi-1 hold 1-based ranks lo+1..hi; their mean is (lo+1+hi)/2.
        const double rank = (static_cast<double>(lo + 1) + static_cast<double>(hi)) / 2.0;
        for (std::size_t k = lo; k < hi; ++k) out[order[k]] = rank / n;
        lo = hi;
    }
    return out;
}

std::pair<double, double> salience_pair(double r_ml, double r_mm) noexcept {
    // Both sides from the logistic so that swapping the sources swaps the pair bit for bit.
    return {sigmoid(r_ml - r_mm), sigmoid(r_mm - r_ml)};
}

SourcePair estimate_salience(std::span<const double> dev_ml, std::span<const double> dev_mm, EstimatorKind estimator,
                             double epsilon) {
    check_lengths(dev_ml.size(), dev_mm.size());
    check_finite(dev_ml, "multilingual deviations");
    check_finite(dev_mm, "multimodal deviations");
    if (dev_ml.empty()) return {};

    switch (estimator) {
        case EstimatorKind::rank:
            return pair_up(rank_normalize(dev_ml), rank_normalize(dev_mm));
        case EstimatorKind::raw:
            return pair_up(dev_ml, dev_mm);
        case EstimatorKind::zscore:
            return pair_up(zscore(dev_ml), zscore(dev_mm));
        case EstimatorKind::minmax:
            return pair_up(minmax(dev_ml), minmax(dev_mm));
        case EstimatorKind::ratio: {
            SourcePair out;
            out.ml.resize(dev_ml.size());
            out.mm.resize(dev_ml.size());
            for (std::size_t j = 0; j < dev_ml.size(); ++j) {
                const double sum = dev_ml[j] + dev_mm[j];
                out.ml[j] = sum < epsilon ? 0.5 : dev_ml[j] / sum;
                out.mm[j] = sum < epsilon ? 0.5 : dev_mm[j] / sum;
            }
            return out;
        }
    }
    return {};
}

SalienceWeights aggregate_branches(std::span<const double> s_mag_ml, std::span<const double> s_dir_ml,
                                   AggregationKind agg) {
    check_lengths(s_mag_ml.size(), s_dir_ml.size());
    for (auto branch : {s_mag_ml, s_dir_ml}) {
        for (double s : branch) {
            if (!(s >= 0.0 && s <= 1.0)) {
                throw_error(ErrorCategory::numeric, "numeric.out_of_range", "branch salience outside [0, 1]");
            }
        }
    }
    const bool weighted = agg.mode == AggregationMode::dir_weighted || agg.mode == AggregationMode::mag_weighted;
    if (weighted && !(agg.lambda >= 0.0 && agg.lambda <= 1.0)) {
        throw_error(ErrorCategory::config, "config.invalid_value", "aggregation lambda must lie in [0, 1]");
    }

    SalienceWeights w;
    w.s_mag_ml.assign(s_mag_ml.begin(), s_mag_ml.end());
    w.s_dir_ml.assign(s_dir_ml.begin(), s_dir_ml.end());
    w.omega_ml.resize(s_mag_ml.size());
    w.omega_mm.resize(s_mag_ml.size());
    for (std::size_t j = 0; j < s_mag_ml.size(); ++j) {
        const double mag = s_mag_ml[j];
        const double dir = s_dir_ml[j];
        double omega = 0.0;
        switch (agg.mode) {
            case AggregationMode::average: omega = 0.5 * (mag + dir); break;
            case AggregationMode::dir_weighted: omega = agg.lambda * dir + (1.0 - agg.lambda) * mag; break;
            case AggregationMode::mag_weighted: omega = agg.lambda * mag + (1.0 - agg.lambda) * dir; break;
            case AggregationMode::mag_only: omega = mag; break;
            case AggregationMode::dir_only: omega = dir; break;
        }
        w.omega_ml[j] = omega;
        w.omega_mm[j] = 1.0 - omega;
    }
    return w;
}

SalienceWeights elementwise_salience(std::span<const double> dev_ml, std::span<const double> dev_mm,
                                     EstimatorKind estimator, double epsilon) {
    auto s = estimate_salience(dev_ml, dev_mm, estimator, epsilon);
    SalienceWeights w;
    w.omega_ml = s.ml;
    w.omega_mm = std::move(s.mm);
    w.s_mag_ml = s.ml;
    w.s_dir_ml = std::move(s.ml);
    return w;
}

}  // namespace dimerge
