#include "dimerge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dimerge/error.hpp"
#include "dimerge/tensor_store.hpp"

namespace dimerge {
namespace {

// Guards floor/ceil against products like 0.29 * 100 = 28.999999999999996.
constexpr double kCountSlack = 1e-9;

[[noreturn]] void bad_param(const std::string& msg) {
    throw_error(ErrorCategory::config, "config.invalid_value", msg);
}

struct TripleValues {
    std::vector<double> base;
    std::vector<double> delta_ml;
    std::vector<double> delta_mm;
};

TripleValues residuals(const AlignedTriple& t) {
    if (t.ml.shape() != t.base.shape() || t.mm.shape() != t.base.shape()) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "triple '" + t.name + "' has unequal shapes");
    }
    TripleValues v{t.base.values(), t.ml.values(), t.mm.values()};
    for (std::size_t i = 0; i < v.base.size(); ++i) {
        v.delta_ml[i] -= v.base[i];
        v.delta_mm[i] -= v.base[i];
    }
    return v;
}

bool by_magnitude_desc(std::span<const double> v, std::size_t a, std::size_t b) {
    const double x = std::abs(v[a]);
    const double y = std::abs(v[b]);
    return x > y || (x == y && a < b);
}

}  // namespace

void BaselineParams::validate() const {
    if (!std::isfinite(lambda)) bad_param("baseline lambda must be finite");
    if (!(dare_drop_p >= 0.0 && dare_drop_p < 1.0)) bad_param("dare_drop_p must lie in [0, 1)");
    if (!(ties_density > 0.0 && ties_density <= 1.0)) bad_param("ties_density must lie in (0, 1]");
    if (!(breadcrumbs_beta >= 0.0 && breadcrumbs_beta < 1.0) || !(breadcrumbs_gamma >= 0.0 && breadcrumbs_gamma < 1.0)) {
        bad_param("breadcrumbs beta and gamma must lie in [0, 1)");
    }
    if (!(breadcrumbs_beta + breadcrumbs_gamma < 1.0)) bad_param("breadcrumbs beta + gamma must be below 1");
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
    const std::uint64_t key = splitmix64(splitmix64(seed) ^ stream);
    const std::uint64_t bits = splitmix64(key ^ splitmix64(index));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::vector<double> apply_residuals(std::span<const double> base, std::span<const double> delta_ml,
                                    std::span<const double> delta_mm, double lambda) {
    if (delta_ml.size() != base.size() || delta_mm.size() != base.size()) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "residuals differ in length from the base");
    }
    std::vector<double> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double update = lambda * (delta_ml[i] + delta_mm[i]);
        out[i] = update == 0.0 ? base[i] : base[i] + update;
    }
    return out;
}

TensorRecord task_arithmetic(const AlignedTriple& triple, double lambda) {
    const auto v = residuals(triple);
    return TensorRecord::from_values(triple.name, triple.mm.dtype(), triple.base.shape(),
                                     apply_residuals(v.base, v.delta_ml, v.delta_mm, lambda));
}

std::vector<double> dare_values(std::span<const double> delta, double p, std::uint64_t seed,
                                std::string_view stream_name) {
    if (!(p >= 0.0 && p < 1.0)) bad_param("DARE drop probability must lie in [0, 1)");
    std::vector<double> out(delta.begin(), delta.end());
    if (p == 0.0) return out;
    const std::uint64_t stream = fnv1a64(stream_name);
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = counter_uniform(seed, stream, i) < p ? 0.0 : out[i] * scale;
    }
    return out;
}

TensorRecord dare_transform(const TensorRecord& delta, double p, std::uint64_t seed, const std::string& tensor_name) {
    return TensorRecord::from_values(delta.name(), delta.dtype(), delta.shape(),
                                     dare_values(delta.values(), p, seed, tensor_name));
}

std::vector<double> ties_trim(std::span<const double> delta, double density) {
    if (!(density > 0.0 && density <= 1.0)) bad_param("TIES density must lie in (0, 1]");
    const std::size_t n = delta.size();
    const auto keep = std::min(n, static_cast<std::size_t>(std::ceil(density * static_cast<double>(n) - kCountSlack)));
    if (keep == n) return {delta.begin(), delta.end()};
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                     [&](std::size_t a, std::size_t b) { return by_magnitude_desc(delta, a, b); });
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < keep; ++k) out[idx[k]] = delta[idx[k]];
    return out;
}

std::vector<double> ties_merged_delta(std::span<const double> delta_ml, std::span<const double> delta_mm,
                                      double density) {
    if (delta_ml.size() != delta_mm.size()) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "TIES residuals differ in length");
    }
    const auto a = ties_trim(delta_ml, density);
    const auto b = ties_trim(delta_mm, density);
    std::vector<double> out(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool positive = a[i] + b[i] >= 0.0;
        double sum = 0.0;
        int agree = 0;
        for (double v : {a[i], b[i]}) {
            if ((positive && v > 0.0) || (!positive && v < 0.0)) {
                sum += v;
                ++agree;
            }
        }
        out[i] = agree ? sum / agree : 0.0;
    }
    return out;
}

TensorRecord ties_merge(const AlignedTriple& triple, double density, double lambda) {
    const auto v = residuals(triple);
    const auto merged = ties_merged_delta(v.delta_ml, v.delta_mm, density);
    const std::vector<double> zero(merged.size(), 0.0);
    return TensorRecord::from_values(triple.name, triple.mm.dtype(), triple.base.shape(),
                                     apply_residuals(v.base, merged, zero, lambda));
}

std::vector<double> breadcrumbs_values(std::span<const double> delta, double beta, double gamma) {
    if (!(beta >= 0.0 && gamma >= 0.0 && beta + gamma < 1.0)) {
        bad_param("Breadcrumbs needs beta, gamma >= 0 with beta + gamma < 1");
    }
    const std::size_t n = delta.size();
    const double dn = static_cast<double>(n);
    const auto bottom = static_cast<std::size_t>(std::floor(beta * dn + kCountSlack));
    const auto top = static_cast<std::size_t>(std::floor(gamma * dn + kCountSlack));
    std::vector<double> out(delta.begin(), delta.end());
    if (bottom == 0 && top == 0) return out;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Smallest magnitudes first; among equals the lower index is dropped first.
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double x = std::abs(delta[a]);
        const double y = std::abs(delta[b]);
        return x < y || (x == y && a < b);
    });
    for (std::size_t k = 0; k < bottom; ++k) out[idx[k]] = 0.0;
    // Largest magnitudes among the survivors; among equals the lower index goes first.
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(bottom), idx.end(),
              [&](std::size_t a, std::size_t b) { return by_magnitude_desc(delta, a, b); });
    for (std::size_t k = 0; k < top; ++k) out[idx[bottom + k]] = 0.0;
    return out;
}

TensorRecord breadcrumbs_transform(const TensorRecord& delta, double beta, double gamma) {
    return TensorRecord::from_values(delta.name(), delta.dtype(), delta.shape(),
                                     breadcrumbs_values(delta.values(), beta, gamma));
}

}  // namespace dimerge
