#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dimerge/tensor.hpp"

namespace dimerge {

struct AlignedTriple;

/// Hyperparameters of the reference merging methods.
struct BaselineParams {
    double lambda = 1.0;
    double dare_drop_p = 0.9;
    double ties_density = 0.2;
    double breadcrumbs_beta = 0.85;
    double breadcrumbs_gamma = 0.01;

    void validate() const;
};

// Counter-based randomness: a uniform draw is a pure function of
// (seed, hash(stream name), element index).
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept;

/// base + λ·(Δ_ml + Δ_mm); elements whose update is exactly zero keep the base bits.
std::vector<double> apply_residuals(std::span<const double> base, std::span<const double> delta_ml,
                                    std::span<const double> delta_mm, double lambda);

TensorRecord task_arithmetic(const AlignedTriple& triple, double lambda);

/// Keeps each element with probability 1-p, rescaled by 1/(1-p).
std::vector<double> dare_values(std::span<const double> delta, double p, std::uint64_t seed,
                                std::string_view stream_name);
TensorRecord dare_transform(const TensorRecord& delta, double p, std::uint64_t seed, const std::string& tensor_name);

/// Keeps the ⌈k·n⌉ largest-magnitude entries (ties go to the lower index).
std::vector<double> ties_trim(std::span<const double> delta, double density);

/// Trim, elect sign, disjoint mean.
std::vector<double> ties_merged_delta(std::span<const double> delta_ml, std::span<const double> delta_mm,
                                      double density);
TensorRecord ties_merge(const AlignedTriple& triple, double density, double lambda);

/// Zeroes the ⌊β·n⌋ smallest- and ⌊γ·n⌋ largest-magnitude entries.
std::vector<double> breadcrumbs_values(std::span<const double> delta, double beta, double gamma);
TensorRecord breadcrumbs_transform(const TensorRecord& delta, double beta, double gamma);

}  // namespace dimerge
