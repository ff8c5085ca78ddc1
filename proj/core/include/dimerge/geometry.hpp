#pragma once

#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dimerge {

struct AlignedTriple;

inline constexpr double kDefaultEpsilon = 1e-8;

/// Read-only row-major matrix of shape [rows, cols]. Column j is the slice
/// over axis 0 at fixed axis-1 index j.
template <std::floating_point T>
struct MatrixView {
    std::span<const T> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    T operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Column-wise magnitude/direction split: W[:,j] = m_j * D[:,j] * (m_j + eps) / m_j.
template <std::floating_point T>
struct ColumnDecomposition {
    std::vector<T> magnitudes;
    std::vector<T> directions;  // row-major, same shape as the source matrix
    std::size_t rows = 0;
    std::size_t cols = 0;
    T epsilon{};

    T direction(std::size_t i, std::size_t j) const { return directions[i * cols + j]; }
};

/// m_j = ||W[:,j]||, D[:,j] = W[:,j] / (m_j + eps). Throws numeric.non_finite
/// on NaN/Inf input and numeric.invalid_epsilon unless eps > 0.
template <std::floating_point T>
ColumnDecomposition<T> decompose(MatrixView<T> w, T epsilon);

/// |m_k(j) - m_N(j)| per column.
template <std::floating_point T>
std::vector<T> magnitude_deviation(const ColumnDecomposition<T>& source, const ColumnDecomposition<T>& base);

/// 1 - cos(D_k[:,j], D_N[:,j]) per column, in [0, 2]. A column whose
/// magnitude is below eps in either decomposition has cosine 0 (deviation 1).
template <std::floating_point T>
std::vector<T> direction_deviation(const ColumnDecomposition<T>& source, const ColumnDecomposition<T>& base);

/// cos(Δ_ml[:,j], Δ_mm[:,j]) per column, 0 when either column norm is below eps.
template <std::floating_point T>
std::vector<T> cross_alignment(MatrixView<T> delta_ml, MatrixView<T> delta_mm, T epsilon);

struct ResidualIdentity {
    double lhs = 0;  // ||W_k[:,j] - W_N[:,j]||^2
    double rhs = 0;  // (δ_mag)^2 + 2 m_k m_N δ_dir
};

/// Both sides of the radial/angular split of a column's squared residual norm.
/// Raw columns are recovered from the decompositions, so eps cancels on the left.
template <std::floating_point T>
ResidualIdentity residual_identity(const ColumnDecomposition<T>& source, const ColumnDecomposition<T>& base,
                                   std::size_t column);

/// Per-column deviations of one source against the base, computed in a single
/// pass without materializing direction matrices. Matches
/// magnitude_deviation/direction_deviation on the decompositions.
struct ColumnDeviations {
    std::vector<double> magnitude;
    std::vector<double> direction;
};

ColumnDeviations column_deviations(MatrixView<double> source, MatrixView<double> base, double epsilon);

/// Residual-heterogeneity summary of one aligned tensor. Direction fields are
/// empty for 1D tensors.
struct HeterogeneityStats {
    double residual_norm_ml = 0;
    double residual_norm_mm = 0;
    std::optional<double> mean_dir_dev_ml;
    std::optional<double> mean_dir_dev_mm;
    std::optional<double> mean_cross_cosine;
    std::size_t columns = 0;   // 0 for 1D tensors
    std::size_t elements = 0;
};

HeterogeneityStats tensor_stats(const AlignedTriple& triple, double epsilon = kDefaultEpsilon);

}  // namespace dimerge
