#include "dimerge/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "dimerge/error.hpp"
#include "dimerge/tensor_store.hpp"

namespace dimerge {
namespace {

// Column reductions sweep rows in order, so every accumulator sees its terms
// in a fixed sequence regardless of threading.
template <class T>
std::vector<double> column_sq_norms(MatrixView<T> w) {
    std::vector<double> acc(w.cols, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const T* row = w.data.data() + i * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) acc[j] += static_cast<double>(row[j]) * row[j];
    }
    return acc;
}

template <class T>
std::vector<double> column_dots(MatrixView<T> a, MatrixView<T> b) {
    std::vector<double> acc(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const T* ra = a.data.data() + i * a.cols;
        const T* rb = b.data.data() + i * b.cols;
        for (std::size_t j = 0; j < a.cols; ++j) acc[j] += static_cast<double>(ra[j]) * rb[j];
    }
    return acc;
}

template <class T>
void check_view(MatrixView<T> w) {
    if (w.data.size() != w.rows * w.cols) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "matrix view size does not match its shape");
    }
}

template <class T>
void check_same_shape(std::size_t rows_a, std::size_t cols_a, std::size_t rows_b, std::size_t cols_b) {
    if (rows_a != rows_b || cols_a != cols_b) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "operands have different shapes");
    }
}

double guarded_cosine(double dot, double norm_a, double norm_b, double epsilon) {
    if (norm_a < epsilon || norm_b < epsilon) return 0.0;
    return std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
}

/// Half the squared distance between the unit columns a/|a| and b/|b|, which
/// equals 1 - cos without its cancellation: identical columns give exactly 0.
template <class T>
std::vector<double> half_chord(MatrixView<T> a, MatrixView<T> b, const std::vector<double>& norm_a,
                               const std::vector<double>& norm_b) {
    // Divide rather than multiply by a reciprocal: x / sqrt(x * x) is exactly +-1.
    const auto safe = [](double n) { return n > 0.0 ? n : 1.0; };
    std::vector<double> acc(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double d = static_cast<double>(a(i, j)) / safe(norm_a[j]) - static_cast<double>(b(i, j)) / safe(norm_b[j]);
            acc[j] += d * d;
        }
    }
    for (auto& v : acc) v = std::min(0.5 * v, 2.0);
    return acc;
}

}  // namespace

template <std::floating_point T>
ColumnDecomposition<T> decompose(MatrixView<T> w, T epsilon) {
    check_view(w);
    if (!(epsilon > 0)) throw_error(ErrorCategory::numeric, "numeric.invalid_epsilon", "epsilon must be positive");
    for (T v : w.data) {
        if (!std::isfinite(v)) throw_error(ErrorCategory::numeric, "numeric.non_finite", "matrix has non-finite entries");
    }
    ColumnDecomposition<T> dec;
    dec.rows = w.rows;
    dec.cols = w.cols;
    dec.epsilon = epsilon;
    const auto sq = column_sq_norms(w);
    dec.magnitudes.resize(w.cols);
    std::vector<T> denom(w.cols);
    for (std::size_t j = 0; j < w.cols; ++j) {
        dec.magnitudes[j] = static_cast<T>(std::sqrt(sq[j]));
        denom[j] = dec.magnitudes[j] + epsilon;
    }
    dec.directions.resize(w.data.size());
    for (std::size_t i = 0; i < w.rows; ++i) {
        for (std::size_t j = 0; j < w.cols; ++j) dec.directions[i * w.cols + j] = w(i, j) / denom[j];
    }
    return dec;
}

template <std::floating_point T>
std::vector<T> magnitude_deviation(const ColumnDecomposition<T>& source, const ColumnDecomposition<T>& base) {
    if (source.magnitudes.size() != base.magnitudes.size()) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "decompositions have different column counts");
    }
    std::vector<T> out(source.magnitudes.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::abs(source.magnitudes[j] - base.magnitudes[j]);
    return out;
}

template <std::floating_point T>
std::vector<T> direction_deviation(const ColumnDecomposition<T>& source, const ColumnDecomposition<T>& base) {
    check_same_shape<T>(source.rows, source.cols, base.rows, base.cols);
    const MatrixView<T> dk{source.directions, source.rows, source.cols};
    const MatrixView<T> dn{base.directions, base.rows, base.cols};
    auto nk = column_sq_norms(dk);
    auto nn = column_sq_norms(dn);
    for (auto& v : nk) v = std::sqrt(v);
    for (auto& v : nn) v = std::sqrt(v);
    const auto chord = half_chord(dk, dn, nk, nn);
    std::vector<T> out(source.cols);
    for (std::size_t j = 0; j < out.size(); ++j) {
        const bool near_zero = source.magnitudes[j] < source.epsilon || base.magnitudes[j] < base.epsilon;
        out[j] = static_cast<T>(near_zero ? 1.0 : chord[j]);
    }
    return out;
}

template <std::floating_point T>
std::vector<T> cross_alignment(MatrixView<T> delta_ml, MatrixView<T> delta_mm, T epsilon) {
    check_view(delta_ml);
    check_view(delta_mm);
    check_same_shape<T>(delta_ml.rows, delta_ml.cols, delta_mm.rows, delta_mm.cols);
    const auto dots = column_dots(delta_ml, delta_mm);
    const auto na = column_sq_norms(delta_ml);
    const auto nb = column_sq_norms(delta_mm);
    std::vector<T> out(delta_ml.cols);
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = static_cast<T>(guarded_cosine(dots[j], std::sqrt(na[j]), std::sqrt(nb[j]), epsilon));
    }
    return out;
}

template <std::floating_point T>
ResidualIdentity residual_identity(const ColumnDecomposition<T>& source, const ColumnDecomposition<T>& base,
                                   std::size_t column) {
    check_same_shape<T>(source.rows, source.cols, base.rows, base.cols);
    if (column >= source.cols) throw_error(ErrorCategory::shape, "shape.out_of_range", "column index out of range");
    const std::size_t j = column;
    const T scale_k = source.magnitudes[j] + source.epsilon;
    const T scale_n = base.magnitudes[j] + base.epsilon;
    double lhs = 0.0;
    for (std::size_t i = 0; i < source.rows; ++i) {
        const T diff = source.direction(i, j) * scale_k - base.direction(i, j) * scale_n;
        lhs += static_cast<double>(diff) * diff;
    }
    // Single-column slices so the deviation kernels run unchanged.
    ColumnDecomposition<T> sk{{source.magnitudes[j]}, {}, source.rows, 1, source.epsilon};
    ColumnDecomposition<T> sn{{base.magnitudes[j]}, {}, base.rows, 1, base.epsilon};
    sk.directions.resize(source.rows);
    sn.directions.resize(base.rows);
    for (std::size_t i = 0; i < source.rows; ++i) {
        sk.directions[i] = source.direction(i, j);
        sn.directions[i] = base.direction(i, j);
    }
    const double mag = magnitude_deviation(sk, sn)[0];
    const double dir = direction_deviation(sk, sn)[0];
    const double mk = source.magnitudes[j];
    const double mn = base.magnitudes[j];
    return {lhs, mag * mag + 2.0 * mk * mn * dir};
}

ColumnDeviations column_deviations(MatrixView<double> source, MatrixView<double> base, double epsilon) {
    check_view(source);
    check_view(base);
    check_same_shape<double>(source.rows, source.cols, base.rows, base.cols);
    auto mk = column_sq_norms(source);
    auto mn = column_sq_norms(base);
    for (auto& v : mk) v = std::sqrt(v);
    for (auto& v : mn) v = std::sqrt(v);
    ColumnDeviations out;
    out.magnitude.resize(source.cols);
    out.direction = half_chord(source, base, mk, mn);
    for (std::size_t j = 0; j < source.cols; ++j) {
        out.magnitude[j] = std::abs(mk[j] - mn[j]);
        if (mk[j] < epsilon || mn[j] < epsilon) out.direction[j] = 1.0;
    }
    return out;
}

HeterogeneityStats tensor_stats(const AlignedTriple& triple, double epsilon) {
    const auto base = triple.base.values();
    const auto ml = triple.ml.values();
    const auto mm = triple.mm.values();
    if (ml.size() != base.size() || mm.size() != base.size()) {
        throw_error(ErrorCategory::shape, "shape.mismatch", "triple '" + triple.name + "' has unequal sizes");
    }
    std::vector<double> d_ml(base.size()), d_mm(base.size());
    double sq_ml = 0.0, sq_mm = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        d_ml[i] = ml[i] - base[i];
        d_mm[i] = mm[i] - base[i];
        sq_ml += d_ml[i] * d_ml[i];
        sq_mm += d_mm[i] * d_mm[i];
    }
    HeterogeneityStats stats;
    stats.residual_norm_ml = std::sqrt(sq_ml);
    stats.residual_norm_mm = std::sqrt(sq_mm);
    stats.elements = base.size();
    if (triple.base.rank() != 2) return stats;

    const auto rows = static_cast<std::size_t>(triple.base.shape()[0]);
    const auto cols = static_cast<std::size_t>(triple.base.shape()[1]);
    stats.columns = cols;
    if (cols == 0) return stats;
    const MatrixView<double> wb{base, rows, cols};
    const auto dev_ml = column_deviations({ml, rows, cols}, wb, epsilon);
    const auto dev_mm = column_deviations({mm, rows, cols}, wb, epsilon);
    const auto cross = cross_alignment<double>({d_ml, rows, cols}, {d_mm, rows, cols}, epsilon);
    double s_ml = 0.0, s_mm = 0.0, s_x = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        s_ml += dev_ml.direction[j];
        s_mm += dev_mm.direction[j];
        s_x += cross[j];
    }
    const double n = static_cast<double>(cols);
    stats.mean_dir_dev_ml = s_ml / n;
    stats.mean_dir_dev_mm = s_mm / n;
    stats.mean_cross_cosine = s_x / n;
    return stats;
}

#define DIMERGE_INSTANTIATE_GEOMETRY(T)                                                                           \
    template ColumnDecomposition<T> decompose<T>(MatrixView<T>, T);                                              \
    template std::vector<T> magnitude_deviation<T>(const ColumnDecomposition<T>&, const ColumnDecomposition<T>&); \
    template std::vector<T> direction_deviation<T>(const ColumnDecomposition<T>&, const ColumnDecomposition<T>&); \
    template std::vector<T> cross_alignment<T>(MatrixView<T>, MatrixView<T>, T);                                  \
    template ResidualIdentity residual_identity<T>(const ColumnDecomposition<T>&, const ColumnDecomposition<T>&,  \
                                                   std::size_t);

DIMERGE_INSTANTIATE_GEOMETRY(float)
DIMERGE_INSTANTIATE_GEOMETRY(double)

#undef DIMERGE_INSTANTIATE_GEOMETRY

}  // namespace dimerge
