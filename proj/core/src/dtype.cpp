#include "dimerge/dtype.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "dimerge/error.hpp"

static_assert(std::endian::native == std::endian::little, "dimerge assumes a little-endian host");

namespace dimerge {
namespace {

// Binary floating formats narrower than f64, described by field widths.
struct SmallFloat {
    int exp_bits;
    int mant_bits;
};

constexpr SmallFloat kHalf{5, 10};
constexpr SmallFloat kBFloat16{8, 7};

double decode_small(std::uint32_t bits, SmallFloat fmt) {
    const int bias = (1 << (fmt.exp_bits - 1)) - 1;
    const std::uint32_t mant_mask = (1u << fmt.mant_bits) - 1;
    const std::uint32_t exp_mask = (1u << fmt.exp_bits) - 1;
    const bool negative = (bits >> (fmt.exp_bits + fmt.mant_bits)) & 1u;
    const std::uint32_t exp_field = (bits >> fmt.mant_bits) & exp_mask;
    const std::uint32_t mant = bits & mant_mask;

    double magnitude;
    if (exp_field == 0) {
        magnitude = std::ldexp(static_cast<double>(mant), 1 - bias - fmt.mant_bits);
    } else if (exp_field == exp_mask) {
        magnitude = mant == 0 ? INFINITY : NAN;
    } else {
        magnitude = std::ldexp(static_cast<double>(mant | (1u << fmt.mant_bits)),
                               static_cast<int>(exp_field) - bias - fmt.mant_bits);
    }
    return negative ? -magnitude : magnitude;
}

std::uint32_t encode_small(double value, SmallFloat fmt) {
    const int bias = (1 << (fmt.exp_bits - 1)) - 1;
    const int emin = 1 - bias;
    const int emax = bias;
    const std::uint32_t exp_mask = (1u << fmt.exp_bits) - 1;
    const std::uint32_t sign = std::signbit(value) ? 1u << (fmt.exp_bits + fmt.mant_bits) : 0u;

    if (std::isnan(value)) {
        return sign | (exp_mask << fmt.mant_bits) | (1u << (fmt.mant_bits - 1));
    }
    const double a = std::fabs(value);
    if (a == 0.0) {
        return sign;
    }
    if (std::isinf(a)) {
        return sign | (exp_mask << fmt.mant_bits);
    }

    int e = std::ilogb(a);
    if (e < emin) e = emin;
    // Scale so that one unit in the last place of the target format equals 1.
    double q = std::nearbyint(std::ldexp(a, fmt.mant_bits - e));
    const double carry = std::ldexp(1.0, fmt.mant_bits + 1);
    if (q >= carry) {
        q /= 2;
        ++e;
    }
    if (e > emax) {
        return sign | (exp_mask << fmt.mant_bits);
    }
    const auto r = static_cast<std::uint32_t>(q);
    if (r < (1u << fmt.mant_bits)) {
        return sign | r;  // subnormal
    }
    const auto exp_field = static_cast<std::uint32_t>(e + bias);
    return sign | (exp_field << fmt.mant_bits) | (r - (1u << fmt.mant_bits));
}

template <class T>
T load_le(const std::byte* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <class T>
void store_le(std::byte* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

}  // namespace

std::size_t dtype_size(DType dtype) noexcept {
    switch (dtype) {
        case DType::f32: return 4;
        case DType::f16: return 2;
        case DType::bf16: return 2;
        case DType::f64: return 8;
    }
    return 0;
}

std::string_view dtype_name(DType dtype) noexcept {
    switch (dtype) {
        case DType::f32: return "F32";
        case DType::f16: return "F16";
        case DType::bf16: return "BF16";
        case DType::f64: return "F64";
    }
    return "?";
}

DType parse_dtype(std::string_view name) {
    if (name == "F32") return DType::f32;
    if (name == "F16") return DType::f16;
    if (name == "BF16") return DType::bf16;
    if (name == "F64") return DType::f64;
    throw_error(ErrorCategory::io, "io.unsupported_dtype", "unsupported tensor dtype '" + std::string(name) + "'");
}

double half_to_double(std::uint16_t bits) noexcept { return decode_small(bits, kHalf); }
double bfloat16_to_double(std::uint16_t bits) noexcept { return decode_small(bits, kBFloat16); }
std::uint16_t double_to_half(double value) noexcept { return static_cast<std::uint16_t>(encode_small(value, kHalf)); }
std::uint16_t double_to_bfloat16(double value) noexcept {
    return static_cast<std::uint16_t>(encode_small(value, kBFloat16));
}

std::vector<double> decode_values(std::span<const std::byte> bytes, DType dtype) {
    const std::size_t width = dtype_size(dtype);
    if (bytes.size() % width != 0) {
        throw_error(ErrorCategory::io, "io.malformed_payload", "payload size is not a multiple of the element size");
    }
    const std::size_t n = bytes.size() / width;
    std::vector<double> out(n);
    const std::byte* p = bytes.data();
    switch (dtype) {
        case DType::f32:
            for (std::size_t i = 0; i < n; ++i) out[i] = load_le<float>(p + 4 * i);
            break;
        case DType::f64:
            for (std::size_t i = 0; i < n; ++i) out[i] = load_le<double>(p + 8 * i);
            break;
        case DType::f16:
            for (std::size_t i = 0; i < n; ++i) out[i] = half_to_double(load_le<std::uint16_t>(p + 2 * i));
            break;
        case DType::bf16:
            for (std::size_t i = 0; i < n; ++i) out[i] = bfloat16_to_double(load_le<std::uint16_t>(p + 2 * i));
            break;
    }
    return out;
}

std::vector<std::byte> encode_values(std::span<const double> values, DType dtype) {
    const std::size_t width = dtype_size(dtype);
    std::vector<std::byte> out(values.size() * width);
    std::byte* p = out.data();
    switch (dtype) {
        case DType::f32:
            for (std::size_t i = 0; i < values.size(); ++i) store_le(p + 4 * i, static_cast<float>(values[i]));
            break;
        case DType::f64:
            for (std::size_t i = 0; i < values.size(); ++i) store_le(p + 8 * i, values[i]);
            break;
        case DType::f16:
            for (std::size_t i = 0; i < values.size(); ++i) store_le(p + 2 * i, double_to_half(values[i]));
            break;
        case DType::bf16:
            for (std::size_t i = 0; i < values.size(); ++i) store_le(p + 2 * i, double_to_bfloat16(values[i]));
            break;
    }
    return out;
}

}  // namespace dimerge
