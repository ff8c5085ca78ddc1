#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dimerge {

enum class DType { f32, f16, bf16, f64 };

std::size_t dtype_size(DType dtype) noexcept;

/// Safetensors spelling: "F32", "F16", "BF16", "F64".
std::string_view dtype_name(DType dtype) noexcept;

/// Parses a safetensors dtype string; throws io.unsupported_dtype otherwise.
DType parse_dtype(std::string_view name);

// Scalar codecs. Encoding rounds to nearest, ties to even, directly from f64.
double half_to_double(std::uint16_t bits) noexcept;
double bfloat16_to_double(std::uint16_t bits) noexcept;
std::uint16_t double_to_half(double value) noexcept;
std::uint16_t double_to_bfloat16(double value) noexcept;

/// Decodes a little-endian payload of `dtype` elements into f64.
std::vector<double> decode_values(std::span<const std::byte> bytes, DType dtype);

/// Encodes f64 values into a little-endian payload of `dtype`.
std::vector<std::byte> encode_values(std::span<const double> values, DType dtype);

}  // namespace dimerge
