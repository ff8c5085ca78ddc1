#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "dimerge/dtype.hpp"
#include "dimerge/error.hpp"
#include "fixtures.hpp"

using namespace dimerge;

TEST(DType, KnownEncodings) {
    EXPECT_EQ(double_to_half(1.0), 0x3C00);
    EXPECT_EQ(double_to_half(-2.0), 0xC000);
    EXPECT_EQ(double_to_half(65504.0), 0x7BFF);
    EXPECT_EQ(double_to_half(1e6), 0x7C00);
    EXPECT_EQ(double_to_half(0x1.0p-24), 0x0001);  // smallest subnormal
    EXPECT_EQ(double_to_bfloat16(1.0), 0x3F80);
    EXPECT_EQ(double_to_bfloat16(-0.0), 0x8000);
    EXPECT_EQ(double_to_bfloat16(3.140625), 0x4049);
}

TEST(DType, RoundsHalfwayToEven) {
    // 1 + 2^-11 lies halfway between two halves; the even mantissa wins.
    EXPECT_EQ(double_to_half(1.0 + 0x1.0p-11), 0x3C00);
    EXPECT_EQ(double_to_half(1.0 + 3 * 0x1.0p-11), 0x3C02);
    EXPECT_EQ(double_to_bfloat16(1.0 + 0x1.0p-8), 0x3F80);
    EXPECT_EQ(double_to_bfloat16(1.0 + 3 * 0x1.0p-8), 0x3F82);
    // Just above halfway rounds up; double rounding through f32 would lose this.
    EXPECT_EQ(double_to_bfloat16(1.0 + 0x1.0p-8 + 0x1.0p-40), 0x3F81);
}

TEST(DType, EveryHalfAndBFloat16PatternRoundTrips) {
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto b = static_cast<std::uint16_t>(bits);
        const double h = half_to_double(b);
        if (!std::isnan(h)) ASSERT_EQ(double_to_half(h), b) << std::hex << bits;
        const double f = bfloat16_to_double(b);
        if (!std::isnan(f)) ASSERT_EQ(double_to_bfloat16(f), b) << std::hex << bits;
    }
}

TEST(DType, BFloat16AgreesWithF32Truncation) {
    // bf16 is the upper half of an f32 bit pattern.
    for (std::uint32_t bits = 0; bits <= 0xFFFF; bits += 7) {
        const std::uint32_t f32_bits = bits << 16;
        float f;
        std::memcpy(&f, &f32_bits, 4);
        const double d = bfloat16_to_double(static_cast<std::uint16_t>(bits));
        if (std::isnan(f)) {
            EXPECT_TRUE(std::isnan(d));
        } else {
            EXPECT_EQ(d, static_cast<double>(f));
        }
    }
}

TEST(DType, EncodingPicksNearestRepresentable) {
    fixtures::Rng rng(3);
    for (int trial = 0; trial < 20000; ++trial) {
        const double x = rng.normal(std::ldexp(1.0, static_cast<int>(rng.index(30)) - 15));
        const auto h = double_to_half(x);
        const double hv = half_to_double(h);
        // Neighbors one code up and down are never strictly closer.
        for (int step : {-1, 1}) {
            const auto nb = static_cast<std::uint16_t>(h + step);
            const double nv = half_to_double(nb);
            if (std::isnan(nv) || std::isinf(nv) || std::signbit(nv) != std::signbit(hv)) continue;
            ASSERT_LE(std::fabs(hv - x), std::fabs(nv - x)) << x;
        }
    }
}

TEST(DType, PayloadRoundTrip) {
    const std::vector<double> values{0.0, -1.5, 3.25, 1e-3, -65504.0};
    for (auto dt : {DType::f16, DType::bf16, DType::f32, DType::f64}) {
        const auto bytes = encode_values(values, dt);
        ASSERT_EQ(bytes.size(), values.size() * dtype_size(dt));
        const auto back = decode_values(bytes, dt);
        const auto again = encode_values(back, dt);
        EXPECT_EQ(bytes, again) << dtype_name(dt);
    }
}

TEST(DType, ParseNames) {
    EXPECT_EQ(parse_dtype("BF16"), DType::bf16);
    EXPECT_EQ(parse_dtype("F64"), DType::f64);
    EXPECT_THROW(parse_dtype("I64"), Error);
}
