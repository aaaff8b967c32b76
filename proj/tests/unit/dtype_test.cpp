#include "specprune/dtype.hpp"

#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>

using namespace specprune;

TEST_SUITE("dtype") {

TEST_CASE("f16 expansion is exact on known values") {
    CHECK(f16_bits_to_f32(0x0000) == 0.0f);
    CHECK(f16_bits_to_f32(0x8000) == -0.0f);
    CHECK(std::signbit(f16_bits_to_f32(0x8000)));
    CHECK(f16_bits_to_f32(0x3C00) == 1.0f);
    CHECK(f16_bits_to_f32(0xC000) == -2.0f);
    CHECK(f16_bits_to_f32(0x7BFF) == 65504.0f);       // max finite half
    CHECK(f16_bits_to_f32(0x0001) == 0x1.0p-24f);     // smallest subnormal
    CHECK(f16_bits_to_f32(0x0400) == 0x1.0p-14f);     // smallest normal
    CHECK(std::isinf(f16_bits_to_f32(0x7C00)));
    CHECK(std::isnan(f16_bits_to_f32(0x7C01)));
}

TEST_CASE("every f16 bit pattern round-trips through f32") {
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto h = static_cast<std::uint16_t>(bits);
        CHECK(f32_to_f16_bits(f16_bits_to_f32(h)) == h);
    }
}

TEST_CASE("every bf16 bit pattern round-trips through f32") {
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto h = static_cast<std::uint16_t>(bits);
        CHECK(f32_to_bf16_bits(bf16_bits_to_f32(h)) == h);
    }
}

TEST_CASE("f32 to f16 narrowing rounds to nearest even") {
    // 1.0 + 2^-11 is exactly halfway between 1.0 and the next half; ties to even
    CHECK(f32_to_f16_bits(1.0f + 0x1.0p-11f) == 0x3C00);
    // just above the halfway point rounds up
    CHECK(f32_to_f16_bits(1.0f + 0x1.0p-11f + 0x1.0p-20f) == 0x3C01);
    // overflow saturates to infinity
    CHECK(f32_to_f16_bits(1.0e6f) == 0x7C00);
    CHECK(f32_to_f16_bits(-1.0e6f) == 0xFC00);
    // below half the smallest subnormal flushes to zero
    CHECK(f32_to_f16_bits(0x1.0p-26f) == 0x0000);
}

TEST_CASE("bf16 narrowing rounds to nearest even and keeps nan payloads") {
    CHECK(f32_to_bf16_bits(1.0f) == 0x3F80);
    const float nan_val = std::bit_cast<float>(0x7FC12345u);
    const std::uint16_t nb = f32_to_bf16_bits(nan_val);
    CHECK((nb & 0x7F80) == 0x7F80);
    CHECK((nb & 0x7F) != 0); // still a nan, payload not collapsed
}

} // TEST_SUITE
