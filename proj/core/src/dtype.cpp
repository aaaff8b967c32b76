#include "specprune/dtype.hpp"

#include <bit>
#include <cstring>

namespace specprune {

const char * dtype_name(DType dt) {
    switch (dt) {
        case DType::f32: return "f32";
        case DType::f16: return "f16";
        case DType::bf16: return "bf16";
    }
    return "?";
}

const char * dtype_tag(DType dt) {
    switch (dt) {
        case DType::f32: return "F32";
        case DType::f16: return "F16";
        case DType::bf16: return "BF16";
    }
    return "?";
}

bool dtype_from_tag(const std::string & tag, DType & out) {
    if (tag == "F32") { out = DType::f32; return true; }
    if (tag == "F16") { out = DType::f16; return true; }
    if (tag == "BF16") { out = DType::bf16; return true; }
    return false;
}

bool dtype_from_name(const std::string & name, DType & out) {
    if (name == "f32") { out = DType::f32; return true; }
    if (name == "f16") { out = DType::f16; return true; }
    if (name == "bf16") { out = DType::bf16; return true; }
    return false;
}

std::size_t dtype_size(DType dt) {
    return dt == DType::f32 ? 4 : 2;
}

float f16_bits_to_f32(std::uint16_t bits) {
    const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
    const std::uint32_t exp = (bits >> 10) & 0x1Fu;
    std::uint32_t mant = bits & 0x3FFu;
    std::uint32_t out;

    if (exp == 0) {
        if (mant == 0) {
            out = sign; // +/- zero
        } else {
            // subnormal: value = mant * 2^-24; normalize the leading bit away
            int shift = 0;
            while ((mant & 0x400u) == 0) {
                mant <<= 1;
                ++shift;
            }
            mant &= 0x3FFu;
            const std::uint32_t e32 = 113 - static_cast<std::uint32_t>(shift);
            out = sign | (e32 << 23) | (mant << 13);
        }
    } else if (exp == 0x1F) {
        out = sign | 0x7F800000u | (mant << 13); // inf / nan, payload kept
    } else {
        const std::uint32_t e32 = exp - 15 + 127;
        out = sign | (e32 << 23) | (mant << 13);
    }
    return std::bit_cast<float>(out);
}

float bf16_bits_to_f32(std::uint16_t bits) {
    const std::uint32_t out = static_cast<std::uint32_t>(bits) << 16;
    return std::bit_cast<float>(out);
}

std::uint16_t f32_to_f16_bits(float value) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    const std::uint32_t exp = (bits >> 23) & 0xFFu;
    const std::uint32_t mant = bits & 0x7FFFFFu;

    if (exp == 0xFF) {
        // inf / nan; keep the top ten payload bits, force quiet-able nonzero mantissa
        std::uint16_t m = static_cast<std::uint16_t>(mant >> 13);
        if (mant != 0 && m == 0) {
            m = 1;
        }
        return sign | 0x7C00u | m;
    }

    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1F) {
        return sign | 0x7C00u; // overflow -> inf
    }
    if (e <= 0) {
        // subnormal half (or zero); round-to-nearest-even at the shifted position
        if (e < -10) {
            return sign;
        }
        const std::uint32_t m = mant | 0x800000u;
        const int shift = 14 - e; // in [14, 24]
        std::uint32_t kept = m >> shift;
        const std::uint32_t round_bit = (m >> (shift - 1)) & 1u;
        const bool sticky = (m & ((1u << (shift - 1)) - 1u)) != 0;
        if (round_bit && (sticky || (kept & 1u))) {
            ++kept;
        }
        return sign | static_cast<std::uint16_t>(kept);
    }

    // normal range; round mantissa to 10 bits, nearest even
    std::uint32_t m = mant;
    std::uint32_t result = (static_cast<std::uint32_t>(e) << 10) | (m >> 13);
    const std::uint32_t round_bit = (m >> 12) & 1u;
    const std::uint32_t sticky = (m & 0xFFFu) != 0;
    if (round_bit && (sticky || (result & 1u))) {
        ++result; // may carry into the exponent, which is the correct behavior
    }
    if (result >= 0x7C00u) {
        return sign | 0x7C00u;
    }
    return sign | static_cast<std::uint16_t>(result);
}

std::uint16_t f32_to_bf16_bits(float value) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x7FFFFFu) != 0) {
        // nan: truncate but never collapse the payload to zero (that would make an inf)
        std::uint16_t out = static_cast<std::uint16_t>(bits >> 16);
        if ((out & 0x7Fu) == 0) {
            out |= 0x40u;
        }
        return out;
    }
    const std::uint32_t rounding_bias = 0x7FFFu + ((bits >> 16) & 1u);
    return static_cast<std::uint16_t>((bits + rounding_bias) >> 16);
}

} // namespace specprune
