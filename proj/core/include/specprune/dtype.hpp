#pragma once

#include <cstdint>
#include <string>

namespace specprune {

enum class DType { f32, f16, bf16 };

const char * dtype_name(DType dt);          // "f32" / "f16" / "bf16"
const char * dtype_tag(DType dt);           // safetensors tag: "F32" / "F16" / "BF16"
bool dtype_from_tag(const std::string & tag, DType & out);
bool dtype_from_name(const std::string & name, DType & out);
std::size_t dtype_size(DType dt);

// Exact bit expansions: no value loaded from a checkpoint loses precision.
float f16_bits_to_f32(std::uint16_t bits);
float bf16_bits_to_f32(std::uint16_t bits);

// Round-to-nearest-even narrowing. Exact inverse of the expansions above for
// any value that originated as f16/bf16, NaN payloads included.
std::uint16_t f32_to_f16_bits(float value);
std::uint16_t f32_to_bf16_bits(float value);

} // namespace specprune
