#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnn/tensor.hpp"

namespace mfnn {

// Signed power-of-two weight: value = sign * 2^exponent, sign in {-1,0,+1}.
// The exponent window [p_min, p_max] spans 16 levels so a weight packs into
// a 5-bit code (see pack_pow2_codes for the code map).
struct PowTwoWeight {
  std::vector<int> shape;
  std::vector<std::int8_t> sign;
  std::vector<std::int8_t> exponent;
  int p_min = -15;
  int p_max = 0;

  std::int64_t numel() const { return static_cast<std::int64_t>(sign.size()); }
  float value_at(std::size_t i) const;
};

// Eq.-style rounding: S = sign(w) (zero below 2^(p_min-1) in magnitude),
// P = clamp(round(log2 |w|), p_min, p_max). `clamped`, when given, marks the
// elements whose raw exponent fell outside the window (used for STE clipping).
PowTwoWeight quantize_pow2(const Tensor& w, int p_min, int p_max,
                           std::vector<std::uint8_t>* clamped = nullptr);

Tensor dequantize(const PowTwoWeight& q);

// 5-bit code map over the 16-level window:
//   0..15  -> +2^(p_min + code)
//   16     -> 0
//   17..31 -> -2^(p_min + code - 16)
// The window holds 33 sign/exponent states but only 32 codes, so the
// smallest-magnitude negative (-2^p_min) aliases to the zero code.
std::uint8_t encode_pow2(std::int8_t sign, std::int8_t exponent, int p_min);
void decode_pow2(std::uint8_t code, int p_min, std::int8_t& sign, std::int8_t& exponent);

std::vector<std::uint8_t> pow2_codes(const PowTwoWeight& q);
// Little-endian bit stream, 5 bits per code.
std::vector<std::uint8_t> pack_codes(const std::vector<std::uint8_t>& codes);
std::vector<std::uint8_t> unpack_codes(const std::vector<std::uint8_t>& bytes, std::size_t count);

// Round-trips sign/exponent through the 5-bit codes so the in-memory weight
// matches what an export file can represent.
PowTwoWeight canonicalize(const PowTwoWeight& q);

// Symmetric 16-bit activation quantization, scale = max|x| / 32767 (1 for an
// all-zero tensor), round half to even.
struct QuantizedActivation {
  std::vector<int> shape;
  std::vector<std::int16_t> values;
  float scale = 1.0f;
};

QuantizedActivation quantize_activation(const Tensor& x);
Tensor dequantize_activation(const QuantizedActivation& qa);

// Scale-1 wrapper for tensors that already hold integers in int16 range; the
// integer eval path is then exact rather than within a quantization step.
QuantizedActivation integer_activation(const Tensor& x);

}  // namespace mfnn
