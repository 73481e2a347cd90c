#include "mfnn/quant.hpp"

#include <cmath>

namespace mfnn {

float PowTwoWeight::value_at(std::size_t i) const {
  if (sign[i] == 0) return 0.0f;
  return static_cast<float>(sign[i]) * std::ldexp(1.0f, exponent[i]);
}

PowTwoWeight quantize_pow2(const Tensor& w, int p_min, int p_max,
                           std::vector<std::uint8_t>* clamped) {
  if (p_max - p_min != 15) throw ConfigError("exponent window must span 16 levels");
  PowTwoWeight q;
  q.shape = w.shape;
  q.p_min = p_min;
  q.p_max = p_max;
  q.sign.resize(w.data.size());
  q.exponent.resize(w.data.size());
  if (clamped) clamped->assign(w.data.size(), 0);
  const double zero_cut = std::ldexp(1.0, p_min - 1);
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    const double v = w.data[i];
    if (std::isnan(v)) throw Error("quantize_pow2 requires non-NaN weights");
    const double a = std::abs(v);
    if (a < zero_cut) {
      q.sign[i] = 0;
      q.exponent[i] = static_cast<std::int8_t>(p_min);
      if (clamped) (*clamped)[i] = 1;  // raw exponent below the window
      continue;
    }
    q.sign[i] = v > 0.0 ? 1 : -1;
    const double raw = std::round(std::log2(a));
    double p = raw;
    if (p < p_min) p = p_min;
    if (p > p_max) p = p_max;
    if (clamped && p != raw) (*clamped)[i] = 1;
    q.exponent[i] = static_cast<std::int8_t>(p);
  }
  return q;
}

Tensor dequantize(const PowTwoWeight& q) {
  Tensor t(q.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = q.value_at(i);
  return t;
}

std::uint8_t encode_pow2(std::int8_t sign, std::int8_t exponent, int p_min) {
  if (sign == 0) return 16;
  const int off = exponent - p_min;
  if (off < 0 || off > 15) throw ConfigError("exponent outside the 5-bit window");
  if (sign > 0) return static_cast<std::uint8_t>(off);
  if (off == 0) return 16;  // -2^p_min has no code of its own
  return static_cast<std::uint8_t>(16 + off);
}

void decode_pow2(std::uint8_t code, int p_min, std::int8_t& sign, std::int8_t& exponent) {
  if (code > 31) throw FormatError("5-bit code out of range");
  if (code == 16) {
    sign = 0;
    exponent = static_cast<std::int8_t>(p_min);
  } else if (code < 16) {
    sign = 1;
    exponent = static_cast<std::int8_t>(p_min + code);
  } else {
    sign = -1;
    exponent = static_cast<std::int8_t>(p_min + code - 16);
  }
}

std::vector<std::uint8_t> pow2_codes(const PowTwoWeight& q) {
  std::vector<std::uint8_t> codes(q.sign.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    codes[i] = encode_pow2(q.sign[i], q.exponent[i], q.p_min);
  return codes;
}

std::vector<std::uint8_t> pack_codes(const std::vector<std::uint8_t>& codes) {
  std::vector<std::uint8_t> bytes((codes.size() * 5 + 7) / 8, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t bit = i * 5;
    const std::uint16_t v = static_cast<std::uint16_t>(codes[i] & 0x1f) << (bit % 8);
    bytes[bit / 8] |= static_cast<std::uint8_t>(v & 0xff);
    if ((bit % 8) > 3) bytes[bit / 8 + 1] |= static_cast<std::uint8_t>(v >> 8);
  }
  return bytes;
}

std::vector<std::uint8_t> unpack_codes(const std::vector<std::uint8_t>& bytes, std::size_t count) {
  if (bytes.size() < (count * 5 + 7) / 8) throw FormatError("packed code stream too short");
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t bit = i * 5;
    std::uint16_t v = bytes[bit / 8];
    if (bit / 8 + 1 < bytes.size()) v |= static_cast<std::uint16_t>(bytes[bit / 8 + 1]) << 8;
    codes[i] = static_cast<std::uint8_t>((v >> (bit % 8)) & 0x1f);
  }
  return codes;
}

PowTwoWeight canonicalize(const PowTwoWeight& q) {
  PowTwoWeight out = q;
  for (std::size_t i = 0; i < out.sign.size(); ++i)
    decode_pow2(encode_pow2(q.sign[i], q.exponent[i], q.p_min), q.p_min, out.sign[i],
                out.exponent[i]);
  return out;
}

QuantizedActivation quantize_activation(const Tensor& x) {
  QuantizedActivation qa;
  qa.shape = x.shape;
  qa.values.resize(x.data.size());
  float amax = 0.0f;
  for (float v : x.data) {
    if (!std::isfinite(v)) throw Error("quantize_activation requires finite input");
    amax = std::max(amax, std::abs(v));
  }
  qa.scale = amax > 0.0f ? amax / 32767.0f : 1.0f;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double r = std::nearbyint(static_cast<double>(x.data[i]) / qa.scale);
    qa.values[i] = static_cast<std::int16_t>(std::min(32767.0, std::max(-32768.0, r)));
  }
  return qa;
}

Tensor dequantize_activation(const QuantizedActivation& qa) {
  Tensor t(qa.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i)
    t.data[i] = static_cast<float>(qa.values[i]) * qa.scale;
  return t;
}

QuantizedActivation integer_activation(const Tensor& x) {
  QuantizedActivation qa;
  qa.shape = x.shape;
  qa.scale = 1.0f;
  qa.values.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const float v = x.data[i];
    if (v != std::floor(v) || v < -32768.0f || v > 32767.0f)
      throw ConfigError("integer_activation requires int16-range whole numbers");
    qa.values[i] = static_cast<std::int16_t>(v);
  }
  return qa;
}

}  // namespace mfnn
