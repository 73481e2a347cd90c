#pragma once

#include <optional>
#include <string>

#include "mfnn/ops.hpp"
#include "mfnn/quant.hpp"

namespace mfnn {

// Fake-quantization node: value = dequantize(quantize_pow2(w)), backward is a
// straight-through estimator that drops gradient on elements whose exponent
// was clamped at the window edges.
int pow2_ste(Tape& t, int w, int p_min, int p_max);

// Float training path of the shift operators: ordinary conv/linear over the
// power-of-two rounded weight.
int shift_conv_train(Tape& t, int x, int w, const Conv2dParams& p, int p_min, int p_max);
int shift_linear(Tape& t, int x, int w, std::optional<int> b, int p_min, int p_max);

// Integer eval path: shifts, sign flips and adds on a widened accumulator.
// Every term is pre-aligned by (P - p_min) left shifts so negative exponents
// lose no bits; the result is dequantized by scale * 2^p_min.
Tensor shift_conv_eval(const QuantizedActivation& x, const PowTwoWeight& qw,
                       const Conv2dParams& p, const std::string& layer_id);
Tensor shift_linear_eval(const QuantizedActivation& x, const PowTwoWeight& qw, const Tensor* bias,
                         const std::string& layer_id);

// Adder convolution, training path (x and f are real tensors on the tape).
int add_conv(Tape& t, int x, int f, const Conv2dParams& p);

// 16-bit adder-convolution eval: x and f share one symmetric scale, the L1
// accumulation runs on 32-bit integers.
Tensor add_conv_eval16(const Tensor& x, const Tensor& f, const Conv2dParams& p,
                       const std::string& layer_id);

}  // namespace mfnn
