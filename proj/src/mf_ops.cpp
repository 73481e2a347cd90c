#include "mfnn/mf_ops.hpp"

#include <cmath>
#include <memory>

namespace mfnn {

int pow2_ste(Tape& t, int w, int p_min, int p_max) {
  auto clamped = std::make_shared<std::vector<std::uint8_t>>();
  // Rounding goes through the 5-bit code map so the training value set is
  // exactly what an export file can carry.
  PowTwoWeight q = canonicalize(quantize_pow2(t.val(w), p_min, p_max, clamped.get()));
  return t.node(dequantize(q), {w}, [w, clamped](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dw = tp.grad(w);
    for (std::size_t i = 0; i < dw.data.size(); ++i)
      if (!(*clamped)[i]) dw.data[i] += dy.data[i];
  });
}

int shift_conv_train(Tape& t, int x, int w, const Conv2dParams& p, int p_min, int p_max) {
  return conv2d(t, x, pow2_ste(t, w, p_min, p_max), p);
}

int shift_linear(Tape& t, int x, int w, std::optional<int> b, int p_min, int p_max) {
  return linear(t, x, pow2_ste(t, w, p_min, p_max), b);
}

namespace {

constexpr std::int64_t kAccGuard = std::int64_t{1} << 62;

inline void add_term(std::int64_t& acc, std::int64_t term, const std::string& layer_id) {
  acc += term;
  if (acc > kAccGuard || acc < -kAccGuard)
    throw OverflowError("shift accumulator overflow", layer_id);
}

}  // namespace

Tensor shift_conv_eval(const QuantizedActivation& x, const PowTwoWeight& qw,
                       const Conv2dParams& p, const std::string& layer_id) {
  Tensor xs(x.shape);  // shape probe only; values live in x.values
  if (xs.ndim() != 4) throw DimensionError("shift_conv_eval input must be N x C x H x W");
  const int n = xs.dim(0), c = xs.dim(1), h = xs.dim(2), w = xs.dim(3);
  if (static_cast<int>(qw.shape.size()) != 4)
    throw DimensionError("shift_conv_eval weight must be 4-D");
  const int cout = qw.shape[0], cg = qw.shape[1], k = qw.shape[2];
  if (p.groups < 1 || c % p.groups != 0 || cout % p.groups != 0)
    throw ConfigError("shift_conv_eval groups must divide both channel counts");
  if (c / p.groups != cg) throw DimensionError("shift_conv_eval channel/group mismatch");
  const int oh = conv_out_extent(h, k, p.stride, p.pad);
  const int ow = conv_out_extent(w, k, p.stride, p.pad);
  const int og = cout / p.groups;

  Tensor y({n, cout, oh, ow});
  const float out_scale = x.scale * std::ldexp(1.0f, qw.p_min);
  for (int ni = 0; ni < n; ++ni) {
    for (int g = 0; g < p.groups; ++g) {
      for (int oc = g * og; oc < (g + 1) * og; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            std::int64_t acc = 0;
            for (int ic = 0; ic < cg; ++ic) {
              const int xc = g * cg + ic;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * p.stride + ky - p.pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * p.stride + kx - p.pad;
                  if (ix < 0 || ix >= w) continue;
                  const std::size_t wi =
                      ((static_cast<std::size_t>(oc) * cg + ic) * k + ky) * k + kx;
                  const std::int8_t s = qw.sign[wi];
                  if (s == 0) continue;
                  const std::int64_t xi =
                      x.values[((static_cast<std::size_t>(ni) * c + xc) * h + iy) * w + ix];
                  if (xi == 0) continue;
                  const int shift = qw.exponent[wi] - qw.p_min;
                  const std::int64_t term = xi << shift;
                  add_term(acc, s > 0 ? term : -term, layer_id);
                }
              }
            }
            y.at4(ni, oc, oy, ox) = static_cast<float>(acc) * out_scale;
          }
        }
      }
    }
  }
  return y;
}

Tensor shift_linear_eval(const QuantizedActivation& x, const PowTwoWeight& qw, const Tensor* bias,
                         const std::string& layer_id) {
  if (x.shape.size() != 2) throw DimensionError("shift_linear_eval input must be N x D");
  if (qw.shape.size() != 2) throw DimensionError("shift_linear_eval weight must be 2-D");
  const int n = x.shape[0], din = x.shape[1], dout = qw.shape[0];
  if (qw.shape[1] != din) throw DimensionError("shift_linear_eval inner dimensions disagree");
  Tensor y({n, dout});
  const float out_scale = x.scale * std::ldexp(1.0f, qw.p_min);
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < dout; ++o) {
      std::int64_t acc = 0;
      for (int j = 0; j < din; ++j) {
        const std::size_t wi = static_cast<std::size_t>(o) * din + j;
        const std::int8_t s = qw.sign[wi];
        if (s == 0) continue;
        const std::int64_t xi = x.values[static_cast<std::size_t>(i) * din + j];
        if (xi == 0) continue;
        const std::int64_t term = xi << (qw.exponent[wi] - qw.p_min);
        add_term(acc, s > 0 ? term : -term, layer_id);
      }
      y.at2(i, o) = static_cast<float>(acc) * out_scale +
                    (bias ? bias->data[static_cast<std::size_t>(o)] : 0.0f);
    }
  }
  return y;
}

int add_conv(Tape& t, int x, int f, const Conv2dParams& p) { return l1dist_conv(t, x, f, p); }

Tensor add_conv_eval16(const Tensor& x, const Tensor& f, const Conv2dParams& p,
                       const std::string& layer_id) {
  float amax = 0.0f;
  for (float v : x.data) amax = std::max(amax, std::abs(v));
  for (float v : f.data) amax = std::max(amax, std::abs(v));
  const float scale = amax > 0.0f ? amax / 32767.0f : 1.0f;
  auto q16 = [scale](float v) {
    return static_cast<std::int32_t>(std::nearbyint(static_cast<double>(v) / scale));
  };

  if (x.ndim() != 4 || f.ndim() != 4) throw DimensionError("add_conv_eval16 expects 4-D tensors");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = f.dim(0), cg = f.dim(1), k = f.dim(2);
  if (p.groups < 1 || c % p.groups != 0 || cout % p.groups != 0 || c / p.groups != cg)
    throw ConfigError("add_conv_eval16 channel/group mismatch");
  const int oh = conv_out_extent(h, k, p.stride, p.pad);
  const int ow = conv_out_extent(w, k, p.stride, p.pad);
  const int og = cout / p.groups;

  Tensor y({n, cout, oh, ow});
  for (int ni = 0; ni < n; ++ni)
    for (int g = 0; g < p.groups; ++g)
      for (int oc = g * og; oc < (g + 1) * og; ++oc)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            std::int32_t acc = 0;
            for (int ic = 0; ic < cg; ++ic) {
              const int xc = g * cg + ic;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * p.stride + ky - p.pad;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * p.stride + kx - p.pad;
                  const std::int32_t xi = (iy < 0 || iy >= h || ix < 0 || ix >= w)
                                              ? 0
                                              : q16(x.at4(ni, xc, iy, ix));
                  const std::int32_t fi = q16(f.at4(oc, ic, ky, kx));
                  const std::int32_t d = xi - fi;
                  acc -= d < 0 ? -d : d;
                  if (acc < -(std::int32_t{1} << 30))
                    throw OverflowError("16-bit adder accumulator overflow", layer_id);
                }
              }
            }
            y.at4(ni, oc, oy, ox) = static_cast<float>(acc) * scale;
          }
  return y;
}

}  // namespace mfnn
