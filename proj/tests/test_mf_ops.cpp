#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfnn/mf_ops.hpp"
#include "mfnn/ops.hpp"
#include "mfnn/quant.hpp"
#include "mfnn/rng.hpp"
#include "oracles.hpp"

using namespace mfnn;

TEST_CASE("quantize_pow2 pinned examples") {
  {
    PowTwoWeight q = quantize_pow2(Tensor({1}, {-0.125f}), -15, 0);
    CHECK(q.sign[0] == -1);
    CHECK(q.exponent[0] == -3);
    CHECK(dequantize(q).data[0] == doctest::Approx(-0.125));
  }
  {
    // round(log2 0.75) = round(-0.415) = 0
    PowTwoWeight q = quantize_pow2(Tensor({1}, {0.75f}), -15, 0);
    CHECK(q.sign[0] == 1);
    CHECK(q.exponent[0] == 0);
    CHECK(dequantize(q).data[0] == doctest::Approx(1.0));
  }
  {
    PowTwoWeight q = quantize_pow2(Tensor({1}, {0.0f}), -15, 0);
    CHECK(q.sign[0] == 0);
    CHECK(dequantize(q).data[0] == 0.0f);
  }
  CHECK_THROWS_AS(quantize_pow2(Tensor({1}, {1.0f}), -3, 0), ConfigError);
}

TEST_CASE("quantize_pow2 is idempotent on its own dequantized output") {
  Rng rng(21);
  Tensor w = oracles::random_tensor(rng, {64}, -2.0, 2.0);
  PowTwoWeight q1 = quantize_pow2(w, -15, 0);
  PowTwoWeight q2 = quantize_pow2(dequantize(q1), -15, 0);
  CHECK(q1.sign == q2.sign);
  for (std::size_t i = 0; i < q1.sign.size(); ++i)
    if (q1.sign[i] != 0) CHECK(q1.exponent[i] == q2.exponent[i]);
}

TEST_CASE("nearest power-of-two relative error bound") {
  Rng rng(22);
  const double bound = std::sqrt(2.0) - 1.0;
  for (int i = 0; i < 500; ++i) {
    const double w = rng.uniform(-1.0, 1.0);
    if (w == 0.0) continue;
    const double raw = std::round(std::log2(std::abs(w)));
    if (raw < -15.0 || raw > 0.0) continue;  // bound holds inside the window
    PowTwoWeight q = quantize_pow2(Tensor({1}, {static_cast<float>(w)}), -15, 0);
    const double deq = dequantize(q).data[0];
    CHECK(std::abs(deq - w) / std::abs(w) <= bound + 1e-6);
  }
}

TEST_CASE("5-bit code map round trip and packing") {
  for (int pmin : {-15, -8, 0}) {
    for (int code = 0; code < 32; ++code) {
      std::int8_t s, e;
      decode_pow2(static_cast<std::uint8_t>(code), pmin, s, e);
      CHECK(encode_pow2(s, e, pmin) == code);
    }
    // the one aliased state: -2^p_min maps to the zero code
    CHECK(encode_pow2(-1, static_cast<std::int8_t>(pmin), pmin) == 16);
  }
  Rng rng(23);
  std::vector<std::uint8_t> codes(301);
  for (auto& c : codes) c = static_cast<std::uint8_t>(rng.uniform_int(0, 31));
  const auto bytes = pack_codes(codes);
  CHECK(bytes.size() == (codes.size() * 5 + 7) / 8);
  CHECK(unpack_codes(bytes, codes.size()) == codes);
}

TEST_CASE("shift_conv_train equals conv2d when weights are exact powers of two") {
  Rng rng(24);
  Tensor x = oracles::random_tensor(rng, {1, 3, 5, 5});
  Tensor w({4, 3, 3, 3});
  for (auto& v : w.data) {
    const int p = rng.uniform_int(-6, 0);
    v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * std::ldexp(1.0, p));
  }
  Tape t;
  int xid = t.leaf(x, false);
  int wid = t.leaf(w);
  int ys = shift_conv_train(t, xid, wid, {.stride = 1, .pad = 1}, -15, 0);
  int yc = conv2d(t, xid, wid, {.stride = 1, .pad = 1});
  CHECK(t.val(ys).data == t.val(yc).data);
}

TEST_CASE("shift_conv_train quantizes 0.75 to 1.0") {
  Tape t;
  int x = t.leaf(Tensor({1, 1, 1, 1}, {3.0f}), false);
  int w = t.leaf(Tensor({1, 1, 1, 1}, {0.75f}));
  int y = shift_conv_train(t, x, w, {}, -15, 0);
  CHECK(t.val(y).data[0] == doctest::Approx(3.0));
}

TEST_CASE("shift_conv_eval pinned shift arithmetic") {
  {
    // 8 << 1 = 16 with an exponent window reaching P=1
    QuantizedActivation qx{{1, 1, 1, 1}, {8}, 1.0f};
    PowTwoWeight qw{{1, 1, 1, 1}, {1}, {1}, -14, 1};
    Tensor y = shift_conv_eval(qx, qw, {}, "t");
    CHECK(y.data[0] == doctest::Approx(16.0));
  }
  {
    // -(8 >> 2) = -2
    QuantizedActivation qx{{1, 1, 1, 1}, {8}, 1.0f};
    PowTwoWeight qw{{1, 1, 1, 1}, {-1}, {-2}, -15, 0};
    Tensor y = shift_conv_eval(qx, qw, {}, "t");
    CHECK(y.data[0] == doctest::Approx(-2.0));
  }
}

TEST_CASE("integer eval path tracks the float train path within the quantization bound") {
  Rng rng(25);
  const Conv2dParams p{.stride = 1, .pad = 1, .groups = 1};
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = oracles::random_tensor(rng, {1, 4, 8, 8}, -2.0, 2.0);
    Tensor w = oracles::random_tensor(rng, {3, 4, 3, 3}, -1.0, 1.0);
    PowTwoWeight qw = canonicalize(quantize_pow2(w, -15, 0));
    QuantizedActivation qx = quantize_activation(x);

    Tape t;
    int xid = t.leaf(dequantize_activation(qx), false);
    int wid = t.leaf(w);
    const Tensor& train = t.val(shift_conv_train(t, xid, wid, p, -15, 0));
    Tensor eval = shift_conv_eval(qx, qw, p, "t");
    // The integer path is exact for the quantized input, so against the
    // train path on the same quantized input only float32 slop remains.
    for (std::size_t i = 0; i < eval.data.size(); ++i)
      CHECK(std::abs(eval.data[i] - train.data[i]) <= 1e-4 * (1.0 + std::abs(train.data[i])));

    // Against the full-precision input, each tap is off by at most scale/2
    // before its shift.
    Tape t2;
    int xf = t2.leaf(x, false);
    int wf = t2.leaf(w);
    const Tensor& ref = t2.val(shift_conv_train(t2, xf, wf, p, -15, 0));
    const int oh = eval.dim(2), ow = eval.dim(3);
    for (int oc = 0; oc < 3; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double bound = 1e-3;
          for (int ic = 0; ic < 4; ++ic)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy + ky - 1, ix = ox + kx - 1;
                if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                const std::size_t wi = ((static_cast<std::size_t>(oc) * 4 + ic) * 3 + ky) * 3 + kx;
                if (qw.sign[wi] == 0) continue;
                bound += 0.5 * qx.scale * std::ldexp(1.0, qw.exponent[wi]);
              }
          CHECK(std::abs(eval.at4(0, oc, oy, ox) - ref.at4(0, oc, oy, ox)) <= bound);
        }
  }
}

TEST_CASE("scale-1 integer mode is exact") {
  Rng rng(26);
  const Conv2dParams p{.stride = 1, .pad = 1, .groups = 1};
  Tensor x({1, 2, 6, 6});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform_int(-100, 100));
  Tensor w({2, 2, 3, 3});
  for (auto& v : w.data) {
    const int pw = rng.uniform_int(-2, 3);
    v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * std::ldexp(1.0, pw));
  }
  PowTwoWeight qw = canonicalize(quantize_pow2(w, -2, 13));
  QuantizedActivation qx = integer_activation(x);
  Tensor eval = shift_conv_eval(qx, qw, p, "t");
  Tape t;
  int xid = t.leaf(x, false);
  int wid = t.leaf(w);
  const Tensor& train = t.val(shift_conv_train(t, xid, wid, p, -2, 13));
  CHECK(eval.data == train.data);

  CHECK_THROWS_AS(integer_activation(Tensor({1}, {0.5f})), ConfigError);
}

TEST_CASE("shift_linear examples") {
  {
    Rng rng(27);
    Tensor x = oracles::random_tensor(rng, {2, 4});
    Tensor w({3, 4});
    for (auto& v : w.data)
      v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * std::ldexp(1.0, rng.uniform_int(-5, 0)));
    Tape t;
    int xid = t.leaf(x, false);
    int wid = t.leaf(w);
    const Tensor ys = t.val(shift_linear(t, xid, wid, std::nullopt, -15, 0));
    const Tensor yl = t.val(linear(t, xid, wid));
    CHECK(ys.data == yl.data);
  }
  {
    Tape t;
    int x = t.leaf(Tensor({1, 1}, {2.0f}), false);
    int w = t.leaf(Tensor({1, 1}, {0.75f}));
    CHECK(t.val(shift_linear(t, x, w, std::nullopt, -15, 0)).data[0] == doctest::Approx(2.0));
  }
  {
    Tape t;
    int x = t.leaf(Tensor({1, 1}, {0.0f}), false);
    int w = t.leaf(Tensor({1, 1}, {0.5f}));
    int b = t.leaf(Tensor({1}, {1.0f}));
    CHECK(t.val(shift_linear(t, x, w, b, -15, 0)).data[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("shift_linear_eval matches its float path") {
  Rng rng(28);
  Tensor x = oracles::random_tensor(rng, {3, 6}, -1.5, 1.5);
  Tensor w = oracles::random_tensor(rng, {4, 6}, -1.0, 1.0);
  Tensor b = oracles::random_tensor(rng, {4});
  PowTwoWeight qw = canonicalize(quantize_pow2(w, -15, 0));
  QuantizedActivation qx = quantize_activation(x);
  Tensor eval = shift_linear_eval(qx, qw, &b, "fc");
  Tape t;
  int xid = t.leaf(dequantize_activation(qx), false);
  int wid = t.leaf(w);
  int bid = t.leaf(b);
  const Tensor& train = t.val(shift_linear(t, xid, wid, bid, -15, 0));
  for (std::size_t i = 0; i < eval.data.size(); ++i)
    CHECK(eval.data[i] == doctest::Approx(train.data[i]).epsilon(1e-4));
}

TEST_CASE("adder conv pinned examples") {
  {
    // patch [1,2] against filter [0,1] as two channels with a 1x1 kernel
    Tape t;
    int x = t.leaf(Tensor({1, 2, 1, 1}, {1.0f, 2.0f}), false);
    int f = t.leaf(Tensor({1, 2, 1, 1}, {0.0f, 1.0f}));
    CHECK(t.val(add_conv(t, x, f, {})).data[0] == doctest::Approx(-2.0));
  }
  {
    Rng rng(29);
    Tensor x = oracles::random_tensor(rng, {1, 3, 3, 3});
    Tensor f({1, 3, 3, 3}, x.data);  // X == F
    Tape t;
    int xid = t.leaf(x, false);
    int fid = t.leaf(f);
    CHECK(t.val(add_conv(t, xid, fid, {})).data[0] == doctest::Approx(0.0));
  }
  {
    Rng rng(30);
    Tensor x = oracles::random_tensor(rng, {1, 2, 4, 4});
    Tensor f = oracles::random_tensor(rng, {2, 2, 3, 3});
    Tensor x2 = x, f2 = f;
    for (auto& v : x2.data) v *= 2.0f;
    for (auto& v : f2.data) v *= 2.0f;
    Tape t;
    const Tensor y1 = t.val(add_conv(t, t.leaf(x, false), t.leaf(f), {}));
    const Tensor y2 = t.val(add_conv(t, t.leaf(x2, false), t.leaf(f2), {}));
    for (std::size_t i = 0; i < y1.data.size(); ++i)
      CHECK(y2.data[i] == doctest::Approx(2.0f * y1.data[i]).epsilon(1e-4));
  }
}

TEST_CASE("adder conv output is nonpositive and zero only on exact matches") {
  Rng rng(31);
  Tensor x = oracles::random_tensor(rng, {2, 3, 5, 5});
  Tensor f = oracles::random_tensor(rng, {4, 3, 3, 3});
  Tensor y = l1dist_conv_value(x, f, {.stride = 1, .pad = 1});
  for (float v : y.data) CHECK(v <= 0.0f);
  // random continuous values never match exactly
  for (float v : y.data) CHECK(v < 0.0f);
}

TEST_CASE("16-bit adder eval stays within its quantization budget") {
  Rng rng(32);
  Tensor x = oracles::random_tensor(rng, {1, 3, 6, 6}, -1.0, 1.0);
  Tensor f = oracles::random_tensor(rng, {2, 3, 3, 3}, -1.0, 1.0);
  const Conv2dParams p{.stride = 1, .pad = 0, .groups = 1};
  Tensor ref = l1dist_conv_value(x, f, p);
  Tensor got = add_conv_eval16(x, f, p, "a");
  // one scale step per tap
  const double bound = 27.0 * (2.0 / 32767.0);
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    CHECK(std::abs(got.data[i] - ref.data[i]) <= bound);
}

TEST_CASE("activation quantization examples and round trip") {
  {
    QuantizedActivation qa = quantize_activation(Tensor({2}, {0.0f, 0.0f}));
    CHECK(qa.scale == 1.0f);
    CHECK(qa.values[0] == 0);
    CHECK(qa.values[1] == 0);
  }
  {
    QuantizedActivation qa = quantize_activation(Tensor({2}, {-1.0f, 1.0f}));
    CHECK(qa.values[0] == -32767);
    CHECK(qa.values[1] == 32767);
  }
  Rng rng(33);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = oracles::random_tensor(rng, {40}, -3.0, 3.0);
    QuantizedActivation qa = quantize_activation(x);
    Tensor back = dequantize_activation(qa);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      CHECK(std::abs(back.data[i] - x.data[i]) <= qa.scale / 2 + 1e-7);
      CHECK(qa.values[i] >= -32768);
      CHECK(qa.values[i] <= 32767);
    }
  }
}
