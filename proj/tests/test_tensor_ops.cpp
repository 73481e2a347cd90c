#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfnn/ops.hpp"
#include "mfnn/optim.hpp"
#include "mfnn/rng.hpp"
#include "oracles.hpp"

using namespace mfnn;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), DimensionError);
  t.data[4] = std::nanf("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d scalar product") {
  Tape t;
  int x = t.leaf(Tensor({1, 1, 1, 1}, {2.0f}), false);
  int w = t.leaf(Tensor({1, 1, 1, 1}, {3.0f}));
  int y = conv2d(t, x, w, {});
  CHECK(t.val(y).data[0] == doctest::Approx(6.0));
}

TEST_CASE("conv2d hand cross-correlation") {
  Tape t;
  int x = t.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), false);
  int w = t.leaf(Tensor({1, 1, 2, 2}, {1, 0, 0, 1}));
  int y = conv2d(t, x, w, {});
  CHECK(t.val(y).shape == std::vector<int>{1, 1, 1, 1});
  CHECK(t.val(y).data[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d zero weight annihilates") {
  Rng rng(7);
  Tape t;
  int x = t.leaf(rng.normal_tensor({2, 3, 5, 5}, 0, 1), false);
  int w = t.leaf(Tensor::zeros({4, 3, 3, 3}));
  int y = conv2d(t, x, w, {.stride = 1, .pad = 1});
  for (float v : t.val(y).data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d matches brute force on random shapes") {
  Rng rng(11);
  struct Case {
    int n, c, h, cout, k, stride, pad, groups;
  };
  for (const Case cs : {Case{2, 4, 7, 6, 3, 1, 1, 2}, Case{1, 3, 8, 5, 3, 2, 0, 1},
                        Case{2, 8, 6, 8, 3, 1, 1, 8}, Case{1, 6, 5, 9, 1, 1, 0, 3},
                        Case{3, 2, 9, 4, 5, 2, 2, 1}}) {
    Tensor x = oracles::random_tensor(rng, {cs.n, cs.c, cs.h, cs.h});
    Tensor w = oracles::random_tensor(rng, {cs.cout, cs.c / cs.groups, cs.k, cs.k});
    Tensor ref = oracles::conv2d_brute(x, w, cs.stride, cs.pad, cs.groups);
    Tensor got = conv2d_value(x, w, {.stride = cs.stride, .pad = cs.pad, .groups = cs.groups});
    REQUIRE(got.shape == ref.shape);
    for (std::size_t i = 0; i < got.data.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-4));
  }
}

TEST_CASE("depthwise conv equals independent per-channel correlation") {
  Rng rng(13);
  const int c = 5, h = 6, k = 3;
  Tensor x = oracles::random_tensor(rng, {1, c, h, h});
  Tensor w = oracles::random_tensor(rng, {c, 1, k, k});
  Tensor got = conv2d_value(x, w, {.stride = 1, .pad = 1, .groups = c});
  for (int ch = 0; ch < c; ++ch) {
    Tensor img({h, h});
    std::copy_n(x.data.data() + static_cast<std::size_t>(ch) * h * h, h * h, img.data.data());
    Tensor ker({k, k});
    std::copy_n(w.data.data() + static_cast<std::size_t>(ch) * k * k, k * k, ker.data.data());
    Tensor ref = oracles::correlate2d(img, ker, 1, 1);
    for (std::size_t i = 0; i < ref.data.size(); ++i)
      CHECK(got.data[static_cast<std::size_t>(ch) * h * h + i] ==
            doctest::Approx(ref.data[i]).epsilon(1e-4));
  }
}

TEST_CASE("conv2d error paths") {
  Tape t;
  int x = t.leaf(Tensor::zeros({1, 3, 4, 4}));
  int w_bad = t.leaf(Tensor::zeros({2, 2, 3, 3}));
  CHECK_THROWS_AS(conv2d(t, x, w_bad, {}), DimensionError);
  int w = t.leaf(Tensor::zeros({2, 3, 3, 3}));
  CHECK_THROWS_AS(conv2d(t, x, w, {.stride = 1, .pad = 0, .groups = 2}), ConfigError);
  int w_big = t.leaf(Tensor::zeros({2, 3, 7, 7}));
  CHECK_THROWS_AS(conv2d(t, x, w_big, {}), DimensionError);
}

TEST_CASE("linear examples") {
  {
    Tape t;
    int x = t.leaf(Tensor({1, 2}, {1, 2}), false);
    int w = t.leaf(Tensor({1, 2}, {1, 1}));
    CHECK(t.val(linear(t, x, w)).data[0] == doctest::Approx(3.0));
  }
  {
    Tape t;
    int x = t.leaf(Tensor({1, 2}, {1, 0}), false);
    int w = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    int b = t.leaf(Tensor({2}, {5, 5}));
    const Tensor& y = t.val(linear(t, x, w, b));
    CHECK(y.at2(0, 0) == doctest::Approx(6.0));
    CHECK(y.at2(0, 1) == doctest::Approx(5.0));
  }
  {
    Tape t;
    int x = t.leaf(Tensor({1, 2}, {0.5f, -0.5f}), false);
    int w = t.leaf(Tensor({2, 2}, {2, 2, 4, 0}));
    const Tensor& y = t.val(linear(t, x, w));
    CHECK(y.at2(0, 0) == doctest::Approx(0.0));
    CHECK(y.at2(0, 1) == doctest::Approx(2.0));
  }
  {
    Tape t;
    int x = t.leaf(Tensor({1, 3}, {1, 2, 3}));
    int w = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    CHECK_THROWS_AS(linear(t, x, w), DimensionError);
  }
}

TEST_CASE("label smoothing targets") {
  const auto q = smoothed_targets(4, 0, 0.1f);
  CHECK(q[0] == doctest::Approx(0.925));
  CHECK(q[1] == doctest::Approx(0.025));
  CHECK(q[2] == doctest::Approx(0.025));
  CHECK(q[3] == doctest::Approx(0.025));
}

TEST_CASE("cosine schedule hits the midpoint and the end") {
  CHECK(cosine_lr(0.05, 50, 100) == doctest::Approx(0.025));
  CHECK(std::abs(cosine_lr(0.05, 100, 100)) < 1e-9);
  CHECK(cosine_lr(0.05, 0, 100) == doctest::Approx(0.05));
}

TEST_CASE("vanilla SGD step") {
  SgdOptimizer opt({.lr = 0.1f, .momentum = 0.0f, .nesterov = false, .weight_decay = 0.0f});
  int id = opt.register_param({1});
  Tensor w({1}, {1.0f});
  Tensor g({1}, {1.0f});
  opt.apply(id, w, g, true);
  CHECK(w.data[0] == doctest::Approx(0.9));
}

TEST_CASE("one step on a convex quadratic reduces the loss below the curvature bound") {
  // loss(w) = (w - 3)^2, curvature 2, stable for lr < 1.
  for (float lr : {0.01f, 0.1f, 0.5f, 0.9f}) {
    SgdOptimizer opt({.lr = lr, .momentum = 0.0f, .nesterov = false, .weight_decay = 0.0f});
    int id = opt.register_param({1});
    Tensor w({1}, {10.0f});
    auto loss = [&] { return (w.data[0] - 3.0) * (w.data[0] - 3.0); };
    const double before = loss();
    Tensor g({1}, {2.0f * (w.data[0] - 3.0f)});
    opt.apply(id, w, g, false);
    CHECK(loss() < before);
  }
}

TEST_CASE("nesterov momentum accumulates velocity") {
  SgdOptimizer opt({.lr = 0.1f, .momentum = 0.9f, .nesterov = true, .weight_decay = 0.0f});
  int id = opt.register_param({1});
  Tensor w({1}, {0.0f});
  Tensor g({1}, {1.0f});
  opt.apply(id, w, g, false);
  // buf = 1, step = g + mu*buf = 1.9
  CHECK(w.data[0] == doctest::Approx(-0.19));
  opt.apply(id, w, g, false);
  // buf = 1.9, step = 1 + 0.9*1.9 = 2.71
  CHECK(w.data[0] == doctest::Approx(-0.19 - 0.271));
}

TEST_CASE("batch norm normalizes batch statistics and tracks running buffers") {
  Rng rng(3);
  Tape t;
  Tensor x = rng.normal_tensor({4, 3, 5, 5}, 2.0, 3.0);
  int xid = t.leaf(x);
  int g = t.leaf(Tensor::full({3}, 1.0f));
  int b = t.leaf(Tensor::zeros({3}));
  BatchNormBuffers bufs{Tensor::zeros({3}), Tensor::full({3}, 1.0f)};
  int y = batch_norm(t, xid, g, b, bufs, true);
  const Tensor& yv = t.val(y);
  const int hw = 25, n = 4;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < hw; ++k) mean += yv.data[(static_cast<std::size_t>(i) * 3 + c) * hw + k];
    mean /= n * hw;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < hw; ++k) {
        const double d = yv.data[(static_cast<std::size_t>(i) * 3 + c) * hw + k] - mean;
        var += d * d;
      }
    var /= n * hw;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    // momentum 0.1 against zero-init mean / unit-init var
    CHECK(bufs.running_mean.data[static_cast<std::size_t>(c)] ==
          doctest::Approx(2.0 * 0.1).epsilon(0.25));
  }

  // Eval mode reproduces the affine transform of the running stats.
  Tape te;
  int xe = te.leaf(Tensor::full({1, 3, 1, 1}, 0.0f));
  int ge = te.leaf(Tensor::full({3}, 1.0f));
  int be = te.leaf(Tensor::zeros({3}));
  int ye = batch_norm(te, xe, ge, be, bufs, false);
  for (int c = 0; c < 3; ++c) {
    const float rm = bufs.running_mean.data[static_cast<std::size_t>(c)];
    const float rv = bufs.running_var.data[static_cast<std::size_t>(c)];
    CHECK(te.val(ye).data[static_cast<std::size_t>(c)] ==
          doctest::Approx(-rm / std::sqrt(rv + 1e-5f)).epsilon(1e-4));
  }
}

TEST_CASE("channel slice and concat round trip") {
  Rng rng(5);
  Tape t;
  Tensor x = rng.normal_tensor({2, 6, 3, 3}, 0, 1);
  int xid = t.leaf(x);
  int lo = slice_channels(t, xid, 0, 2);
  int hi = slice_channels(t, xid, 2, 6);
  int back = concat_channels(t, lo, hi);
  CHECK(t.val(back).data == x.data);
}

TEST_CASE("cross entropy of uniform logits is log K plus smoothing-free") {
  Tape t;
  int z = t.leaf(Tensor::zeros({2, 4}));
  int loss = cross_entropy_label_smoothed(t, z, {0, 3}, 0.0f);
  CHECK(t.val(loss).data[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("global average pool") {
  Tape t;
  int x = t.leaf(Tensor({1, 2, 2, 2}, {1, 2, 3, 4, 10, 10, 10, 10}));
  const Tensor& y = t.val(global_avg_pool(t, x));
  CHECK(y.at2(0, 0) == doctest::Approx(2.5));
  CHECK(y.at2(0, 1) == doctest::Approx(10.0));
}

TEST_CASE("conv kernels are thread-count invariant") {
  Rng rng(17);
  Tensor x = oracles::random_tensor(rng, {5, 4, 9, 9});
  Tensor w = oracles::random_tensor(rng, {6, 4, 3, 3});
  Tensor a = conv2d_value(x, w, {.stride = 2, .pad = 1});
  // kernel_threads() is latched once per process; emulate the multi-thread
  // partition by slicing the batch and comparing sample blocks.
  for (int n = 0; n < 5; ++n) {
    Tensor xs({1, 4, 9, 9});
    std::copy_n(x.data.data() + static_cast<std::size_t>(n) * 4 * 81, 4 * 81, xs.data.data());
    Tensor ys = conv2d_value(xs, w, {.stride = 2, .pad = 1});
    for (std::size_t i = 0; i < ys.data.size(); ++i)
      CHECK(ys.data[i] == a.data[static_cast<std::size_t>(n) * ys.data.size() + i]);
  }
}
