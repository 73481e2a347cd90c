#pragma once

#include <optional>

#include "mfnn/tape.hpp"

namespace mfnn {

struct Conv2dParams {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

// Cross-correlation, x: [N,C,H,W], w: [C_out, C/groups, K, K].
int conv2d(Tape& t, int x, int w, const Conv2dParams& p);

// x: [N,D_in], w: [D_out,D_in], optional bias [D_out]. Y = X W^T (+ b).
int linear(Tape& t, int x, int w, std::optional<int> b = std::nullopt);

int relu(Tape& t, int x);
int hard_swish(Tape& t, int x);

// [N,C,H,W] -> [N,C]
int global_avg_pool(Tape& t, int x);

// Per-channel affine normalization. Training mode normalizes with batch
// statistics and updates the running buffers in place (momentum 0.1);
// eval mode normalizes with the running buffers.
struct BatchNormBuffers {
  Tensor running_mean;
  Tensor running_var;
};
int batch_norm(Tape& t, int x, int gamma, int beta, BatchNormBuffers& bufs, bool training,
               float momentum = 0.1f, float eps = 1e-5f);

// Mean label-smoothed cross entropy over the batch; logits [N,K]. Returns a
// scalar node.
int cross_entropy_label_smoothed(Tape& t, int logits, const std::vector<int>& labels,
                                 float smoothing);

// Smoothed target row for one sample: (1-eps)+eps/K on the true class, eps/K
// elsewhere.
std::vector<float> smoothed_targets(int num_classes, int true_class, float smoothing);

// Channel window [c0, c1) of a [N,C,H,W] or [N,C] tensor.
int slice_channels(Tape& t, int x, int c0, int c1);
int concat_channels(Tape& t, int a, int b);

// Window [l0, l1) of a 1-D tensor (BN affine parameters).
int slice1d(Tape& t, int x, int l0, int l1);

// Out-channel x in-channel window of a weight tensor: [o0,o1) x [i0,i1) of a
// 2-D [O,I] or 4-D [O,I,k,k] tensor.
int slice_block(Tape& t, int w, int o0, int o1, int i0, int i1);

int add(Tape& t, int a, int b);
// y = x * s for a constant s (no gradient to s).
int scale(Tape& t, int x, float s);

// -sum |x - f| convolution; shapes as conv2d (groups supported).
// dY/dF = sign(X - F); dY/dX = clamp(F - X, -1, 1).
int l1dist_conv(Tape& t, int x, int f, const Conv2dParams& p);

// Value-path helpers reused outside the tape.
Tensor conv2d_value(const Tensor& x, const Tensor& w, const Conv2dParams& p);
Tensor linear_value(const Tensor& x, const Tensor& w, const Tensor* b);
Tensor l1dist_conv_value(const Tensor& x, const Tensor& f, const Conv2dParams& p);

// Output spatial size; throws DimensionError if the window never fits.
int conv_out_extent(int in, int k, int stride, int pad);

// Argmax row labels of [N,K] logits.
std::vector<int> argmax_rows(const Tensor& logits);

// Number of worker threads for conv kernels (MFNN_THREADS, default 1).
int kernel_threads();

}  // namespace mfnn
