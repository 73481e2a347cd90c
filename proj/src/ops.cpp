#include "mfnn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <thread>

namespace mfnn {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int kernel_threads() {
  static const int n = [] {
    const char* env = std::getenv("MFNN_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    return std::clamp(v, 1, 64);
  }();
  return n;
}

namespace {

// Runs fn(i) for i in [0, n). Work items must write disjoint outputs; the
// per-thread partition is by contiguous chunks so results do not depend on
// the thread count.
void parallel_for(int n, const std::function<void(int)>& fn) {
  const int threads = std::min(kernel_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  const int chunk = (n + threads - 1) / threads;
  for (int tid = 0; tid < threads; ++tid) {
    const int lo = tid * chunk, hi = std::min(n, lo + chunk);
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct ConvDims {
  int n, c, h, w;        // input
  int cout, cg, k;       // weight; cg = c / groups
  int oh, ow;            // output spatial
  int og;                // cout / groups
  int groups, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Conv2dParams& p) {
  if (x.ndim() != 4) throw DimensionError("conv2d input must be N x C x H x W");
  if (w.ndim() != 4) throw DimensionError("conv2d weight must be C_out x C_in/g x K x K");
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d kernels must be square");
  ConvDims d;
  d.n = x.dim(0);
  d.c = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.cg = w.dim(1);
  d.k = w.dim(2);
  d.groups = p.groups;
  d.stride = p.stride;
  d.pad = p.pad;
  if (p.groups < 1 || d.c % p.groups != 0 || d.cout % p.groups != 0)
    throw ConfigError("conv2d groups must divide both channel counts");
  if (d.c / p.groups != d.cg)
    throw DimensionError("conv2d weight in-channels disagree with input/groups");
  if (p.stride < 1) throw ConfigError("conv2d stride must be >= 1");
  d.oh = conv_out_extent(d.h, d.k, p.stride, p.pad);
  d.ow = conv_out_extent(d.w, d.k, p.stride, p.pad);
  d.og = d.cout / p.groups;
  return d;
}

// Column matrix (C*K*K) x (OH*OW) for one sample; rows are channel-major so
// each group owns a contiguous row band.
void im2col(const float* x, const ConvDims& d, float* cols) {
  const int ohw = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        float* row = cols + (static_cast<std::size_t>(c) * d.k * d.k + ky * d.k + kx) * ohw;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) {
            std::fill(row + oy * d.ow, row + (oy + 1) * d.ow, 0.0f);
            continue;
          }
          const float* src = x + (static_cast<std::size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride + kx - d.pad;
            row[oy * d.ow + ox] = (ix < 0 || ix >= d.w) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

// Scatter-add of a column matrix back into one sample's gradient image.
void col2im_add(const float* cols, const ConvDims& d, float* dx) {
  const int ohw = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const float* row = cols + (static_cast<std::size_t>(c) * d.k * d.k + ky * d.k + kx) * ohw;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          float* dst = dx + (static_cast<std::size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride + kx - d.pad;
            if (ix >= 0 && ix < d.w) dst[ix] += row[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

void conv_forward_sample(const float* x, const float* w, const ConvDims& d, float* y,
                         float* cols) {
  im2col(x, d, cols);
  const int ohw = d.oh * d.ow;
  const int ckk = d.cg * d.k * d.k;
  for (int g = 0; g < d.groups; ++g) {
    CMapRM wm(w + static_cast<std::size_t>(g) * d.og * ckk, d.og, ckk);
    CMapRM cm(cols + static_cast<std::size_t>(g) * ckk * ohw, ckk, ohw);
    MapRM ym(y + static_cast<std::size_t>(g) * d.og * ohw, d.og, ohw);
    ym.noalias() = wm * cm;
  }
}

}  // namespace

int conv_out_extent(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) throw DimensionError("conv window larger than padded input");
  return span / stride + 1;
}

Tensor conv2d_value(const Tensor& x, const Tensor& w, const Conv2dParams& p) {
  const ConvDims d = conv_dims(x, w, p);
  Tensor y({d.n, d.cout, d.oh, d.ow});
  const std::size_t xs = static_cast<std::size_t>(d.c) * d.h * d.w;
  const std::size_t ys = static_cast<std::size_t>(d.cout) * d.oh * d.ow;
  const std::size_t colsz = static_cast<std::size_t>(d.c) * d.k * d.k * d.oh * d.ow;
  const int threads = std::min(kernel_threads(), d.n);
  std::vector<std::vector<float>> scratch(static_cast<std::size_t>(std::max(threads, 1)));
  if (threads <= 1) {
    scratch[0].resize(colsz);
    for (int n = 0; n < d.n; ++n)
      conv_forward_sample(x.data.data() + n * xs, w.data.data(), d, y.data.data() + n * ys,
                          scratch[0].data());
  } else {
    const int chunk = (d.n + threads - 1) / threads;
    std::vector<std::thread> pool;
    for (int tid = 0; tid < threads; ++tid) {
      scratch[static_cast<std::size_t>(tid)].resize(colsz);
      const int lo = tid * chunk, hi = std::min(d.n, lo + chunk);
      pool.emplace_back([&, lo, hi, tid] {
        for (int n = lo; n < hi; ++n)
          conv_forward_sample(x.data.data() + n * xs, w.data.data(), d, y.data.data() + n * ys,
                              scratch[static_cast<std::size_t>(tid)].data());
      });
    }
    for (auto& th : pool) th.join();
  }
  return y;
}

int conv2d(Tape& t, int x, int w, const Conv2dParams& p) {
  Tensor y = conv2d_value(t.val(x), t.val(w), p);
  return t.node(std::move(y), {x, w}, [x, w, p](Tape& tp, int self) {
    const Tensor& xv = tp.val(x);
    const Tensor& wv = tp.val(w);
    const Tensor& dy = tp.grad(self);
    const ConvDims d = conv_dims(xv, wv, p);
    const int ohw = d.oh * d.ow;
    const int ckk = d.cg * d.k * d.k;
    const std::size_t xs = static_cast<std::size_t>(d.c) * d.h * d.w;
    const std::size_t ys = static_cast<std::size_t>(d.cout) * d.oh * d.ow;
    std::vector<float> cols(static_cast<std::size_t>(d.c) * d.k * d.k * ohw);
    std::vector<float> dcols(cols.size());
    MatRM dw = MatRM::Zero(d.cout, ckk);
    const bool want_dx = tp.needs_grad(x);
    Tensor* dx = want_dx ? &tp.grad(x) : nullptr;
    for (int n = 0; n < d.n; ++n) {
      im2col(xv.data.data() + n * xs, d, cols.data());
      for (int g = 0; g < d.groups; ++g) {
        CMapRM dym(dy.data.data() + n * ys + static_cast<std::size_t>(g) * d.og * ohw, d.og, ohw);
        CMapRM cm(cols.data() + static_cast<std::size_t>(g) * ckk * ohw, ckk, ohw);
        MapRM dwm(dw.data() + static_cast<std::size_t>(g) * d.og * ckk, d.og, ckk);
        dwm.noalias() += dym * cm.transpose();
        if (want_dx) {
          CMapRM wm(wv.data.data() + static_cast<std::size_t>(g) * d.og * ckk, d.og, ckk);
          MapRM dcm(dcols.data() + static_cast<std::size_t>(g) * ckk * ohw, ckk, ohw);
          dcm.noalias() = wm.transpose() * dym;
        }
      }
      if (want_dx) col2im_add(dcols.data(), d, dx->data.data() + n * xs);
    }
    Tensor& gw = tp.grad(w);
    for (std::int64_t i = 0; i < gw.numel(); ++i) gw.data[static_cast<std::size_t>(i)] += dw.data()[i];
  });
}

Tensor linear_value(const Tensor& x, const Tensor& w, const Tensor* b) {
  if (x.ndim() != 2 || w.ndim() != 2) throw DimensionError("linear expects 2-D x and w");
  if (x.dim(1) != w.dim(1)) throw DimensionError("linear inner dimensions disagree");
  const int n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  if (b && (b->ndim() != 1 || b->dim(0) != dout))
    throw DimensionError("linear bias must be [D_out]");
  Tensor y({n, dout});
  CMapRM xm(x.data.data(), n, din);
  CMapRM wm(w.data.data(), dout, din);
  MapRM ym(y.data.data(), n, dout);
  ym.noalias() = xm * wm.transpose();
  if (b)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < dout; ++c) y.at2(r, c) += b->data[static_cast<std::size_t>(c)];
  return y;
}

int linear(Tape& t, int x, int w, std::optional<int> b) {
  Tensor y = linear_value(t.val(x), t.val(w), b ? &t.val(*b) : nullptr);
  std::vector<int> ins = b ? std::vector<int>{x, w, *b} : std::vector<int>{x, w};
  return t.node(std::move(y), std::move(ins), [x, w, b](Tape& tp, int self) {
    const Tensor& xv = tp.val(x);
    const Tensor& wv = tp.val(w);
    const Tensor& dy = tp.grad(self);
    const int n = xv.dim(0), din = xv.dim(1), dout = wv.dim(0);
    CMapRM dym(dy.data.data(), n, dout);
    CMapRM xm(xv.data.data(), n, din);
    CMapRM wm(wv.data.data(), dout, din);
    if (tp.needs_grad(x)) {
      MapRM dxm(tp.grad(x).data.data(), n, din);
      dxm.noalias() += dym * wm;
    }
    MapRM dwm(tp.grad(w).data.data(), dout, din);
    dwm.noalias() += dym.transpose() * xm;
    if (b) {
      Tensor& db = tp.grad(*b);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < dout; ++c) db.data[static_cast<std::size_t>(c)] += dy.at2(r, c);
    }
  });
}

int relu(Tape& t, int x) {
  Tensor y = t.val(x);
  for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
  return t.node(std::move(y), {x}, [x](Tape& tp, int self) {
    const Tensor& xv = tp.val(x);
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < dx.data.size(); ++i)
      if (xv.data[i] > 0.0f) dx.data[i] += dy.data[i];
  });
}

int hard_swish(Tape& t, int x) {
  Tensor y = t.val(x);
  for (auto& v : y.data) {
    const float r6 = std::min(std::max(v + 3.0f, 0.0f), 6.0f);
    v = v * r6 / 6.0f;
  }
  return t.node(std::move(y), {x}, [x](Tape& tp, int self) {
    const Tensor& xv = tp.val(x);
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      const float v = xv.data[i];
      float d;
      if (v <= -3.0f)
        d = 0.0f;
      else if (v >= 3.0f)
        d = 1.0f;
      else
        d = (2.0f * v + 3.0f) / 6.0f;
      dx.data[i] += dy.data[i] * d;
    }
  });
}

int global_avg_pool(Tape& t, int x) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 4) throw DimensionError("global_avg_pool expects N x C x H x W");
  const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      const float* src = xv.data.data() + (static_cast<std::size_t>(i) * c + j) * hw;
      for (int k = 0; k < hw; ++k) acc += src[k];
      y.at2(i, j) = static_cast<float>(acc / hw);
    }
  return t.node(std::move(y), {x}, [x, hw](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    const int n = dy.dim(0), c = dy.dim(1);
    const float inv = 1.0f / static_cast<float>(hw);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const float g = dy.at2(i, j) * inv;
        float* dst = dx.data.data() + (static_cast<std::size_t>(i) * c + j) * hw;
        for (int k = 0; k < hw; ++k) dst[k] += g;
      }
  });
}

namespace {

struct BNShape {
  int n, c, hw;
};

BNShape bn_shape(const Tensor& x) {
  if (x.ndim() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  if (x.ndim() == 2) return {x.dim(0), x.dim(1), 1};
  throw DimensionError("batch_norm expects a 2-D or 4-D tensor");
}

}  // namespace

int batch_norm(Tape& t, int x, int gamma, int beta, BatchNormBuffers& bufs, bool training,
               float momentum, float eps) {
  const Tensor& xv = t.val(x);
  const BNShape s = bn_shape(xv);
  const Tensor& gv = t.val(gamma);
  if (gv.numel() != s.c || t.val(beta).numel() != s.c || bufs.running_mean.numel() != s.c ||
      bufs.running_var.numel() != s.c)
    throw DimensionError("batch_norm parameter size does not match channels");

  auto xhat = std::make_shared<Tensor>(xv.shape);
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(s.c));
  const std::int64_t count = static_cast<std::int64_t>(s.n) * s.hw;

  std::vector<float> mean(static_cast<std::size_t>(s.c)), var(static_cast<std::size_t>(s.c));
  if (training) {
    if (count < 2) throw DimensionError("batch_norm needs more than one value per channel");
    for (int c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* src = xv.data.data() + (static_cast<std::size_t>(n) * s.c + c) * s.hw;
        for (int k = 0; k < s.hw; ++k) acc += src[k];
      }
      const double mu = acc / static_cast<double>(count);
      double vacc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* src = xv.data.data() + (static_cast<std::size_t>(n) * s.c + c) * s.hw;
        for (int k = 0; k < s.hw; ++k) {
          const double dv = src[k] - mu;
          vacc += dv * dv;
        }
      }
      mean[static_cast<std::size_t>(c)] = static_cast<float>(mu);
      var[static_cast<std::size_t>(c)] = static_cast<float>(vacc / static_cast<double>(count));
      auto& rm = bufs.running_mean.data[static_cast<std::size_t>(c)];
      auto& rv = bufs.running_var.data[static_cast<std::size_t>(c)];
      rm = (1.0f - momentum) * rm + momentum * mean[static_cast<std::size_t>(c)];
      rv = (1.0f - momentum) * rv + momentum * var[static_cast<std::size_t>(c)];
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[static_cast<std::size_t>(c)] = bufs.running_mean.data[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] = bufs.running_var.data[static_cast<std::size_t>(c)];
    }
  }

  Tensor y(xv.shape);
  const Tensor& bv = t.val(beta);
  for (int c = 0; c < s.c; ++c) {
    const float is = 1.0f / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
    (*inv_std)[static_cast<std::size_t>(c)] = is;
    const float g = gv.data[static_cast<std::size_t>(c)];
    const float b = bv.data[static_cast<std::size_t>(c)];
    const float mu = mean[static_cast<std::size_t>(c)];
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * s.hw;
      for (int k = 0; k < s.hw; ++k) {
        const float xh = (xv.data[off + k] - mu) * is;
        xhat->data[off + k] = xh;
        y.data[off + k] = g * xh + b;
      }
    }
  }

  return t.node(std::move(y), {x, gamma, beta},
                [x, gamma, beta, xhat, inv_std, s, count, training](Tape& tp, int self) {
                  const Tensor& dy = tp.grad(self);
                  const Tensor& gv = tp.val(gamma);
                  Tensor& dg = tp.grad(gamma);
                  Tensor& db = tp.grad(beta);
                  Tensor& dx = tp.grad(x);
                  for (int c = 0; c < s.c; ++c) {
                    double sum_dy = 0.0, sum_dy_xh = 0.0;
                    for (int n = 0; n < s.n; ++n) {
                      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * s.hw;
                      for (int k = 0; k < s.hw; ++k) {
                        sum_dy += dy.data[off + k];
                        sum_dy_xh += static_cast<double>(dy.data[off + k]) * xhat->data[off + k];
                      }
                    }
                    dg.data[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy_xh);
                    db.data[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy);
                    const float g = gv.data[static_cast<std::size_t>(c)];
                    const float is = (*inv_std)[static_cast<std::size_t>(c)];
                    const float mdy = static_cast<float>(sum_dy / static_cast<double>(count));
                    const float mdyxh = static_cast<float>(sum_dy_xh / static_cast<double>(count));
                    for (int n = 0; n < s.n; ++n) {
                      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * s.hw;
                      for (int k = 0; k < s.hw; ++k) {
                        const float d = training
                                            ? dy.data[off + k] - mdy - xhat->data[off + k] * mdyxh
                                            : dy.data[off + k];
                        dx.data[off + k] += g * is * d;
                      }
                    }
                  }
                });
}

std::vector<float> smoothed_targets(int num_classes, int true_class, float smoothing) {
  std::vector<float> q(static_cast<std::size_t>(num_classes),
                       smoothing / static_cast<float>(num_classes));
  q[static_cast<std::size_t>(true_class)] += 1.0f - smoothing;
  return q;
}

int cross_entropy_label_smoothed(Tape& t, int logits, const std::vector<int>& labels,
                                 float smoothing) {
  const Tensor& z = t.val(logits);
  if (z.ndim() != 2) throw DimensionError("cross entropy expects N x K logits");
  const int n = z.dim(0), k = z.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw DimensionError("label count does not match batch size");
  for (int lb : labels)
    if (lb < 0 || lb >= k) throw DimensionError("label outside class range");

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = z.data.data() + static_cast<std::size_t>(i) * k;
    float m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double se = 0.0;
    for (int j = 0; j < k; ++j) se += std::exp(static_cast<double>(row[j]) - m);
    const double lse = m + std::log(se);
    const auto q = smoothed_targets(k, labels[static_cast<std::size_t>(i)], smoothing);
    for (int j = 0; j < k; ++j) total -= q[static_cast<std::size_t>(j)] * (row[j] - lse);
  }
  Tensor loss = Tensor::scalar(static_cast<float>(total / n));

  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return t.node(std::move(loss), {logits}, [logits, labels_copy, smoothing](Tape& tp, int self) {
    const float g = tp.grad(self).data[0];
    const Tensor& z = tp.val(logits);
    const int n = z.dim(0), k = z.dim(1);
    Tensor& dz = tp.grad(logits);
    for (int i = 0; i < n; ++i) {
      const float* row = z.data.data() + static_cast<std::size_t>(i) * k;
      float m = row[0];
      for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
      double se = 0.0;
      for (int j = 0; j < k; ++j) se += std::exp(static_cast<double>(row[j]) - m);
      const auto q = smoothed_targets(k, (*labels_copy)[static_cast<std::size_t>(i)], smoothing);
      for (int j = 0; j < k; ++j) {
        const float p =
            static_cast<float>(std::exp(static_cast<double>(row[j]) - m) / se);
        dz.data[static_cast<std::size_t>(i) * k + j] +=
            g * (p - q[static_cast<std::size_t>(j)]) / static_cast<float>(n);
      }
    }
  });
}

namespace {

struct ChanView {
  int n, c, hw;
};

ChanView chan_view(const Tensor& x) {
  if (x.ndim() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  if (x.ndim() == 2) return {x.dim(0), x.dim(1), 1};
  throw DimensionError("channel ops expect a 2-D or 4-D tensor");
}

std::vector<int> with_channels(const Tensor& x, int c) {
  std::vector<int> s = x.shape;
  s[1] = c;
  return s;
}

}  // namespace

int slice_channels(Tape& t, int x, int c0, int c1) {
  const Tensor& xv = t.val(x);
  const ChanView v = chan_view(xv);
  if (c0 < 0 || c1 > v.c || c0 >= c1) throw DimensionError("bad channel slice window");
  Tensor y(with_channels(xv, c1 - c0));
  const int cs = c1 - c0;
  for (int n = 0; n < v.n; ++n)
    std::copy_n(xv.data.data() + (static_cast<std::size_t>(n) * v.c + c0) * v.hw,
                static_cast<std::size_t>(cs) * v.hw,
                y.data.data() + static_cast<std::size_t>(n) * cs * v.hw);
  return t.node(std::move(y), {x}, [x, c0, cs](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    const ChanView v = chan_view(dx);
    for (int n = 0; n < v.n; ++n) {
      const float* src = dy.data.data() + static_cast<std::size_t>(n) * cs * v.hw;
      float* dst = dx.data.data() + (static_cast<std::size_t>(n) * v.c + c0) * v.hw;
      for (std::size_t i = 0; i < static_cast<std::size_t>(cs) * v.hw; ++i) dst[i] += src[i];
    }
  });
}

int concat_channels(Tape& t, int a, int b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  const ChanView va = chan_view(av), vb = chan_view(bv);
  if (va.n != vb.n || va.hw != vb.hw || av.ndim() != bv.ndim())
    throw DimensionError("concat_channels operands disagree outside the channel axis");
  Tensor y(with_channels(av, va.c + vb.c));
  for (int n = 0; n < va.n; ++n) {
    std::copy_n(av.data.data() + static_cast<std::size_t>(n) * va.c * va.hw,
                static_cast<std::size_t>(va.c) * va.hw,
                y.data.data() + static_cast<std::size_t>(n) * (va.c + vb.c) * va.hw);
    std::copy_n(bv.data.data() + static_cast<std::size_t>(n) * vb.c * va.hw,
                static_cast<std::size_t>(vb.c) * va.hw,
                y.data.data() + (static_cast<std::size_t>(n) * (va.c + vb.c) + va.c) * va.hw);
  }
  return t.node(std::move(y), {a, b}, [a, b](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& da = tp.grad(a);
    Tensor& db = tp.grad(b);
    const ChanView va = chan_view(da), vb = chan_view(db);
    for (int n = 0; n < va.n; ++n) {
      const float* src = dy.data.data() + static_cast<std::size_t>(n) * (va.c + vb.c) * va.hw;
      float* pa = da.data.data() + static_cast<std::size_t>(n) * va.c * va.hw;
      float* pb = db.data.data() + static_cast<std::size_t>(n) * vb.c * va.hw;
      for (std::size_t i = 0; i < static_cast<std::size_t>(va.c) * va.hw; ++i) pa[i] += src[i];
      for (std::size_t i = 0; i < static_cast<std::size_t>(vb.c) * va.hw; ++i)
        pb[i] += src[static_cast<std::size_t>(va.c) * va.hw + i];
    }
  });
}

int slice1d(Tape& t, int x, int l0, int l1) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 1) throw DimensionError("slice1d expects a 1-D tensor");
  if (l0 < 0 || l1 > xv.dim(0) || l0 >= l1) throw DimensionError("bad slice1d window");
  Tensor y({l1 - l0});
  std::copy_n(xv.data.data() + l0, l1 - l0, y.data.data());
  return t.node(std::move(y), {x}, [x, l0](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[static_cast<std::size_t>(l0) + i] += dy.data[i];
  });
}

namespace {

struct BlockView {
  int o, i, kk;  // leading dim, second dim, trailing element count
};

BlockView block_view(const Tensor& w) {
  if (w.ndim() == 2) return {w.dim(0), w.dim(1), 1};
  if (w.ndim() == 4) return {w.dim(0), w.dim(1), w.dim(2) * w.dim(3)};
  throw DimensionError("slice_block expects a 2-D or 4-D tensor");
}

}  // namespace

int slice_block(Tape& t, int w, int o0, int o1, int i0, int i1) {
  const Tensor& wv = t.val(w);
  const BlockView v = block_view(wv);
  if (o0 < 0 || o1 > v.o || o0 >= o1 || i0 < 0 || i1 > v.i || i0 >= i1)
    throw DimensionError("bad slice_block window");
  std::vector<int> shape = wv.shape;
  shape[0] = o1 - o0;
  shape[1] = i1 - i0;
  Tensor y(shape);
  const int ic = i1 - i0;
  for (int o = o0; o < o1; ++o)
    for (int i = i0; i < i1; ++i)
      std::copy_n(wv.data.data() + (static_cast<std::size_t>(o) * v.i + i) * v.kk,
                  v.kk,
                  y.data.data() + (static_cast<std::size_t>(o - o0) * ic + (i - i0)) * v.kk);
  return t.node(std::move(y), {w}, [w, o0, i0](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dw = tp.grad(w);
    const BlockView v = block_view(dw);
    const BlockView s = block_view(dy);
    for (int o = 0; o < s.o; ++o)
      for (int i = 0; i < s.i; ++i) {
        const float* src = dy.data.data() + (static_cast<std::size_t>(o) * s.i + i) * v.kk;
        float* dst =
            dw.data.data() + (static_cast<std::size_t>(o + o0) * v.i + (i + i0)) * v.kk;
        for (int k = 0; k < v.kk; ++k) dst[k] += src[k];
      }
  });
}

int add(Tape& t, int a, int b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  require_same_shape(av, bv, "add");
  Tensor y = av;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += bv.data[i];
  return t.node(std::move(y), {a, b}, [a, b](Tape& tp, int self) {
    accumulate(tp.grad(a), tp.grad(self));
    accumulate(tp.grad(b), tp.grad(self));
  });
}

int scale(Tape& t, int x, float s) {
  Tensor y = t.val(x);
  for (auto& v : y.data) v *= s;
  return t.node(std::move(y), {x}, [x, s](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += s * dy.data[i];
  });
}

Tensor l1dist_conv_value(const Tensor& x, const Tensor& f, const Conv2dParams& p) {
  const ConvDims d = conv_dims(x, f, p);
  Tensor y({d.n, d.cout, d.oh, d.ow});
  parallel_for(d.n, [&](int n) {
    for (int g = 0; g < d.groups; ++g) {
      for (int oc = g * d.og; oc < (g + 1) * d.og; ++oc) {
        for (int oy = 0; oy < d.oh; ++oy) {
          for (int ox = 0; ox < d.ow; ++ox) {
            double acc = 0.0;
            for (int ic = 0; ic < d.cg; ++ic) {
              const int xc = g * d.cg + ic;
              for (int ky = 0; ky < d.k; ++ky) {
                const int iy = oy * d.stride + ky - d.pad;
                for (int kx = 0; kx < d.k; ++kx) {
                  const int ix = ox * d.stride + kx - d.pad;
                  const float xv = (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w)
                                       ? 0.0f
                                       : x.at4(n, xc, iy, ix);
                  acc -= std::abs(xv - f.at4(oc, ic, ky, kx));
                }
              }
            }
            y.at4(n, oc, oy, ox) = static_cast<float>(acc);
          }
        }
      }
    }
  });
  return y;
}

int l1dist_conv(Tape& t, int x, int f, const Conv2dParams& p) {
  Tensor y = l1dist_conv_value(t.val(x), t.val(f), p);
  return t.node(std::move(y), {x, f}, [x, f, p](Tape& tp, int self) {
    const Tensor& xv = tp.val(x);
    const Tensor& fv = tp.val(f);
    const Tensor& dy = tp.grad(self);
    const ConvDims d = conv_dims(xv, fv, p);
    Tensor& df = tp.grad(f);
    const bool want_dx = tp.needs_grad(x);
    Tensor* dx = want_dx ? &tp.grad(x) : nullptr;
    for (int n = 0; n < d.n; ++n) {
      for (int g = 0; g < d.groups; ++g) {
        for (int oc = g * d.og; oc < (g + 1) * d.og; ++oc) {
          for (int oy = 0; oy < d.oh; ++oy) {
            for (int ox = 0; ox < d.ow; ++ox) {
              const float gout = dy.at4(n, oc, oy, ox);
              if (gout == 0.0f) continue;
              for (int ic = 0; ic < d.cg; ++ic) {
                const int xc = g * d.cg + ic;
                for (int ky = 0; ky < d.k; ++ky) {
                  const int iy = oy * d.stride + ky - d.pad;
                  for (int kx = 0; kx < d.k; ++kx) {
                    const int ix = ox * d.stride + kx - d.pad;
                    const bool inside = !(iy < 0 || iy >= d.h || ix < 0 || ix >= d.w);
                    const float xval = inside ? xv.at4(n, xc, iy, ix) : 0.0f;
                    const float fval = fv.at4(oc, ic, ky, kx);
                    const float diff = xval - fval;
                    const float sgn = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
                    df.at4(oc, ic, ky, kx) += gout * sgn;
                    if (want_dx && inside) {
                      const float clipped = std::min(1.0f, std::max(-1.0f, -diff));
                      dx->at4(n, xc, iy, ix) += gout * clipped;
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw DimensionError("argmax_rows expects N x K");
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (logits.at2(i, j) > logits.at2(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace mfnn
