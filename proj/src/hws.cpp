#include "mfnn/hws.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>

#include "mfnn/distributions.hpp"

namespace mfnn {

namespace {
constexpr double kCpfClamp = 1e-12;
}

GaussianStats fit_gaussian(const Tensor& w) {
  if (w.numel() < 2) throw DegenerateDistributionError("need at least two samples");
  double acc = 0.0;
  for (float v : w.data) acc += v;
  const double mean = acc / static_cast<double>(w.numel());
  double vacc = 0.0;
  for (float v : w.data) vacc += (v - mean) * (v - mean);
  const double var = vacc / static_cast<double>(w.numel());
  if (var <= 0.0) throw DegenerateDistributionError("constant tensor has no spread");
  return {mean, std::sqrt(var)};
}

LaplacePrior fit_laplace(const Tensor& w) {
  if (w.numel() < 2) throw DegenerateDistributionError("need at least two samples");
  std::vector<float> sorted(w.data);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double med = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double mad = 0.0;
  for (float v : w.data) mad += std::abs(v - med);
  mad /= static_cast<double>(n);
  if (mad <= 0.0) throw DegenerateDistributionError("constant tensor has no spread");
  return {med, mad};
}

double cpf_gaussian(double x, const GaussianStats& g) {
  if (g.stddev <= 0.0) throw DomainError("gaussian stddev must be positive");
  return normal_cdf((x - g.mean) / g.stddev);
}

double ppf_laplace(double p, const LaplacePrior& l) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("ppf_laplace requires p in (0,1)");
  p = std::clamp(p, kCpfClamp, 1.0 - kCpfClamp);
  return laplace_ppf(p, l.location, l.scale);
}

double remap_r(double x, const GaussianStats& g, const LaplacePrior& l) {
  const double p = std::clamp(cpf_gaussian(x, g), kCpfClamp, 1.0 - kCpfClamp);
  return laplace_ppf(p, l.location, l.scale);
}

double remap_r_deriv(double x, const GaussianStats& g, const LaplacePrior& l) {
  const double p = cpf_gaussian(x, g);
  if (p <= kCpfClamp || p >= 1.0 - kCpfClamp) return 0.0;  // flat past the clamp
  const double dp_dx = normal_pdf((x - g.mean) / g.stddev) / g.stddev;
  const double dppf_dp = p < 0.5 ? l.scale / p : l.scale / (1.0 - p);
  return dp_dx * dppf_dp;
}

double remap_r_inverse(double y, const GaussianStats& g, const LaplacePrior& l) {
  const double p = std::clamp(laplace_cdf(y, l.location, l.scale), kCpfClamp, 1.0 - kCpfClamp);
  return g.mean + g.stddev * normal_ppf(p);
}

RemapNet RemapNet::identity_net(int dim) {
  std::vector<double> m(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) m[static_cast<std::size_t>(i) * dim + i] = 1.0;
  return from_linear(m, std::vector<double>(static_cast<std::size_t>(dim), 0.0), dim);
}

RemapNet RemapNet::from_linear(const std::vector<double>& m, const std::vector<double>& c,
                               int dim) {
  if (static_cast<int>(m.size()) != dim * dim || static_cast<int>(c.size()) != dim)
    throw DimensionError("linear embedding size mismatch");
  RemapNet net;
  net.dim = dim;
  net.w1 = Tensor::zeros({8 * dim, dim});
  net.b1 = Tensor::zeros({8 * dim});
  net.w2 = Tensor::zeros({dim, 8 * dim});
  net.b2 = Tensor::zeros({dim});
  for (int i = 0; i < dim; ++i) {
    net.w1.at2(i, i) = 1.0f;
    for (int j = 0; j < dim; ++j)
      net.w2.at2(i, j) = static_cast<float>(m[static_cast<std::size_t>(i) * dim + j]);
    net.b2.data[static_cast<std::size_t>(i)] = static_cast<float>(c[static_cast<std::size_t>(i)]);
  }
  net.frozen = true;
  return net;
}

void RemapNet::apply_fc(const float* in, float* out) const {
  const int hid = 8 * dim;
  std::vector<float> h(static_cast<std::size_t>(hid));
  for (int i = 0; i < hid; ++i) {
    double acc = b1.data[static_cast<std::size_t>(i)];
    for (int j = 0; j < dim; ++j) acc += static_cast<double>(w1.at2(i, j)) * in[j];
    h[static_cast<std::size_t>(i)] = static_cast<float>(acc);
  }
  for (int i = 0; i < dim; ++i) {
    double acc = b2.data[static_cast<std::size_t>(i)];
    for (int j = 0; j < hid; ++j) acc += static_cast<double>(w2.at2(i, j)) * h[static_cast<std::size_t>(j)];
    out[i] = static_cast<float>(acc);
  }
}

std::vector<float> RemapNet::effective_matrix() const {
  std::vector<float> m(static_cast<std::size_t>(dim) * dim, 0.0f);
  const int hid = 8 * dim;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (int k = 0; k < hid; ++k)
        acc += static_cast<double>(w2.at2(i, k)) * w1.at2(k, j);
      m[static_cast<std::size_t>(i) * dim + j] = static_cast<float>(acc);
    }
  return m;
}

std::vector<float> RemapNet::effective_offset() const {
  std::vector<float> c(static_cast<std::size_t>(dim));
  const int hid = 8 * dim;
  for (int i = 0; i < dim; ++i) {
    double acc = b2.data[static_cast<std::size_t>(i)];
    for (int k = 0; k < hid; ++k)
      acc += static_cast<double>(w2.at2(i, k)) * b1.data[static_cast<std::size_t>(k)];
    c[static_cast<std::size_t>(i)] = static_cast<float>(acc);
  }
  return c;
}

namespace {

void check_remap_inputs(const Tensor& w, const RemapNet& net, RemapMode mode, bool training) {
  if (mode == RemapMode::Identity) return;
  if (net.dim <= 0) throw ConfigError("remap net has no dimension");
  if (w.numel() % net.dim != 0)
    throw AlignmentError("weight numel is not a multiple of the remap slice length");
  if (training && !net.frozen)
    throw ContractError("remap net must be frozen during augmented training");
}

}  // namespace

Tensor remap(const Tensor& w, const RemapNet& net, const GaussianStats& g, const LaplacePrior& l,
             RemapMode mode, bool training) {
  check_remap_inputs(w, net, mode, training);
  if (mode == RemapMode::Identity) return w;
  Tensor out(w.shape);
  const int d = net.dim;
  const std::int64_t rows = w.numel() / d;
  std::vector<float> fc(static_cast<std::size_t>(d));
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* in = w.data.data() + r * d;
    net.apply_fc(in, fc.data());
    float* o = out.data.data() + r * d;
    for (int i = 0; i < d; ++i) {
      const double mapped = remap_r(fc[static_cast<std::size_t>(i)], g, l);
      o[i] = mode == RemapMode::Bias ? in[i] + static_cast<float>(mapped)
                                     : static_cast<float>(mapped);
    }
  }
  return out;
}

int remap_op(Tape& t, int w, const RemapNet& net, const GaussianStats& g, const LaplacePrior& l,
             RemapMode mode, bool training) {
  const Tensor& wv = t.val(w);
  check_remap_inputs(wv, net, mode, training);
  if (mode == RemapMode::Identity) {
    Tensor y = wv;
    return t.node(std::move(y), {w},
                  [w](Tape& tp, int self) { accumulate(tp.grad(w), tp.grad(self)); });
  }

  const int d = net.dim;
  const std::int64_t rows = wv.numel() / d;
  auto fc_vals = std::make_shared<std::vector<float>>(wv.data.size());
  {
    for (std::int64_t r = 0; r < rows; ++r)
      net.apply_fc(wv.data.data() + r * d, fc_vals->data() + r * d);
  }
  Tensor y(wv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double mapped = remap_r((*fc_vals)[i], g, l);
    y.data[i] = mode == RemapMode::Bias ? wv.data[i] + static_cast<float>(mapped)
                                        : static_cast<float>(mapped);
  }
  auto eff_m = std::make_shared<std::vector<float>>(net.effective_matrix());
  return t.node(std::move(y), {w}, [w, fc_vals, eff_m, g, l, d, rows, mode](Tape& tp, int self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dw = tp.grad(w);
    std::vector<float> tmp(static_cast<std::size_t>(d));
    for (std::int64_t r = 0; r < rows; ++r) {
      const float* gy = dy.data.data() + r * d;
      const float* u = fc_vals->data() + r * d;
      float* gw = dw.data.data() + r * d;
      for (int i = 0; i < d; ++i)
        tmp[static_cast<std::size_t>(i)] =
            static_cast<float>(remap_r_deriv(u[i], g, l)) * gy[i];
      // gw += M^T * (r'(u) . gy), plus the skip path in bias mode
      for (int j = 0; j < d; ++j) {
        double acc = mode == RemapMode::Bias ? gy[j] : 0.0;
        for (int i = 0; i < d; ++i)
          acc += static_cast<double>((*eff_m)[static_cast<std::size_t>(i) * d + j]) *
                 tmp[static_cast<std::size_t>(i)];
        gw[j] += static_cast<float>(acc);
      }
    }
  });
}

void linear_least_squares(const std::vector<float>& x, const std::vector<float>& y, int rows,
                          int dim, std::vector<double>& m_out, std::vector<double>& c_out) {
  // Augmented design [X 1]; solves the normal equations with a tiny ridge.
  using Mat = Eigen::MatrixXd;
  Mat A(rows, dim + 1);
  Mat T(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < dim; ++j) {
      A(r, j) = x[static_cast<std::size_t>(r) * dim + j];
      T(r, j) = y[static_cast<std::size_t>(r) * dim + j];
    }
    A(r, dim) = 1.0;
  }
  Mat G = A.transpose() * A;
  G.diagonal().array() += 1e-9;
  Mat sol = G.ldlt().solve(A.transpose() * T);  // (dim+1) x dim
  m_out.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  c_out.assign(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m_out[static_cast<std::size_t>(i) * dim + j] = sol(j, i);
    c_out[static_cast<std::size_t>(i)] = sol(dim, i);
  }
}

namespace {

// Full-batch gradient descent with backtracking on mean squared error, so the
// recorded loss trace is non-increasing.
void fit_linear_gd(const std::vector<float>& x, const std::vector<float>& t, int rows, int dim,
                   const RemapFitOptions& opts, std::vector<double>& m, std::vector<double>& c,
                   std::vector<double>& losses) {
  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  Mat X(rows, dim), T(rows, dim);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < dim; ++j) {
      X(r, j) = x[static_cast<std::size_t>(r) * dim + j];
      T(r, j) = t[static_cast<std::size_t>(r) * dim + j];
    }
  Mat M = Mat::Zero(dim, dim);
  Vec C = T.colwise().mean();
  const double inv_n = 1.0 / rows;
  auto loss_of = [&](const Mat& Mm, const Vec& Cc) {
    const Mat R = X * Mm.transpose() + Vec::Ones(rows) * Cc.transpose() - T;
    return R.squaredNorm() * inv_n / dim + opts.ridge * Mm.squaredNorm() / dim;
  };
  double lr = opts.init_lr;
  double loss = loss_of(M, C);
  losses.push_back(loss);
  for (int it = 0; it < opts.iterations; ++it) {
    const Mat R = X * M.transpose() + Vec::Ones(rows) * C.transpose() - T;
    const Mat gM = (2.0 * inv_n / dim) * R.transpose() * X + (2.0 * opts.ridge / dim) * M;
    const Vec gC = (2.0 * inv_n / dim) * R.colwise().sum().transpose();
    double trial_loss = loss;
    Mat Mn;
    Vec Cn;
    for (int bt = 0; bt < 40; ++bt) {
      Mn = M - lr * gM;
      Cn = C - lr * gC;
      trial_loss = loss_of(Mn, Cn);
      if (trial_loss <= loss) break;
      lr *= 0.5;
    }
    if (trial_loss > loss) break;  // fully stalled
    M = Mn;
    C = Cn;
    loss = trial_loss;
    losses.push_back(loss);
  }
  m.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  c.assign(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m[static_cast<std::size_t>(i) * dim + j] = M(i, j);
    c[static_cast<std::size_t>(i)] = C(i);
  }
}

}  // namespace

RemapPretrainResult pretrain_remapper(const std::vector<Tensor>& src,
                                      const std::vector<Tensor>& dst,
                                      const RemapFitOptions& opts) {
  if (src.size() != dst.size() || src.empty())
    throw PairingError("paired weight lists must be non-empty and equal-length");
  for (std::size_t i = 0; i < src.size(); ++i)
    if (!src[i].same_shape(dst[i])) throw PairingError("paired layers differ in shape");

  Tensor all_src({1});
  all_src.data.clear();
  Tensor all_dst({1});
  all_dst.data.clear();
  for (std::size_t i = 0; i < src.size(); ++i) {
    all_src.data.insert(all_src.data.end(), src[i].data.begin(), src[i].data.end());
    all_dst.data.insert(all_dst.data.end(), dst[i].data.begin(), dst[i].data.end());
  }
  all_src.shape = {static_cast<int>(all_src.data.size())};
  all_dst.shape = {static_cast<int>(all_dst.data.size())};

  RemapPretrainResult res;
  res.source_stats = fit_gaussian(all_src);
  res.prior = opts.prior_source == RemapFitOptions::PriorSource::TargetWeights
                  ? fit_laplace(all_dst)
                  : opts.fixed_prior;

  // Group per kernel-slice length; one frozen net per shape class.
  std::map<int, std::pair<std::vector<float>, std::vector<float>>> classes;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int d = static_cast<int>(src[i].numel() / src[i].dim(0));
    auto& [xs, ts] = classes[d];
    for (std::int64_t e = 0; e < src[i].numel(); ++e) {
      xs.push_back(src[i].data[static_cast<std::size_t>(e)]);
      const double resid = static_cast<double>(dst[i].data[static_cast<std::size_t>(e)]) -
                           src[i].data[static_cast<std::size_t>(e)];
      ts.push_back(static_cast<float>(remap_r_inverse(resid, res.source_stats, res.prior)));
    }
  }
  for (auto& [d, xy] : classes) {
    const int rows = static_cast<int>(xy.first.size()) / d;
    std::vector<double> m, c;
    fit_linear_gd(xy.first, xy.second, rows, d, opts, m, c, res.loss_history);
    res.nets[d] = RemapNet::from_linear(m, c, d);
  }
  return res;
}

}  // namespace mfnn
