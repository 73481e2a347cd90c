#pragma once

#include <map>
#include <vector>

#include "mfnn/tape.hpp"

namespace mfnn {

struct GaussianStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct LaplacePrior {
  double location = 0.0;
  double scale = 1.0;
};

// Sample mean and population standard deviation; throws
// DegenerateDistributionError for fewer than two or all-equal elements.
GaussianStats fit_gaussian(const Tensor& w);

// Laplace maximum-likelihood fit: location = median, scale = mean |x - u|.
LaplacePrior fit_laplace(const Tensor& w);

double cpf_gaussian(double x, const GaussianStats& g);
// Exact Laplace quantile; p must lie in (0,1), values within 1e-12 of the
// edges are clamped before the log.
double ppf_laplace(double p, const LaplacePrior& l);

// Monotone distribution transfer r = ppf_l . cpf_g with the CPF clamped to
// [1e-12, 1 - 1e-12].
double remap_r(double x, const GaussianStats& g, const LaplacePrior& l);
double remap_r_deriv(double x, const GaussianStats& g, const LaplacePrior& l);
// Inverse transfer (Gaussian quantile of the Laplace CDF).
double remap_r_inverse(double y, const GaussianStats& g, const LaplacePrior& l);

enum class RemapMode { Identity, Bias, Direct };

// Frozen residual corrector: two dense maps, dim -> 8*dim -> dim. The pair is
// fitted as one linear map and embedded, so apply() is linear in its input.
struct RemapNet {
  int dim = 0;
  Tensor w1, b1;  // [8d, d], [8d]
  Tensor w2, b2;  // [d, 8d], [d]
  bool frozen = false;

  static RemapNet identity_net(int dim);
  // Embeds y = M x + c (M row-major d x d).
  static RemapNet from_linear(const std::vector<double>& m, const std::vector<double>& c, int dim);

  // FC over one kernel slice; in/out length dim.
  void apply_fc(const float* in, float* out) const;
  // Effective d x d matrix W2 * W1 (row-major) and offset.
  std::vector<float> effective_matrix() const;
  std::vector<float> effective_offset() const;
};

// W_used for one weight tensor whose kernel slices have length net.dim:
//   Identity: w
//   Bias:     w + r(FC(w))
//   Direct:   r(FC(w))
// `training` enforces the frozen-net contract.
Tensor remap(const Tensor& w, const RemapNet& net, const GaussianStats& g, const LaplacePrior& l,
             RemapMode mode, bool training = false);

// Differentiable version for the training graph; the net itself is a frozen
// constant, gradients flow to w only.
int remap_op(Tape& t, int w, const RemapNet& net, const GaussianStats& g, const LaplacePrior& l,
             RemapMode mode, bool training = true);

struct RemapFitOptions {
  int iterations = 200;
  double init_lr = 1.0;
  // L2 penalty on the linear map (the offset stays free); element pairing
  // between independently trained models is mostly noise, so the matrix is
  // kept small unless the data insists.
  double ridge = 1e-3;
  // Where the Laplace prior comes from: the target-family weights (adder
  // operators, whose weights are Laplace-shaped), or a fixed small-variance
  // prior (shift operators, which sit near the source weights).
  enum class PriorSource { TargetWeights, Fixed } prior_source = PriorSource::TargetWeights;
  LaplacePrior fixed_prior{0.0, 0.05};
};

struct RemapPretrainResult {
  std::map<int, RemapNet> nets;  // keyed by kernel-slice length (shape class)
  GaussianStats source_stats;
  LaplacePrior prior;
  std::vector<double> loss_history;  // concatenated per-class GD traces
};

// Fits the frozen residual maps from paired per-layer weights of a
// multiplicative model (src) and a directly trained multiplication-free model
// (dst). Regression targets are the residuals pulled back through r, so the
// applied bias r(FC(w)) reproduces the residual.
RemapPretrainResult pretrain_remapper(const std::vector<Tensor>& src,
                                      const std::vector<Tensor>& dst,
                                      const RemapFitOptions& opts = {});

// Closed-form check value used when picking apart the GD fit: ridge-free
// normal-equation solution of the same regression for one shape class.
void linear_least_squares(const std::vector<float>& x, const std::vector<float>& y, int rows,
                          int dim, std::vector<double>& m_out, std::vector<double>& c_out);

// Per-operator-family remap assets shared across layers of one shape class.
struct RemapBank {
  std::map<int, RemapNet> nets;
  LaplacePrior prior;
  GaussianStats source_stats;
};

}  // namespace mfnn
