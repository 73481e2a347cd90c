#include "mfnn/optim.hpp"

#include <cmath>

namespace mfnn {

double cosine_lr(double lr0, std::int64_t step, std::int64_t horizon) {
  if (horizon <= 0) return lr0;
  if (step >= horizon) return 0.0;
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(horizon)));
}

int SgdOptimizer::register_param(std::vector<int> shape) {
  momentum_.push_back(Tensor::zeros(std::move(shape)));
  return static_cast<int>(momentum_.size()) - 1;
}

double SgdOptimizer::current_lr() const { return cosine_lr(cfg_.lr, step_, cfg_.cosine_horizon); }

void SgdOptimizer::apply(int index, Tensor& param, const Tensor& grad, bool decay) {
  require_same_shape(param, grad, "optimizer update");
  Tensor& buf = momentum_[static_cast<std::size_t>(index)];
  require_same_shape(param, buf, "momentum buffer");
  const float lr = static_cast<float>(current_lr());
  const float wd = decay ? cfg_.weight_decay : 0.0f;
  const float mu = cfg_.momentum;
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    float g = grad.data[i] + wd * param.data[i];
    if (mu != 0.0f) {
      buf.data[i] = mu * buf.data[i] + g;
      g = cfg_.nesterov ? g + mu * buf.data[i] : buf.data[i];
    }
    param.data[i] -= lr * g;
  }
}

}  // namespace mfnn
